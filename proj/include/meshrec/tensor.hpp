#pragma once

// Dense row-major tensor of float or double plus the TNSR file format:
//   "TNSR" | uint32 LE header length | JSON header {"dtype","shape"} | raw LE payload

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace meshrec {

template <class Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(compute_numel(shape_)), Real(0));
    }

    Tensor(std::vector<int> shape, std::vector<Real> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != compute_numel(shape_))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, Real v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    std::vector<Real>& raw() { return data_; }
    const std::vector<Real>& raw() const { return data_; }

    Real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    Real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2D access, shape [rows, cols]
    Real& operator()(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    Real operator()(int i, int j) const { return data_[static_cast<size_t>(i) * dim(1) + j]; }

    // 3D access, shape [d0, d1, d2]
    Real& operator()(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    Real operator()(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    // 4D access, shape [d0, d1, d2, d3]
    Real& operator()(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    Real operator()(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    int rows() const { return dim(0); }
    int cols() const { return dim(1); }

    Tensor reshaped(std::vector<int> shape) const {
        if (compute_numel(shape) != numel())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool all_finite() const {
        for (Real v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class Other>
    Tensor<Other> cast() const {
        Tensor<Other> t;
        t = Tensor<Other>(shape_);
        for (size_t i = 0; i < data_.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<Other>(data_[i]);
        return t;
    }

    static int64_t compute_numel(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<Real> data_;
};

template <class Real>
struct dtype_name;
template <>
struct dtype_name<float> {
    static constexpr const char* value = "f32";
};
template <>
struct dtype_name<double> {
    static constexpr const char* value = "f64";
};

template <class Real>
void write_tensor(const std::string& path, const Tensor<Real>& t) {
    nlohmann::json header;
    header["dtype"] = dtype_name<Real>::value;
    header["shape"] = t.shape();
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_tensor: cannot open " + path);
    out.write("TNSR", 4);
    const uint32_t hlen = static_cast<uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(Real))));
    if (!out) throw std::runtime_error("write_tensor: write failed for " + path);
}

template <class Real>
Tensor<Real> read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_tensor: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TNSR", 4) != 0)
        throw std::runtime_error("read_tensor: bad magic in " + path);
    uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    if (!in || hlen == 0 || hlen > (1u << 20))
        throw std::runtime_error("read_tensor: bad header length in " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    if (!in) throw std::runtime_error("read_tensor: truncated header in " + path);

    const nlohmann::json header = nlohmann::json::parse(hs);
    const std::string dtype = header.at("dtype").get<std::string>();
    const std::vector<int> shape = header.at("shape").get<std::vector<int>>();
    const int64_t n = Tensor<Real>::compute_numel(shape);

    auto read_payload = [&](auto tag) {
        using Stored = decltype(tag);
        std::vector<Stored> buf(static_cast<size_t>(n));
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * static_cast<int64_t>(sizeof(Stored))));
        if (!in) throw std::runtime_error("read_tensor: truncated payload in " + path);
        Tensor<Real> t(shape);
        for (int64_t i = 0; i < n; ++i) t[i] = static_cast<Real>(buf[static_cast<size_t>(i)]);
        return t;
    };
    if (dtype == "f32") return read_payload(float{});
    if (dtype == "f64") return read_payload(double{});
    throw std::runtime_error("read_tensor: unsupported dtype '" + dtype + "' in " + path);
}

}  // namespace meshrec
