#pragma once

// Parameter store with pinned deterministic initialization, the learnable
// layers used by the encoder/decoder, and central-difference gradient checking.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshrec/spiral.hpp"
#include "meshrec/tape.hpp"

namespace meshrec {

namespace detail {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64: pinned generator so initialization is reproducible across
// platforms and parameter creation order
struct SplitMix64 {
    uint64_t state;
    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

}  // namespace detail

template <class Real>
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 1) : seed_(seed) {}

    // uniform in +-sqrt(6 / (fan_in + fan_out)); the stream is keyed on the
    // parameter name so creation order does not matter
    Parameter<Real>& create_glorot(const std::string& name, std::vector<int> shape, int fan_in,
                                   int fan_out) {
        Tensor<Real> t(shape);
        detail::SplitMix64 rng{seed_ ^ detail::fnv1a(name)};
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<Real>((2.0 * rng.uniform01() - 1.0) * limit);
        return insert(name, std::move(t));
    }

    Parameter<Real>& create_zeros(const std::string& name, std::vector<int> shape) {
        return insert(name, Tensor<Real>(std::move(shape)));
    }

    Parameter<Real>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
        return *params_[it->second];
    }

    const Parameter<Real>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
        return *params_[it->second];
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Parameter<Real>*> all() {
        std::vector<Parameter<Real>*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }

    void zero_grads() {
        for (auto& p : params_) p->zero_grad();
    }

    uint64_t seed() const { return seed_; }

private:
    Parameter<Real>& insert(const std::string& name, Tensor<Real> t) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
        params_.push_back(std::make_unique<Parameter<Real>>(name, std::move(t)));
        index_[name] = params_.size() - 1;
        return *params_.back();
    }

    uint64_t seed_;
    std::vector<std::unique_ptr<Parameter<Real>>> params_;
    std::map<std::string, size_t> index_;
};

// ---------------------------------------------------------------------------
// Layers

// X W + b; pass b = -1 to skip the bias
template <class Real>
typename Tape<Real>::Id linear(Tape<Real>& t, typename Tape<Real>::Id x,
                               typename Tape<Real>::Id w, typename Tape<Real>::Id b = -1) {
    auto y = t.matmul(x, w);
    return b < 0 ? y : t.add_rowvec(y, b);
}

// Eq-style fusion: per-position channel concat of two aligned maps followed by
// a kernel-size-1 convolution (a pixelwise linear map). Inputs are [hw, c].
template <class Real>
typename Tape<Real>::Id conv1d_fuse(Tape<Real>& t, typename Tape<Real>::Id f,
                                    typename Tape<Real>::Id h, typename Tape<Real>::Id w) {
    if (t.value(f).dim(0) != t.value(h).dim(0))
        throw std::invalid_argument("conv1d_fuse: spatial size mismatch");
    return t.matmul(t.concat_cols(f, h), w);
}

// flat [v * l] gather index row block for a spiral table
inline std::vector<int> spiral_gather_indices(const SpiralTable& table) {
    std::vector<int> idx;
    idx.reserve(table.rows.size() * static_cast<size_t>(table.length));
    for (const auto& row : table.rows) {
        if (static_cast<int>(row.size()) != table.length)
            throw std::invalid_argument("spiral table: ragged row");
        idx.insert(idx.end(), row.begin(), row.end());
    }
    return idx;
}

// Spiral convolution: gather the l ordered neighbors of every vertex (sentinel
// -1 contributes a zero feature), flatten to [n, l*c], apply a linear map.
template <class Real>
typename Tape<Real>::Id spiral_conv(Tape<Real>& t, typename Tape<Real>::Id x,
                                    const std::vector<int>& gather_idx, int spiral_len,
                                    typename Tape<Real>::Id w, typename Tape<Real>::Id b = -1) {
    const int n = t.value(x).dim(0), c = t.value(x).dim(1);
    if (static_cast<int>(gather_idx.size()) != n * spiral_len)
        throw std::invalid_argument("spiral_conv: table does not match feature count");
    if (t.value(w).dim(0) != spiral_len * c)
        throw std::invalid_argument("spiral_conv: weight rows != l * c_in");
    auto gathered = t.gather_rows(x, gather_idx);            // [n*l, c]
    auto flat = t.reshape(gathered, {n, spiral_len * c});    // row v = its l neighbor features
    return linear(t, flat, w, b);
}

// Multi-head scaled dot-product self-attention over token rows, no positional
// encoding; c must be divisible by the head count.
template <class Real>
typename Tape<Real>::Id mhsa(Tape<Real>& t, typename Tape<Real>::Id x,
                             typename Tape<Real>::Id wq, typename Tape<Real>::Id wk,
                             typename Tape<Real>::Id wv, typename Tape<Real>::Id wo, int heads) {
    const int c = t.value(x).dim(1);
    if (heads < 1 || c % heads != 0)
        throw std::invalid_argument("mhsa: channels not divisible by heads");
    const int dh = c / heads;
    auto q = t.matmul(x, wq), k = t.matmul(x, wk), v = t.matmul(x, wv);
    typename Tape<Real>::Id concat = -1;
    for (int hh = 0; hh < heads; ++hh) {
        auto qh = t.slice_cols(q, hh * dh, (hh + 1) * dh);
        auto kh = t.slice_cols(k, hh * dh, (hh + 1) * dh);
        auto vh = t.slice_cols(v, hh * dh, (hh + 1) * dh);
        auto scores = t.scale(t.matmul(qh, t.transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        auto attn = t.softmax_rows(scores);
        auto oh = t.matmul(attn, vh);
        concat = concat < 0 ? oh : t.concat_cols(concat, oh);
    }
    return t.matmul(concat, wo);
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
};

// Central differences against the tape gradients. `build` must reconstruct the
// forward pass from the current parameter values and return the scalar loss id.
// Relative error uses max(|analytic|, |numeric|, 1e-3) as denominator so tiny
// gradients are compared absolutely.
template <class Real>
GradCheckReport grad_check(const std::function<typename Tape<Real>::Id(Tape<Real>&)>& build,
                           std::vector<Parameter<Real>*> params, double eps = 1e-5) {
    static_assert(std::is_same_v<Real, double>, "grad_check requires 64-bit mode");
    for (auto* p : params) p->zero_grad();
    {
        Tape<Real> tape;
        const auto loss = build(tape);
        tape.backward(loss);
    }
    std::vector<Tensor<Real>> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    auto eval = [&]() {
        Tape<Real> tape;
        return static_cast<double>(tape.value(build(tape))[0]);
    };

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<Real>& p = *params[pi];
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            const Real saved = p.value[i];
            p.value[i] = saved + static_cast<Real>(eps);
            const double up = eval();
            p.value[i] = saved - static_cast<Real>(eps);
            const double dn = eval();
            p.value[i] = saved;
            const double numeric = (up - dn) / (2 * eps);
            const double a = static_cast<double>(analytic[pi][i]);
            const double err =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return report;
}

}  // namespace meshrec
