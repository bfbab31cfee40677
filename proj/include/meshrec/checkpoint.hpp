#pragma once

// Checkpoint = directory of TNSR tensors plus a manifest.json naming every
// parameter; the manifest also carries an arbitrary config echo so a model can
// be rebuilt before loading values.

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "meshrec/nn.hpp"
#include "meshrec/tensor.hpp"

namespace meshrec {

namespace detail {
inline std::string safe_filename(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')
                   ? c
                   : '_';
    return out;
}
}  // namespace detail

template <class Real>
void save_checkpoint(ParamStore<Real>& store, const std::string& dir,
                     const nlohmann::json& config = nlohmann::json::object()) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["dtype"] = dtype_name<Real>::value;
    manifest["config"] = config;
    manifest["params"] = nlohmann::json::array();
    for (Parameter<Real>* p : store.all()) {
        const std::string file = detail::safe_filename(p->name) + ".tnsr";
        write_tensor((std::filesystem::path(dir) / file).string(), p->value);
        manifest["params"].push_back({{"name", p->name}, {"file", file}, {"shape", p->value.shape()}});
    }
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir);
    out << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("read_manifest: no manifest.json in " + dir);
    nlohmann::json j;
    in >> j;
    return j;
}

// Loads values into an already-built store; every store parameter must appear
// in the manifest with a matching shape.
template <class Real>
void load_checkpoint(ParamStore<Real>& store, const std::string& dir) {
    const nlohmann::json manifest = read_manifest(dir);
    std::map<std::string, std::string> files;
    for (const auto& e : manifest.at("params"))
        files[e.at("name").get<std::string>()] = e.at("file").get<std::string>();
    for (Parameter<Real>* p : store.all()) {
        auto it = files.find(p->name);
        if (it == files.end())
            throw std::runtime_error("load_checkpoint: parameter " + p->name + " missing in " + dir);
        Tensor<Real> t = read_tensor<Real>((std::filesystem::path(dir) / it->second).string());
        if (!(t.shape() == p->value.shape()))
            throw std::runtime_error("load_checkpoint: shape mismatch for " + p->name);
        p->value = std::move(t);
    }
}

}  // namespace meshrec
