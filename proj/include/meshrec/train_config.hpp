#pragma once

// Training configuration and its JSON form. Every field has a default; a
// config file only lists what it overrides. Paper-scale optimizer defaults:
// Adam at 1e-4, decay 0.1 at epoch 35, batch 64, 50 epochs.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "meshrec/decoder.hpp"
#include "meshrec/encoder.hpp"
#include "meshrec/losses.hpp"

namespace meshrec {

struct TrainConfig {
    uint64_t seed = 1;
    int epochs = 50;
    int batch_size = 64;
    double learning_rate = 1e-4;
    int decay_epoch = 35;
    double decay_factor = 0.1;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::string dtype = "f32";  // "f32" or "f64"
    int max_steps = 0;          // 0 = run all epochs
    bool check_finite = true;

    LossWeights weights;
    EncoderConfig encoder;
    DecoderConfig decoder;

    std::string template_path, hierarchy_path, spirals_path, regressor_path;
    std::string dataset_dir, checkpoint_dir, log_path;

    void validate() const {
        if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning rate > 0");
        if (decay_factor <= 0 || decay_factor > 1)
            throw std::invalid_argument("TrainConfig: decay factor in (0,1]");
        if (epochs < 0 || batch_size < 1) throw std::invalid_argument("TrainConfig: bad loop sizes");
        if (dtype != "f32" && dtype != "f64")
            throw std::invalid_argument("TrainConfig: dtype must be f32 or f64");
        encoder.validate();
        decoder.validate();
        if (static_cast<int>(weights.level.size()) != decoder.levels)
            throw std::invalid_argument("TrainConfig: one mesh-loss weight per level");
    }
};

inline nlohmann::json encoder_config_json(const EncoderConfig& c) {
    return {{"levels", c.levels},
            {"channels", c.channels},
            {"image_channels", c.image_channels},
            {"keypoints", c.keypoints}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.levels = j.value("levels", c.levels);
    c.channels = j.value("channels", c.channels);
    c.image_channels = j.value("image_channels", c.image_channels);
    c.keypoints = j.value("keypoints", c.keypoints);
    return c;
}

inline nlohmann::json decoder_config_json(const DecoderConfig& c) {
    return {{"levels", c.levels},
            {"spiral_lengths", c.spiral_lengths},
            {"widths", c.widths},
            {"blocks_per_level", c.blocks_per_level},
            {"attention", c.attention},
            {"heads", c.heads},
            {"mapping_mode", to_string(c.mapping)},
            {"sample_grad_coords", c.sample_grad_coords},
            {"level_loss_weights", c.level_loss_weights},
            {"offset_scale", c.offset_scale}};
}

inline DecoderConfig decoder_config_from_json(const nlohmann::json& j) {
    DecoderConfig c;
    c.levels = j.value("levels", c.levels);
    c.spiral_lengths = j.value("spiral_lengths", c.spiral_lengths);
    c.widths = j.value("widths", c.widths);
    c.blocks_per_level = j.value("blocks_per_level", c.blocks_per_level);
    c.attention = j.value("attention", c.attention);
    c.heads = j.value("heads", c.heads);
    c.mapping = mapping_mode_from_string(j.value("mapping_mode", to_string(c.mapping)));
    c.sample_grad_coords = j.value("sample_grad_coords", c.sample_grad_coords);
    c.level_loss_weights = j.value("level_loss_weights", c.level_loss_weights);
    c.offset_scale = j.value("offset_scale", c.offset_scale);
    return c;
}

inline nlohmann::json train_config_json(const TrainConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["decay_epoch"] = c.decay_epoch;
    j["decay_factor"] = c.decay_factor;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["dtype"] = c.dtype;
    j["max_steps"] = c.max_steps;
    j["check_finite"] = c.check_finite;
    j["weights"] = loss_weights_json(c.weights);
    j["encoder"] = encoder_config_json(c.encoder);
    j["decoder"] = decoder_config_json(c.decoder);
    j["template_path"] = c.template_path;
    j["hierarchy_path"] = c.hierarchy_path;
    j["spirals_path"] = c.spirals_path;
    j["regressor_path"] = c.regressor_path;
    j["dataset_dir"] = c.dataset_dir;
    j["checkpoint_dir"] = c.checkpoint_dir;
    j["log_path"] = c.log_path;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.decay_epoch = j.value("decay_epoch", c.decay_epoch);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.dtype = j.value("dtype", c.dtype);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.check_finite = j.value("check_finite", c.check_finite);
    if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
    if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"));
    if (j.contains("decoder")) c.decoder = decoder_config_from_json(j.at("decoder"));
    c.template_path = j.value("template_path", c.template_path);
    c.hierarchy_path = j.value("hierarchy_path", c.hierarchy_path);
    c.spirals_path = j.value("spirals_path", c.spirals_path);
    c.regressor_path = j.value("regressor_path", c.regressor_path);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
    c.log_path = j.value("log_path", c.log_path);
    return c;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_train_config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return train_config_from_json(j);
}

}  // namespace meshrec
