#pragma once

// Model assembly (encoder + decoder over one parameter store), the training
// loop (full forward, total loss, backward, Adam, single step-decay schedule)
// and evaluation. Deliberately single-threaded: with a fixed seed the
// checkpoint bytes are a pure function of (config, dataset).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshrec/adam.hpp"
#include "meshrec/checkpoint.hpp"
#include "meshrec/dataset.hpp"
#include "meshrec/decoder.hpp"
#include "meshrec/encoder.hpp"
#include "meshrec/losses.hpp"
#include "meshrec/metrics.hpp"
#include "meshrec/train_config.hpp"

namespace meshrec {

template <class Real>
struct Model {
    TrainConfig cfg;
    TriMesh tmpl;
    MeshHierarchy hier;
    std::vector<SpiralTable> spirals;
    ParamStore<Real> store;
    Encoder<Real> enc;
    Decoder<Real> dec;

    Model(const TrainConfig& config, TriMesh template_mesh, MeshHierarchy hierarchy,
          std::vector<SpiralTable> spiral_tables)
        : cfg(config),
          tmpl(std::move(template_mesh)),
          hier(std::move(hierarchy)),
          spirals(std::move(spiral_tables)),
          store(config.seed) {
        cfg.validate();
        enc = Encoder<Real>::build(store, cfg.encoder);
        dec = Decoder<Real>::build(store, cfg.decoder, hier, spirals);
        if (cfg.decoder.mapping == MappingMode::pixel_aligned &&
            cfg.decoder.widths != cfg.encoder.channels)
            throw std::invalid_argument("Model: decoder widths must match encoder channels");
    }
};

template <class Real>
struct SampleForward {
    typename Tape<Real>::Id total = -1;
    typename Tape<Real>::Id finest_mesh = -1;
    double mesh_part = 0, edge_part = 0, normal_part = 0, sil_part = 0, pose_part = 0;
    double total_value = 0;
};

// One full forward pass: encode, decode, all losses. `loss_scale` divides the
// contribution (1/batch for training).
template <class Real>
SampleForward<Real> forward_sample(Model<Real>& model, Tape<Real>& t, const Sample& sample,
                                   double loss_scale = 1.0) {
    const auto image = t.constant(sample.image.template cast<Real>());
    const auto enc_out = model.enc.forward(t, image);
    const auto dec_out = model.dec.forward(t, enc_out.fused, sample.cam);

    std::vector<typename Tape<Real>::Id> preds;
    std::vector<Tensor<Real>> gts;
    for (int s = 0; s < model.cfg.decoder.levels; ++s) {
        preds.push_back(dec_out.meshes[static_cast<size_t>(s)]);
        gts.push_back(sample.gt_levels[static_cast<size_t>(s)].template cast<Real>());
    }

    TriMesh gt_fine;
    gt_fine.vertices = tensor_vertices(sample.gt_levels[0]);
    gt_fine.faces = model.hier.levels[0].faces;

    SampleForward<Real> out;
    const auto mesh_part = mesh_l1<Real>(t, preds, gts, model.cfg.weights.level);
    const auto edge_part = edge_loss(t, dec_out.meshes[0], gt_fine);
    const auto normal_part = normal_loss(t, dec_out.meshes[0], gt_fine);
    const auto sil_part =
        bce_heatmap(t, t.reshape(enc_out.sil_logits.id, sample.sil.shape()),
                    sample.sil.template cast<Real>());
    const auto pose_part =
        bce_heatmap(t, t.reshape(enc_out.pose_logits.id, sample.pose.shape()),
                    sample.pose.template cast<Real>());
    const auto total =
        t.scale(total_loss(t, mesh_part, edge_part, normal_part, sil_part, pose_part,
                           model.cfg.weights),
                loss_scale);

    out.total = total;
    out.finest_mesh = dec_out.meshes[0];
    out.mesh_part = static_cast<double>(t.value(mesh_part)[0]);
    out.edge_part = static_cast<double>(t.value(edge_part)[0]);
    out.normal_part = static_cast<double>(t.value(normal_part)[0]);
    out.sil_part = static_cast<double>(t.value(sil_part)[0]);
    out.pose_part = static_cast<double>(t.value(pose_part)[0]);
    out.total_value = static_cast<double>(t.value(total)[0]) / loss_scale;
    return out;
}

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double total = 0, mesh = 0, edge = 0, normal = 0, sil = 0, pose = 0;
    int steps = 0;
};

inline nlohmann::json epoch_log_json(const EpochLog& e) {
    return {{"epoch", e.epoch}, {"lr", e.lr},         {"total", e.total}, {"mesh", e.mesh},
            {"edge", e.edge},   {"normal", e.normal}, {"sil", e.sil},     {"pose", e.pose},
            {"steps", e.steps}};
}

struct TrainResult {
    std::vector<EpochLog> log;
    int steps_run = 0;
};

template <class Real>
TrainResult train_model(Model<Real>& model, const SyntheticDataset& data) {
    const TrainConfig& cfg = model.cfg;
    if (data.samples.empty()) throw std::invalid_argument("train: empty dataset");

    const auto params = model.store.all();
    AdamState<Real> adam = AdamState<Real>::init(params);
    TrainResult result;

    std::ofstream log_stream;
    if (!cfg.log_path.empty()) {
        log_stream.open(cfg.log_path);
        if (!log_stream) throw std::runtime_error("train: cannot open log " + cfg.log_path);
    }

    detail::SplitMix64 shuffle_rng{cfg.seed ^ 0x5851f42d4c957f2dull};
    std::vector<size_t> order(data.samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int steps = 0;
    double lr = cfg.learning_rate;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch == cfg.decay_epoch) lr = cfg.learning_rate * cfg.decay_factor;
        // deterministic Fisher-Yates
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(shuffle_rng.next() % i);
            std::swap(order[i - 1], order[j]);
        }

        EpochLog log{};
        log.epoch = epoch;
        log.lr = lr;
        for (size_t base = 0; base < order.size(); base += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), base + static_cast<size_t>(cfg.batch_size));
            const double scale = 1.0 / static_cast<double>(end - base);
            model.store.zero_grads();
            double batch_total = 0;
            for (size_t bi = base; bi < end; ++bi) {
                Tape<Real> tape(cfg.check_finite);
                const auto fw = forward_sample(model, tape, data.samples[order[bi]], scale);
                if (!std::isfinite(fw.total_value))
                    throw std::runtime_error("train: non-finite loss in batch starting at sample " +
                                             std::to_string(base));
                tape.backward(fw.total);
                batch_total += fw.total_value * scale;
                log.mesh += fw.mesh_part;
                log.edge += fw.edge_part;
                log.normal += fw.normal_part;
                log.sil += fw.sil_part;
                log.pose += fw.pose_part;
            }
            adam_step(params, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
            log.total += batch_total;
            ++log.steps;
            ++steps;
            if (cfg.max_steps > 0 && steps >= cfg.max_steps) break;
        }
        const double per_sample = 1.0 / static_cast<double>(order.size());
        log.mesh *= per_sample;
        log.edge *= per_sample;
        log.normal *= per_sample;
        log.sil *= per_sample;
        log.pose *= per_sample;
        log.total /= std::max(1, log.steps);
        result.log.push_back(log);
        if (log_stream) log_stream << epoch_log_json(log).dump() << '\n';
        if (cfg.max_steps > 0 && steps >= cfg.max_steps) break;
    }
    result.steps_run = steps;

    if (!cfg.checkpoint_dir.empty())
        save_checkpoint(model.store, cfg.checkpoint_dir, train_config_json(cfg));
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
    std::vector<PaMetrics> per_sample;
    std::vector<double> f5, f15;
    double pa_mpjpe = 0, pa_mpvpe = 0, mean_f5 = 0, mean_f15 = 0;
};

template <class Real>
Tensor<double> predict_finest(Model<Real>& model, const Sample& sample) {
    Tape<Real> tape(model.cfg.check_finite);
    const auto image = tape.constant(sample.image.template cast<Real>());
    const auto enc_out = model.enc.forward(tape, image);
    const auto dec_out = model.dec.forward(tape, enc_out.fused, sample.cam);
    return tape.value(dec_out.meshes[0]).template cast<double>();
}

template <class Real>
EvalReport evaluate_model(Model<Real>& model, const SyntheticDataset& data,
                          const SparseMatrix& regressor) {
    EvalReport rep;
    for (const Sample& s : data.samples) {
        const Tensor<double> pred = predict_finest(model, s);
        rep.per_sample.push_back(pa_metrics(pred, s.gt_levels[0], regressor));
        rep.f5.push_back(f_score(to_points(pred), to_points(s.gt_levels[0]), 5.0));
        rep.f15.push_back(f_score(to_points(pred), to_points(s.gt_levels[0]), 15.0));
    }
    const double n = static_cast<double>(data.samples.size());
    for (size_t i = 0; i < rep.per_sample.size(); ++i) {
        rep.pa_mpjpe += rep.per_sample[i].pa_mpjpe / n;
        rep.pa_mpvpe += rep.per_sample[i].pa_mpvpe / n;
        rep.mean_f5 += rep.f5[i] / n;
        rep.mean_f15 += rep.f15[i] / n;
    }
    return rep;
}

inline nlohmann::json eval_report_json(const EvalReport& rep) {
    nlohmann::json j;
    j["pa_mpjpe"] = rep.pa_mpjpe;
    j["pa_mpvpe"] = rep.pa_mpvpe;
    j["f5"] = rep.mean_f5;
    j["f15"] = rep.mean_f15;
    j["per_sample"] = nlohmann::json::array();
    for (size_t i = 0; i < rep.per_sample.size(); ++i)
        j["per_sample"].push_back({{"pa_mpjpe", rep.per_sample[i].pa_mpjpe},
                                   {"pa_mpvpe", rep.per_sample[i].pa_mpvpe},
                                   {"f5", rep.f5[i]},
                                   {"f15", rep.f15[i]}});
    return j;
}

inline std::string eval_report_table(const EvalReport& rep) {
    char buf[256];
    std::string out = "metric      value\n----------  ---------\n";
    std::snprintf(buf, sizeof(buf), "PA-MPJPE    %9.4f mm\n", rep.pa_mpjpe);
    out += buf;
    std::snprintf(buf, sizeof(buf), "PA-MPVPE    %9.4f mm\n", rep.pa_mpvpe);
    out += buf;
    std::snprintf(buf, sizeof(buf), "F@5mm       %9.4f\n", rep.mean_f5);
    out += buf;
    std::snprintf(buf, sizeof(buf), "F@15mm      %9.4f\n", rep.mean_f15);
    out += buf;
    return out;
}

}  // namespace meshrec
