#pragma once

// Coarse-to-fine mesh decoder. Each level runs a mesh-conv layer: map image
// features onto the current vertices (pixel-aligned sampling or one of the
// global-feature baselines), concatenate with the vertex features carried from
// the coarser level, run the spiral-convolution blocks, optionally a multi-head
// self-attention pass, then a per-vertex linear head that predicts the offset
// added to the current vertex positions. Between levels both positions and
// features are unpooled with the precomputed barycentric matrices.

#include <stdexcept>
#include <string>
#include <vector>

#include "meshrec/encoder.hpp"
#include "meshrec/hierarchy.hpp"
#include "meshrec/nn.hpp"
#include "meshrec/spiral.hpp"
#include "meshrec/tape.hpp"

namespace meshrec {

enum class MappingMode { pixel_aligned, global_repeat, global_mlp };

inline std::string to_string(MappingMode m) {
    switch (m) {
        case MappingMode::pixel_aligned: return "pixel_aligned";
        case MappingMode::global_repeat: return "global_repeat";
        case MappingMode::global_mlp: return "global_mlp";
    }
    throw std::invalid_argument("bad mapping mode");
}

inline MappingMode mapping_mode_from_string(const std::string& s) {
    if (s == "pixel_aligned") return MappingMode::pixel_aligned;
    if (s == "global_repeat") return MappingMode::global_repeat;
    if (s == "global_mlp") return MappingMode::global_mlp;
    throw std::invalid_argument("unknown mapping mode '" + s + "'");
}

struct DecoderConfig {
    int levels = 4;                                  // must match the hierarchy
    std::vector<int> spiral_lengths = {27, 27, 27, 27};  // per level, finest first
    std::vector<int> widths = {8, 16, 32, 64};           // per level, finest first
    int blocks_per_level = 2;
    bool attention = true;
    int heads = 4;
    MappingMode mapping = MappingMode::pixel_aligned;
    bool sample_grad_coords = true;
    std::vector<double> level_loss_weights = {1.0, 0.5, 0.25, 0.25};  // finest first
    // offset head output is multiplied by this; keeps learned weights unit
    // scale while vertex geometry lives in millimeters
    double offset_scale = 100.0;

    void validate() const {
        if (levels < 1) throw std::invalid_argument("DecoderConfig: levels >= 1");
        if (static_cast<int>(spiral_lengths.size()) != levels ||
            static_cast<int>(widths.size()) != levels ||
            static_cast<int>(level_loss_weights.size()) != levels)
            throw std::invalid_argument("DecoderConfig: per-level lists must match levels");
        if (blocks_per_level < 1) throw std::invalid_argument("DecoderConfig: blocks >= 1");
        for (int w : widths)
            if (w < 1) throw std::invalid_argument("DecoderConfig: widths must be positive");
    }
};

// The template chain entry point: vertices of the coarsest hierarchy level.
inline Tensor<double> init_template(const MeshHierarchy& hier) {
    if (hier.levels.empty()) throw std::invalid_argument("init_template: empty hierarchy");
    return vertices_tensor(hier.levels.back());
}

// Baseline vertex-feature construction from a single global vector [1, c]:
// repeat copies it to every vertex, mlp maps it to N*c and reshapes.
template <class Real>
typename Tape<Real>::Id global_feature_mapping(Tape<Real>& t, typename Tape<Real>::Id global_vec,
                                               MappingMode mode, int n_vertices,
                                               typename Tape<Real>::Id mlp_w = -1,
                                               typename Tape<Real>::Id mlp_b = -1) {
    const int c = t.value(global_vec).dim(1);
    if (mode == MappingMode::global_repeat) return t.repeat_rows(global_vec, n_vertices);
    if (mode == MappingMode::global_mlp) {
        if (mlp_w < 0) throw std::invalid_argument("global_feature_mapping: mlp weights required");
        const auto flat = linear(t, global_vec, mlp_w, mlp_b);  // [1, n*c]
        return t.reshape(flat, {n_vertices, c});
    }
    throw std::invalid_argument("global_feature_mapping: mode must be a global baseline");
}

template <class Real>
struct Decoder {
    using Id = typename Tape<Real>::Id;

    DecoderConfig cfg;
    const MeshHierarchy* hier = nullptr;
    std::vector<std::vector<int>> gather;  // per level, flat spiral indices

    struct LevelParams {
        std::vector<Parameter<Real>*> block_w, block_b;
        Parameter<Real>*wq = nullptr, *wk = nullptr, *wv = nullptr, *wo = nullptr;
        Parameter<Real>*offset_w = nullptr, *offset_b = nullptr;
        Parameter<Real>*map_w = nullptr, *map_b = nullptr;  // global_mlp only
    };
    std::vector<LevelParams> levels;  // finest first

    struct Result {
        std::vector<Id> meshes;    // per level vertex arrays [N_s, 3], finest first
        std::vector<Id> features;  // per level vertex features, finest first
    };

    static Decoder build(ParamStore<Real>& store, DecoderConfig cfg, const MeshHierarchy& hier,
                         const std::vector<SpiralTable>& spirals,
                         const std::string& prefix = "dec.") {
        cfg.validate();
        if (hier.level_count() != cfg.levels)
            throw std::invalid_argument("Decoder: hierarchy level count mismatch");
        if (static_cast<int>(spirals.size()) != cfg.levels)
            throw std::invalid_argument("Decoder: one spiral table per level required");

        Decoder d;
        d.cfg = cfg;
        d.hier = &hier;
        d.levels.resize(static_cast<size_t>(cfg.levels));
        for (int s = 0; s < cfg.levels; ++s) {
            const SpiralTable& table = spirals[static_cast<size_t>(s)];
            if (table.length != cfg.spiral_lengths[static_cast<size_t>(s)])
                throw std::invalid_argument("Decoder: spiral table length mismatch at level " +
                                            std::to_string(s));
            if (static_cast<int>(table.rows.size()) !=
                hier.levels[static_cast<size_t>(s)].vertex_count())
                throw std::invalid_argument("Decoder: spiral table rows mismatch at level " +
                                            std::to_string(s));
            d.gather.push_back(spiral_gather_indices(table));

            LevelParams& lp = d.levels[static_cast<size_t>(s)];
            const std::string base = prefix + "l" + std::to_string(s) + ".";
            const int c = cfg.widths[static_cast<size_t>(s)];
            const int l = cfg.spiral_lengths[static_cast<size_t>(s)];
            const int carried = s == cfg.levels - 1 ? 0 : cfg.widths[static_cast<size_t>(s) + 1];
            for (int bl = 0; bl < cfg.blocks_per_level; ++bl) {
                const int ci = bl == 0 ? c + carried : c;
                lp.block_w.push_back(&store.create_glorot(base + "block" + std::to_string(bl) + ".w",
                                                          {l * ci, c}, l * ci, c));
                lp.block_b.push_back(&store.create_zeros(base + "block" + std::to_string(bl) + ".b",
                                                         {c}));
            }
            if (cfg.attention) {
                if (c % cfg.heads != 0)
                    throw std::invalid_argument("Decoder: width not divisible by heads");
                lp.wq = &store.create_glorot(base + "attn.wq", {c, c}, c, c);
                lp.wk = &store.create_glorot(base + "attn.wk", {c, c}, c, c);
                lp.wv = &store.create_glorot(base + "attn.wv", {c, c}, c, c);
                lp.wo = &store.create_glorot(base + "attn.wo", {c, c}, c, c);
            }
            lp.offset_w = &store.create_glorot(base + "offset.w", {c, 3}, c, 3);
            lp.offset_b = &store.create_zeros(base + "offset.b", {3});
            if (cfg.mapping == MappingMode::global_mlp) {
                const int n = hier.levels[static_cast<size_t>(s)].vertex_count();
                lp.map_w = &store.create_glorot(base + "map.w", {c, n * c}, c, n * c);
                lp.map_b = &store.create_zeros(base + "map.b", {n * c});
            }
        }
        return d;
    }

    // fused: encoder pyramid, level-indexed like the hierarchy (0 = finest)
    Result forward(Tape<Real>& t, const std::vector<FeatMap<Real>>& fused,
                   const Camera& cam) const {
        if (static_cast<int>(fused.size()) != cfg.levels)
            throw std::invalid_argument("decode: pyramid level count mismatch");
        for (int s = 0; s < cfg.levels; ++s)
            if (cfg.mapping == MappingMode::pixel_aligned &&
                fused[static_cast<size_t>(s)].c != cfg.widths[static_cast<size_t>(s)])
                throw std::invalid_argument("decode: fused channels do not match decoder widths");

        Result res;
        res.meshes.resize(static_cast<size_t>(cfg.levels));
        res.features.resize(static_cast<size_t>(cfg.levels));

        Id v = t.constant(init_template(*hier).template cast<Real>());
        Id carried = -1;
        for (int s = cfg.levels - 1; s >= 0; --s) {
            const LevelParams& lp = levels[static_cast<size_t>(s)];
            const FeatMap<Real>& q = fused[static_cast<size_t>(s)];
            const int n = hier->levels[static_cast<size_t>(s)].vertex_count();

            const Id g = map_features(t, q, v, cam, lp, n);
            Id x = carried < 0 ? g : t.concat_cols(g, carried);
            for (int bl = 0; bl < cfg.blocks_per_level; ++bl)
                x = t.relu(spiral_conv(t, x, gather[static_cast<size_t>(s)],
                                       cfg.spiral_lengths[static_cast<size_t>(s)],
                                       t.param(*lp.block_w[static_cast<size_t>(bl)]),
                                       t.param(*lp.block_b[static_cast<size_t>(bl)])));
            if (cfg.attention)
                x = t.add(x, mhsa(t, x, t.param(*lp.wq), t.param(*lp.wk), t.param(*lp.wv),
                                  t.param(*lp.wo), cfg.heads));

            const Id delta =
                t.scale(linear(t, x, t.param(*lp.offset_w), t.param(*lp.offset_b)), cfg.offset_scale);
            v = t.add(v, delta);
            res.meshes[static_cast<size_t>(s)] = v;
            res.features[static_cast<size_t>(s)] = x;

            if (s > 0) {
                v = t.spmm_op(hier->up[static_cast<size_t>(s) - 1], v);
                carried = t.spmm_op(hier->up[static_cast<size_t>(s) - 1], x);
            }
        }
        return res;
    }

private:
    Id map_features(Tape<Real>& t, const FeatMap<Real>& q, Id vertices, const Camera& cam,
                    const LevelParams& lp, int n) const {
        if (cfg.mapping == MappingMode::pixel_aligned) {
            Id uv = t.project_points(vertices, cam);
            Tensor<Real> sc({2}), sh({2});
            sc[0] = static_cast<Real>(static_cast<double>(q.w) / cam.width);
            sc[1] = static_cast<Real>(static_cast<double>(q.h) / cam.height);
            sh[0] = sh[1] = Real(-0.5);
            Id grid = t.add_rowvec(t.mul_rowvec(uv, t.constant(sc)), t.constant(sh));
            if (!cfg.sample_grad_coords) grid = t.detach(grid);
            return t.grid_sample(q.id, grid);
        }
        const Id flat = t.reshape(q.id, {q.h * q.w, q.c});
        const Id global_vec = t.mean_rows(flat);
        return global_feature_mapping(t, global_vec, cfg.mapping, n,
                                      lp.map_w ? t.param(*lp.map_w) : -1,
                                      lp.map_b ? t.param(*lp.map_b) : -1);
    }
};

}  // namespace meshrec
