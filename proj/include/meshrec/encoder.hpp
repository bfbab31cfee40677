#pragma once

// Hourglass 2D feature extractor: stride-2 convolutions down, nearest-neighbor
// upsample + convolution up, additive skips. Every pyramid level pairs a
// down-path map F_s with an up-path map H_s of the same size; the fused maps
// Q_s feed the mesh decoder, the two auxiliary heads (silhouette, keypoint
// heatmaps) read the finest up-path map. Also hosts the plain-data helpers that
// build those auxiliary targets: gaussian heatmaps and a point-in-triangle
// silhouette rasterizer.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "meshrec/camera.hpp"
#include "meshrec/mesh.hpp"
#include "meshrec/nn.hpp"
#include "meshrec/tape.hpp"

namespace meshrec {

struct EncoderConfig {
    int levels = 4;                              // pyramid depth S
    std::vector<int> channels = {8, 16, 32, 64};  // per level, finest first
    int image_channels = 3;
    int keypoints = 5;

    void validate() const {
        if (levels < 1) throw std::invalid_argument("EncoderConfig: levels >= 1 required");
        if (static_cast<int>(channels.size()) != levels)
            throw std::invalid_argument("EncoderConfig: one channel width per level required");
        if (keypoints < 1) throw std::invalid_argument("EncoderConfig: keypoints >= 1");
    }
};

// one 2D map on the tape, stored [h, w, c]
template <class Real>
struct FeatMap {
    typename Tape<Real>::Id id = -1;
    int h = 0, w = 0, c = 0;
};

template <class Real>
struct Encoder {
    using Id = typename Tape<Real>::Id;

    EncoderConfig cfg;
    Parameter<Real>*stem_w, *stem_b;
    std::vector<Parameter<Real>*> down_w, down_b;
    std::vector<Parameter<Real>*> up_w, up_b;
    std::vector<Parameter<Real>*> fuse_w;
    Parameter<Real>*sil_w, *sil_b, *pose_w, *pose_b;

    struct Output {
        std::vector<FeatMap<Real>> down;   // F_s, finest first
        std::vector<FeatMap<Real>> up;     // H_s
        std::vector<FeatMap<Real>> fused;  // Q_s
        FeatMap<Real> sil_logits;          // [h0, w0, 1]
        FeatMap<Real> pose_logits;         // [h0, w0, J]
    };

    static Encoder build(ParamStore<Real>& store, EncoderConfig cfg,
                         const std::string& prefix = "enc.") {
        cfg.validate();
        Encoder e;
        e.cfg = cfg;
        const auto& ch = cfg.channels;
        auto conv = [&](const std::string& name, int k, int ci, int co) {
            return &store.create_glorot(prefix + name + ".w", {k, k, ci, co}, k * k * ci,
                                        k * k * co);
        };
        auto bias = [&](const std::string& name, int co) {
            return &store.create_zeros(prefix + name + ".b", {co});
        };
        e.stem_w = conv("stem", 3, cfg.image_channels, ch[0]);
        e.stem_b = bias("stem", ch[0]);
        for (int s = 0; s < cfg.levels; ++s) {
            const int ci = s == 0 ? ch[0] : ch[s - 1];
            e.down_w.push_back(conv("down" + std::to_string(s), 3, ci, ch[s]));
            e.down_b.push_back(bias("down" + std::to_string(s), ch[s]));
        }
        for (int s = 0; s < cfg.levels; ++s) {
            const int ci = s == cfg.levels - 1 ? ch[s] : ch[s + 1];
            e.up_w.push_back(conv("up" + std::to_string(s), 3, ci, ch[s]));
            e.up_b.push_back(bias("up" + std::to_string(s), ch[s]));
        }
        for (int s = 0; s < cfg.levels; ++s)
            e.fuse_w.push_back(&store.create_glorot(prefix + "fuse" + std::to_string(s) + ".w",
                                                    {2 * ch[s], ch[s]}, 2 * ch[s], ch[s]));
        e.sil_w = conv("sil", 1, ch[0], 1);
        e.sil_b = bias("sil", 1);
        e.pose_w = conv("pose", 1, ch[0], cfg.keypoints);
        e.pose_b = bias("pose", cfg.keypoints);
        return e;
    }

    Output forward(Tape<Real>& t, Id image) const {
        const auto& shape = t.value(image).shape();
        if (shape.size() != 3 || shape[2] != cfg.image_channels)
            throw std::invalid_argument("encode: image must be [H,W," +
                                        std::to_string(cfg.image_channels) + "]");
        const int div = 1 << (cfg.levels + 1);
        if (shape[0] % div != 0 || shape[1] % div != 0)
            throw std::invalid_argument("encode: image side not divisible by 2^(levels+1)");

        Output out;
        auto block = [&](Id x, Parameter<Real>* w, Parameter<Real>* b, int stride) {
            return t.add_channel_bias(t.conv2d(x, t.param(*w), stride, 1), t.param(*b));
        };

        Id x = t.relu(block(image, stem_w, stem_b, 2));
        for (int s = 0; s < cfg.levels; ++s) {
            x = t.relu(block(x, down_w[static_cast<size_t>(s)], down_b[static_cast<size_t>(s)], 2));
            const auto& sh = t.value(x).shape();
            out.down.push_back({x, sh[0], sh[1], sh[2]});
        }

        out.up.resize(static_cast<size_t>(cfg.levels));
        Id h = -1;
        for (int s = cfg.levels - 1; s >= 0; --s) {
            Id in = s == cfg.levels - 1 ? out.down.back().id : t.upsample2x(h);
            Id conv = block(in, up_w[static_cast<size_t>(s)], up_b[static_cast<size_t>(s)], 1);
            if (s < cfg.levels - 1) conv = t.add(conv, out.down[static_cast<size_t>(s)].id);
            h = t.relu(conv);
            const auto& sh = t.value(h).shape();
            out.up[static_cast<size_t>(s)] = {h, sh[0], sh[1], sh[2]};
        }

        for (int s = 0; s < cfg.levels; ++s) {
            const FeatMap<Real>& f = out.down[static_cast<size_t>(s)];
            const FeatMap<Real>& u = out.up[static_cast<size_t>(s)];
            const Id ff = t.reshape(f.id, {f.h * f.w, f.c});
            const Id uu = t.reshape(u.id, {u.h * u.w, u.c});
            const Id q = conv1d_fuse(t, ff, uu, t.param(*fuse_w[static_cast<size_t>(s)]));
            out.fused.push_back({t.reshape(q, {f.h, f.w, f.c}), f.h, f.w, f.c});
        }

        const FeatMap<Real>& h0 = out.up[0];
        const Id sil = t.add_channel_bias(t.conv2d(h0.id, t.param(*sil_w), 1, 0), t.param(*sil_b));
        const Id pose = t.add_channel_bias(t.conv2d(h0.id, t.param(*pose_w), 1, 0), t.param(*pose_b));
        out.sil_logits = {sil, h0.h, h0.w, 1};
        out.pose_logits = {pose, h0.h, h0.w, cfg.keypoints};
        return out;
    }
};

// ---------------------------------------------------------------------------
// Auxiliary-target construction (plain data, no gradients)

// Per-channel unnormalized gaussian bumps. Keypoints are given in map grid
// coordinates (pixel centers at integers); the bump is rescaled so the pixel
// center nearest the keypoint reads exactly 1. Off-map keypoints leave their
// clipped tail.
inline Tensor<double> gaussian_heatmap(const std::vector<Eigen::Vector2d>& keypoints, double sigma,
                                       int h, int w) {
    if (sigma <= 0) throw std::invalid_argument("gaussian_heatmap: sigma must be positive");
    const int j = static_cast<int>(keypoints.size());
    Tensor<double> out({h, w, j});
    for (int k = 0; k < j; ++k) {
        const double kx = keypoints[static_cast<size_t>(k)].x();
        const double ky = keypoints[static_cast<size_t>(k)].y();
        const double rx = std::round(kx), ry = std::round(ky);
        const double peak = std::exp(-((rx - kx) * (rx - kx) + (ry - ky) * (ry - ky)) /
                                     (2 * sigma * sigma));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double d2 = (x - kx) * (x - kx) + (y - ky) * (y - ky);
                out(y, x, k) = std::exp(-d2 / (2 * sigma * sigma)) / peak;
            }
    }
    return out;
}

// Binary coverage mask: map pixel (y, x) is 1 iff its center lies inside any
// projected triangle. Pixel centers follow the to_grid convention.
inline Tensor<double> rasterize_silhouette(const TriMesh& mesh, const Camera& cam, int h, int w) {
    const std::vector<Eigen::Vector2d> uv = project(cam, mesh.vertices);
    std::vector<Eigen::Vector2d> grid(uv.size());
    for (size_t i = 0; i < uv.size(); ++i) grid[i] = to_grid(uv[i], cam, h, w);

    Tensor<double> out({h, w, 1});
    for (const Face& f : mesh.faces) {
        const Eigen::Vector2d &a = grid[static_cast<size_t>(f[0])],
                              &b = grid[static_cast<size_t>(f[1])],
                              &c = grid[static_cast<size_t>(f[2])];
        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
        const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (point_in_triangle_2d(x, y, a, b, c)) out(y, x, 0) = 1.0;
    }
    return out;
}

}  // namespace meshrec
