#pragma once

// Central-difference verification of every differentiable primitive, in 64-bit
// mode: linear, conv2d, conv1d_fuse, spiral_conv, mhsa, bilinear sampling
// (map and coordinate paths), projection, and each loss. Inputs are fixed
// seeded draws kept away from abs/bilinear kinks.

#include <string>
#include <utility>
#include <vector>

#include "meshrec/losses.hpp"
#include "meshrec/nn.hpp"
#include "meshrec/spiral.hpp"
#include "meshrec/templates.hpp"

namespace meshrec {

struct NamedGradCheck {
    std::string op;
    GradCheckReport report;
};

inline std::vector<NamedGradCheck> run_gradient_suite(double eps = 1e-5) {
    using D = double;
    using Id = Tape<D>::Id;
    std::vector<NamedGradCheck> out;

    auto fill = [](Tensor<D>& t, uint64_t seed, double lo, double hi) {
        detail::SplitMix64 rng{seed};
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = lo + (hi - lo) * rng.uniform01();
    };

    {  // linear
        ParamStore<D> store(101);
        auto& x = store.create_glorot("x", {5, 4}, 5, 4);
        auto& w = store.create_glorot("w", {4, 3}, 4, 3);
        auto& b = store.create_glorot("b", {3}, 3, 3);
        out.push_back({"linear", grad_check<D>(
                                     [&](Tape<D>& t) {
                                         return t.mean_all(linear(t, t.param(x), t.param(w), t.param(b)));
                                     },
                                     store.all(), eps)});
    }
    {  // conv2d
        ParamStore<D> store(102);
        auto& x = store.create_glorot("x", {6, 5, 2}, 10, 10);
        auto& k = store.create_glorot("k", {3, 3, 2, 3}, 18, 27);
        auto& b = store.create_glorot("b", {3}, 3, 3);
        out.push_back({"conv2d", grad_check<D>(
                                     [&](Tape<D>& t) {
                                         const Id y = t.add_channel_bias(
                                             t.conv2d(t.param(x), t.param(k), 2, 1), t.param(b));
                                         return t.mean_all(t.mul(y, y));
                                     },
                                     store.all(), eps)});
    }
    {  // conv1d_fuse
        ParamStore<D> store(103);
        auto& f = store.create_glorot("f", {8, 3}, 8, 3);
        auto& h = store.create_glorot("h", {8, 2}, 8, 2);
        auto& w = store.create_glorot("w", {5, 4}, 5, 4);
        out.push_back({"conv1d_fuse",
                       grad_check<D>(
                           [&](Tape<D>& t) {
                               const Id q = conv1d_fuse(t, t.param(f), t.param(h), t.param(w));
                               return t.mean_all(t.mul(q, q));
                           },
                           store.all(), eps)});
    }
    {  // spiral_conv on the icosahedron table
        const TriMesh ico = icosahedron();
        const SpiralTable table = spiral_table(ico, 7);
        const auto idx = spiral_gather_indices(table);
        ParamStore<D> store(104);
        auto& x = store.create_glorot("x", {12, 3}, 12, 3);
        auto& w = store.create_glorot("w", {21, 4}, 21, 4);
        auto& b = store.create_glorot("b", {4}, 4, 4);
        out.push_back({"spiral_conv",
                       grad_check<D>(
                           [&](Tape<D>& t) {
                               const Id y = spiral_conv(t, t.param(x), idx, 7, t.param(w), t.param(b));
                               return t.mean_all(t.abs_op(y));
                           },
                           store.all(), eps)});
    }
    {  // mhsa
        ParamStore<D> store(105);
        auto& x = store.create_glorot("x", {6, 4}, 6, 4);
        auto& wq = store.create_glorot("wq", {4, 4}, 4, 4);
        auto& wk = store.create_glorot("wk", {4, 4}, 4, 4);
        auto& wv = store.create_glorot("wv", {4, 4}, 4, 4);
        auto& wo = store.create_glorot("wo", {4, 4}, 4, 4);
        out.push_back({"mhsa", grad_check<D>(
                                   [&](Tape<D>& t) {
                                       const Id y = mhsa(t, t.param(x), t.param(wq), t.param(wk),
                                                         t.param(wv), t.param(wo), 2);
                                       return t.mean_all(t.mul(y, y));
                                   },
                                   store.all(), eps)});
    }
    {  // bilinear sampling, both the map and the coordinate path
        ParamStore<D> store(106);
        auto& map = store.create_glorot("map", {6, 7, 3}, 42, 3);
        auto& grid = store.create_glorot("grid", {8, 2}, 2, 2);
        detail::SplitMix64 rng{1061};
        for (int i = 0; i < 8; ++i) {
            grid.value(i, 0) = 0.25 + 0.5 * rng.uniform01() + static_cast<double>(rng.next() % 5);
            grid.value(i, 1) = 0.25 + 0.5 * rng.uniform01() + static_cast<double>(rng.next() % 4);
        }
        out.push_back({"bilinear_sample",
                       grad_check<D>(
                           [&](Tape<D>& t) {
                               return t.mean_all(t.grid_sample(t.param(map), t.param(grid)));
                           },
                           store.all(), eps)});
    }
    {  // projection into pixel coordinates
        ParamStore<D> store(107);
        auto& v = store.create_glorot("v", {6, 3}, 3, 3);
        for (int i = 0; i < 6; ++i) {
            v.value(i, 0) *= 30;
            v.value(i, 1) *= 30;
            v.value(i, 2) = 150 + 20 * v.value(i, 2);
        }
        const Camera cam{70, 72, 32, 30, 64, 64};
        out.push_back({"project", grad_check<D>(
                                      [&](Tape<D>& t) {
                                          const Id uv = t.project_points(t.param(v), cam);
                                          return t.mean_all(t.mul(uv, uv));
                                      },
                                      store.all(), eps)});
    }

    // losses against a fixed jittered tetrahedron
    TriMesh gt = tetrahedron();
    {
        detail::SplitMix64 rng{108};
        for (Vec3& p : gt.vertices)
            p += Vec3(0.2 * rng.uniform01(), 0.2 * rng.uniform01(), 0.2 * rng.uniform01());
    }
    const Tensor<double> gt_v = vertices_tensor(gt);
    auto make_pred = [&](ParamStore<D>& store) -> Parameter<D>& {
        auto& pred = store.create_glorot("pred", {4, 3}, 4, 3);
        for (int64_t i = 0; i < pred.value.numel(); ++i)
            pred.value[i] = gt_v[i] + 0.2 + 0.1 * pred.value[i];
        return pred;
    };
    {
        ParamStore<D> store(109);
        auto& pred = make_pred(store);
        out.push_back({"mesh_l1", grad_check<D>(
                                      [&](Tape<D>& t) {
                                          return mesh_l1<D>(t, {t.param(pred)}, {gt_v}, {1.0});
                                      },
                                      store.all(), eps)});
    }
    {
        ParamStore<D> store(110);
        auto& pred = make_pred(store);
        out.push_back({"edge_loss", grad_check<D>(
                                        [&](Tape<D>& t) { return edge_loss(t, t.param(pred), gt); },
                                        store.all(), eps)});
    }
    {
        ParamStore<D> store(111);
        auto& pred = make_pred(store);
        out.push_back({"normal_loss",
                       grad_check<D>(
                           [&](Tape<D>& t) { return normal_loss(t, t.param(pred), gt); },
                           store.all(), eps)});
    }
    {
        ParamStore<D> store(112);
        auto& z = store.create_glorot("z", {5, 6}, 5, 6);
        Tensor<D> target({5, 6});
        fill(target, 113, 0.0, 1.0);
        out.push_back({"bce_heatmap",
                       grad_check<D>(
                           [&](Tape<D>& t) { return bce_heatmap(t, t.param(z), target); },
                           store.all(), eps)});
    }
    {  // weighted total over all parts at once
        ParamStore<D> store(114);
        auto& pred = make_pred(store);
        auto& z = store.create_glorot("z", {4, 4}, 4, 4);
        Tensor<D> target({4, 4});
        fill(target, 115, 0.0, 1.0);
        out.push_back({"total_loss",
                       grad_check<D>(
                           [&](Tape<D>& t) {
                               return total_loss(t, mesh_l1<D>(t, {t.param(pred)}, {gt_v}, {1.0}),
                                                 edge_loss(t, t.param(pred), gt),
                                                 normal_loss(t, t.param(pred), gt),
                                                 bce_heatmap(t, t.param(z), target),
                                                 bce_heatmap(t, t.scale(t.param(z), 0.7), target),
                                                 LossWeights{});
                           },
                           store.all(), eps)});
    }
    return out;
}

}  // namespace meshrec
