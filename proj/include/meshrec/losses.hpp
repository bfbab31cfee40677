#pragma once

// Training losses. All reductions are means (over vertices, face-edges or
// pixels) so the configured weights stay resolution independent. Edge and
// normal terms follow the per-face edge enumeration: every triangle
// contributes its three winding-order edges.

#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshrec/mesh.hpp"
#include "meshrec/tape.hpp"

namespace meshrec {

struct LossWeights {
    std::vector<double> level = {1.0, 0.5, 0.25, 0.25};  // lambda_m per level, finest first
    double normal = 0.1;      // lambda_n
    double pose = 10.0;       // lambda_p
    double silhouette = 2.5;  // lambda_s
};

inline nlohmann::json loss_weights_json(const LossWeights& w) {
    return {{"level", w.level}, {"normal", w.normal}, {"pose", w.pose}, {"silhouette", w.silhouette}};
}

inline LossWeights loss_weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    w.level = j.value("level", w.level);
    w.normal = j.value("normal", w.normal);
    w.pose = j.value("pose", w.pose);
    w.silhouette = j.value("silhouette", w.silhouette);
    for (double v : w.level)
        if (v < 0) throw std::invalid_argument("loss weights must be non-negative");
    if (w.normal < 0 || w.pose < 0 || w.silhouette < 0)
        throw std::invalid_argument("loss weights must be non-negative");
    return w;
}

// sum_s lambda_s * mean |pred_s - gt_s|
template <class Real>
typename Tape<Real>::Id mesh_l1(Tape<Real>& t, const std::vector<typename Tape<Real>::Id>& preds,
                                const std::vector<Tensor<Real>>& gts,
                                const std::vector<double>& lambda) {
    if (preds.size() != gts.size() || preds.size() != lambda.size())
        throw std::invalid_argument("mesh_l1: per-level list size mismatch");
    typename Tape<Real>::Id total = -1;
    for (size_t s = 0; s < preds.size(); ++s) {
        if (!t.value(preds[s]).same_shape(gts[s]))
            throw std::invalid_argument("mesh_l1: vertex count mismatch at level " +
                                        std::to_string(s));
        const auto term =
            t.scale(t.mean_all(t.abs_op(t.sub(preds[s], t.constant(gts[s])))), lambda[s]);
        total = total < 0 ? term : t.add(total, term);
    }
    return total;
}

namespace detail {

// [E,1] tensor of per-face-edge lengths of a plain mesh
inline Tensor<double> face_edge_lengths(const TriMesh& mesh) {
    const auto edges = face_edges(mesh);
    Tensor<double> out({static_cast<int>(edges.size()), 1});
    for (size_t e = 0; e < edges.size(); ++e)
        out(static_cast<int>(e), 0) =
            (mesh.vertices[static_cast<size_t>(edges[e][0])] -
             mesh.vertices[static_cast<size_t>(edges[e][1])])
                .norm();
    return out;
}

// predicted per-face-edge vectors [E,3] from a vertex node
template <class Real>
typename Tape<Real>::Id gather_face_edges(Tape<Real>& t, typename Tape<Real>::Id vertices,
                                          const std::vector<std::array<int, 2>>& edges) {
    std::vector<int> from, to;
    from.reserve(edges.size());
    to.reserve(edges.size());
    for (const auto& e : edges) {
        from.push_back(e[0]);
        to.push_back(e[1]);
    }
    return t.sub(t.gather_rows(vertices, to), t.gather_rows(vertices, from));
}

template <class Real>
typename Tape<Real>::Id edge_norms(Tape<Real>& t, typename Tape<Real>::Id edge_vecs) {
    return t.sqrt_op(t.row_sum(t.mul(edge_vecs, edge_vecs)));  // [E,1]
}

}  // namespace detail

// mean over face-edges of | |e_pred| - |e_gt| |; topologies must match
template <class Real>
typename Tape<Real>::Id edge_loss(Tape<Real>& t, typename Tape<Real>::Id pred_vertices,
                                  const TriMesh& gt) {
    if (t.value(pred_vertices).dim(0) != gt.vertex_count())
        throw std::invalid_argument("edge_loss: topology mismatch");
    const auto edges = face_edges(gt);
    const auto pred_len = detail::edge_norms(t, detail::gather_face_edges(t, pred_vertices, edges));
    const auto gt_len = t.constant(detail::face_edge_lengths(gt).template cast<Real>());
    return t.mean_all(t.abs_op(t.sub(pred_len, gt_len)));
}

// mean over face-edges of | unit(e_pred) . n_gt |, ground-truth face normals
template <class Real>
typename Tape<Real>::Id normal_loss(Tape<Real>& t, typename Tape<Real>::Id pred_vertices,
                                    const TriMesh& gt) {
    if (t.value(pred_vertices).dim(0) != gt.vertex_count())
        throw std::invalid_argument("normal_loss: topology mismatch");
    const auto edges = face_edges(gt);
    const std::vector<Vec3> normals = face_normals(gt);

    Tensor<Real> n_expanded({static_cast<int>(edges.size()), 3});
    for (size_t e = 0; e < edges.size(); ++e)
        for (int k = 0; k < 3; ++k)
            n_expanded(static_cast<int>(e), k) = static_cast<Real>(normals[e / 3][k]);

    const auto vecs = detail::gather_face_edges(t, pred_vertices, edges);
    const auto len = detail::edge_norms(t, vecs);
    for (int64_t i = 0; i < t.value(len).numel(); ++i)
        if (t.value(len)[i] < Real(1e-12))
            throw std::runtime_error("normal_loss: degenerate predicted edge " + std::to_string(i));
    const auto unit = t.mul_colvec(vecs, t.recip(len));
    const auto dots = t.row_sum(t.mul(unit, t.constant(n_expanded)));
    return t.mean_all(t.abs_op(dots));
}

template <class Real>
typename Tape<Real>::Id bce_heatmap(Tape<Real>& t, typename Tape<Real>::Id logits,
                                    const Tensor<Real>& target) {
    return t.bce_with_logits(logits, t.constant(target));
}

// L_total = L_mesh + L_edge + ln * L_norm + ls * L_sil + lp * L_pose,
// accumulated left to right
template <class Real>
typename Tape<Real>::Id total_loss(Tape<Real>& t, typename Tape<Real>::Id mesh_part,
                                   typename Tape<Real>::Id edge_part,
                                   typename Tape<Real>::Id normal_part,
                                   typename Tape<Real>::Id sil_part,
                                   typename Tape<Real>::Id pose_part, const LossWeights& w) {
    auto acc = t.add(mesh_part, edge_part);
    acc = t.add(acc, t.scale(normal_part, w.normal));
    acc = t.add(acc, t.scale(sil_part, w.silhouette));
    return t.add(acc, t.scale(pose_part, w.pose));
}

}  // namespace meshrec
