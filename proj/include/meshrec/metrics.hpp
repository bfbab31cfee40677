#pragma once

// Evaluation: Procrustes similarity alignment, PA-MPJPE / PA-MPVPE in
// millimeters, and F-score at a distance threshold.

#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "meshrec/mesh.hpp"
#include "meshrec/sparse.hpp"

namespace meshrec {

using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

inline PointMatrix to_points(const std::vector<Vec3>& v) {
    PointMatrix m(static_cast<Eigen::Index>(v.size()), 3);
    for (size_t i = 0; i < v.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    return m;
}

inline PointMatrix to_points(const Tensor<double>& t) {
    if (t.ndim() != 2 || t.dim(1) != 3) throw std::invalid_argument("to_points: need [n,3]");
    PointMatrix m(t.dim(0), 3);
    for (int i = 0; i < t.dim(0); ++i)
        for (int k = 0; k < 3; ++k) m(i, k) = t(i, k);
    return m;
}

struct Similarity {
    double scale = 1.0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    PointMatrix apply(const PointMatrix& x) const {
        PointMatrix y = scale * (x * rotation.transpose());
        y.rowwise() += translation.transpose();
        return y;
    }
};

// Least-squares similarity transform (scale, rotation, translation) taking
// `pred` onto `gt`, with the reflection-corrected orthogonal polar factor of
// the centered cross-covariance.
inline Similarity procrustes_align(const PointMatrix& pred, const PointMatrix& gt) {
    if (pred.rows() != gt.rows()) throw std::invalid_argument("procrustes: point count mismatch");
    if (pred.rows() < 3) throw std::invalid_argument("procrustes: need at least 3 points");

    const Eigen::RowVector3d pc = pred.colwise().mean();
    const Eigen::RowVector3d gc = gt.colwise().mean();
    const PointMatrix p = pred.rowwise() - pc;
    const PointMatrix g = gt.rowwise() - gc;

    const Eigen::Matrix3d h = p.transpose() * g;
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sigma = svd.singularValues();
    const double p_var = p.squaredNorm();
    if (p_var < 1e-24 || sigma(1) < 1e-12 * std::max(sigma(0), 1e-300))
        throw std::runtime_error("procrustes: rank-deficient configuration");

    const double d = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    Eigen::Matrix3d corr = Eigen::Matrix3d::Identity();
    corr(2, 2) = d;

    Similarity s;
    s.rotation = svd.matrixV() * corr * svd.matrixU().transpose();
    s.scale = (sigma(0) + sigma(1) + d * sigma(2)) / p_var;
    s.translation = gc.transpose() - s.scale * (s.rotation * pc.transpose());
    return s;
}

// mean row-wise euclidean distance
inline double mean_point_error(const PointMatrix& a, const PointMatrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("mean_point_error: size mismatch");
    return (a - b).rowwise().norm().mean();
}

struct PaMetrics {
    double pa_mpjpe = 0.0;  // mm, over regressed joints
    double pa_mpvpe = 0.0;  // mm, over vertices
};

// Procrustes-align, then mean position error. Joints are regressed from
// vertices with a sparse J x N matrix and aligned as their own point set.
inline PaMetrics pa_metrics(const Tensor<double>& pred_vertices, const Tensor<double>& gt_vertices,
                            const SparseMatrix& regressor) {
    if (regressor.cols != pred_vertices.dim(0))
        throw std::invalid_argument("pa_metrics: regressor columns != vertex count");
    PaMetrics out;
    const PointMatrix pred = to_points(pred_vertices);
    const PointMatrix gt = to_points(gt_vertices);
    out.pa_mpvpe = mean_point_error(procrustes_align(pred, gt).apply(pred), gt);

    const PointMatrix pj = to_points(spmm(regressor, pred_vertices));
    const PointMatrix gj = to_points(spmm(regressor, gt_vertices));
    out.pa_mpjpe = mean_point_error(procrustes_align(pj, gj).apply(pj), gj);
    return out;
}

// Harmonic mean of precision and recall at threshold tau (same units as the
// points); exact nearest-neighbor scan.
inline double f_score(const PointMatrix& pred, const PointMatrix& gt, double tau) {
    if (pred.rows() == 0 || gt.rows() == 0) throw std::invalid_argument("f_score: empty point set");
    const double tau2 = tau * tau;
    auto fraction_within = [&](const PointMatrix& from, const PointMatrix& to) {
        int hits = 0;
        for (Eigen::Index i = 0; i < from.rows(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < to.rows(); ++j)
                best = std::min(best, (from.row(i) - to.row(j)).squaredNorm());
            if (best <= tau2) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(from.rows());
    };
    const double precision = fraction_within(pred, gt);
    const double recall = fraction_within(gt, pred);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// Joint regressor IO: {"rows": J, "cols": N, "triplets": [[r,c,v],...]}

inline void save_regressor(const SparseMatrix& r, const std::string& path) {
    nlohmann::json j;
    j["rows"] = r.rows;
    j["cols"] = r.cols;
    nlohmann::json trip = nlohmann::json::array();
    for (const auto& t : r.triplets) trip.push_back({t.row, t.col, t.value});
    j["triplets"] = std::move(trip);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_regressor: cannot open " + path);
    out << j.dump(2) << '\n';
}

inline SparseMatrix load_regressor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_regressor: cannot open " + path);
    nlohmann::json j;
    in >> j;
    SparseMatrix r;
    r.rows = j.at("rows").get<int>();
    r.cols = j.at("cols").get<int>();
    for (const auto& t : j.at("triplets"))
        r.triplets.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>()});
    r.validate();
    return r;
}

}  // namespace meshrec
