#pragma once

// Synthetic training data: the template mesh is articulated by smooth
// sinusoidal offsets, posed by a random similarity transform in front of a
// randomized pinhole camera, then rendered (normal-shaded z-buffer image,
// silhouette mask and keypoint heatmaps at the auxiliary resolution).
// Everything is derived from one seeded splitmix64 stream, so a dataset is a
// pure function of (template, hierarchy, regressor, seed, config).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "meshrec/camera.hpp"
#include "meshrec/encoder.hpp"
#include "meshrec/hierarchy.hpp"
#include "meshrec/mesh.hpp"
#include "meshrec/metrics.hpp"
#include "meshrec/nn.hpp"
#include "meshrec/tensor.hpp"

namespace meshrec {

struct Sample {
    Tensor<double> image;                   // [H, W, 3]
    Tensor<double> sil;                     // [h, w, 1] in {0,1}
    Tensor<double> pose;                    // [h, w, J] in [0,1]
    std::vector<Tensor<double>> gt_levels;  // [N_s, 3] per level, finest first
    Camera cam;
};

struct SyntheticDataset {
    std::vector<Sample> samples;
    int image_size = 0;
    int aux_size = 0;
};

struct SynthConfig {
    int image_size = 64;
    int aux_divisor = 4;       // auxiliary maps at image_size / divisor
    double sigma = 2.0;        // heatmap sigma, aux pixels
    double articulation = 0.10;  // sinusoidal offset amplitude, fraction of the bbox diagonal
    double scale_lo = 0.9, scale_hi = 1.1;
    double fill = 0.55;        // projected extent as a fraction of the image side
    int max_redraws = 100;
};

// Normal-shaded z-buffer rasterization: three fixed light directions drive the
// three channels, background stays zero.
inline Tensor<double> render_shaded(const TriMesh& mesh, const Camera& cam, int h, int w) {
    const std::vector<Eigen::Vector2d> uv = project(cam, mesh.vertices);
    std::vector<Eigen::Vector2d> grid(uv.size());
    for (size_t i = 0; i < uv.size(); ++i) grid[i] = to_grid(uv[i], cam, h, w);
    const std::vector<Vec3> normals = face_normals(mesh);

    const Vec3 lights[3] = {Vec3(0, 0, -1), Vec3(0.8, 0.2, -0.55).normalized(),
                            Vec3(-0.3, 0.9, -0.3).normalized()};

    Tensor<double> img({h, w, 3});
    Tensor<double> zbuf = Tensor<double>::full({h, w}, 1e300);
    for (size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& face = mesh.faces[f];
        const Eigen::Vector2d &a = grid[static_cast<size_t>(face[0])],
                              &b = grid[static_cast<size_t>(face[1])],
                              &c = grid[static_cast<size_t>(face[2])];
        const double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
        if (std::abs(det) < 1e-300) continue;
        const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
        const int x1 = std::min(w - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
        const double za = mesh.vertices[static_cast<size_t>(face[0])].z();
        const double zb = mesh.vertices[static_cast<size_t>(face[1])].z();
        const double zc = mesh.vertices[static_cast<size_t>(face[2])].z();
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double w1 = ((x - a.x()) * (c.y() - a.y()) - (y - a.y()) * (c.x() - a.x())) / det;
                const double w2 = ((b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x())) / det;
                const double w0 = 1.0 - w1 - w2;
                if (w0 < 0 || w1 < 0 || w2 < 0) continue;
                const double z = w0 * za + w1 * zb + w2 * zc;
                if (z >= zbuf[y * w + x]) continue;
                zbuf[y * w + x] = z;
                for (int ch = 0; ch < 3; ++ch)
                    img(y, x, ch) = std::abs(normals[f].dot(lights[ch]));
            }
    }
    return img;
}

namespace detail {

inline Vec3 unit_vector(SplitMix64& rng) {
    // rejection sample inside the ball, normalize
    for (;;) {
        const Vec3 v(2 * rng.uniform01() - 1, 2 * rng.uniform01() - 1, 2 * rng.uniform01() - 1);
        const double n = v.norm();
        if (n > 1e-3 && n <= 1.0) return v / n;
    }
}

inline Eigen::Matrix3d random_rotation(SplitMix64& rng) {
    Eigen::Quaterniond q(2 * rng.uniform01() - 1, 2 * rng.uniform01() - 1,
                         2 * rng.uniform01() - 1, 2 * rng.uniform01() - 1);
    while (q.norm() < 1e-3)
        q = Eigen::Quaterniond(2 * rng.uniform01() - 1, 2 * rng.uniform01() - 1,
                               2 * rng.uniform01() - 1, 2 * rng.uniform01() - 1);
    q.normalize();
    return q.toRotationMatrix();
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(int n, const TriMesh& tmpl, const MeshHierarchy& hier,
                                           const SparseMatrix& regressor, uint64_t seed,
                                           const SynthConfig& cfg = {}) {
    if (n < 0) throw std::invalid_argument("generate_synthetic: negative count");
    if (hier.levels.empty() || hier.levels[0].vertex_count() != tmpl.vertex_count())
        throw std::invalid_argument("generate_synthetic: hierarchy does not match template");
    if (regressor.cols != tmpl.vertex_count())
        throw std::invalid_argument("generate_synthetic: regressor does not match template");
    if (cfg.image_size % cfg.aux_divisor != 0)
        throw std::invalid_argument("generate_synthetic: aux divisor must divide image size");

    Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
    for (const Vec3& v : tmpl.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const double diag = (hi - lo).norm();
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& v : tmpl.vertices) centroid += v;
    centroid /= tmpl.vertex_count();

    SyntheticDataset ds;
    ds.image_size = cfg.image_size;
    ds.aux_size = cfg.image_size / cfg.aux_divisor;

    for (int i = 0; i < n; ++i) {
        detail::SplitMix64 rng{seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(i) + 1};
        Sample sample;
        bool ok = false;
        for (int attempt = 0; attempt < cfg.max_redraws && !ok; ++attempt) {
            // articulation: smooth directional sine offsets on the template
            TriMesh posed = tmpl;
            for (int m = 0; m < 3; ++m) {
                const Vec3 dir = detail::unit_vector(rng);
                const Vec3 axis = detail::unit_vector(rng);
                const double freq = (1.0 + 2.0 * rng.uniform01()) * 2.0 * M_PI / diag;
                const double phase = 2.0 * M_PI * rng.uniform01();
                const double amp = cfg.articulation * diag * rng.uniform01();
                for (Vec3& v : posed.vertices)
                    v += axis * (amp * std::sin(freq * v.dot(dir) + phase));
            }
            // similarity pose in front of the camera
            const Eigen::Matrix3d rot = detail::random_rotation(rng);
            const double scale = cfg.scale_lo + (cfg.scale_hi - cfg.scale_lo) * rng.uniform01();
            Camera cam;
            cam.width = cam.height = cfg.image_size;
            cam.fx = cam.fy = 1.2 * cfg.image_size * (0.95 + 0.1 * rng.uniform01());
            cam.cx = cfg.image_size * (0.5 + 0.06 * (rng.uniform01() - 0.5));
            cam.cy = cfg.image_size * (0.5 + 0.06 * (rng.uniform01() - 0.5));
            const double depth = cam.fx * scale * diag / (cfg.fill * cfg.image_size);
            const Vec3 target(0.10 * depth * (rng.uniform01() - 0.5),
                              0.10 * depth * (rng.uniform01() - 0.5), depth);
            for (Vec3& v : posed.vertices) v = scale * (rot * (v - centroid)) + target;

            // reject draws that put vertices behind the camera or far outside view
            bool valid = true;
            for (const Vec3& v : posed.vertices) {
                if (v.z() < 0.2 * depth) {
                    valid = false;
                    break;
                }
                const Eigen::Vector2d uv = project(cam, v);
                if (uv.x() < -0.2 * cam.width || uv.x() > 1.2 * cam.width ||
                    uv.y() < -0.2 * cam.height || uv.y() > 1.2 * cam.height) {
                    valid = false;
                    break;
                }
            }
            if (!valid) continue;

            sample.cam = cam;
            sample.image = render_shaded(posed, cam, cfg.image_size, cfg.image_size);
            sample.sil = rasterize_silhouette(posed, cam, ds.aux_size, ds.aux_size);

            const Tensor<double> joints = spmm(regressor, vertices_tensor(posed));
            std::vector<Eigen::Vector2d> kps;
            for (int jj = 0; jj < joints.dim(0); ++jj) {
                const Vec3 p(joints(jj, 0), joints(jj, 1), joints(jj, 2));
                kps.push_back(to_grid(project(cam, p), cam, ds.aux_size, ds.aux_size));
            }
            sample.pose = gaussian_heatmap(kps, cfg.sigma, ds.aux_size, ds.aux_size);

            sample.gt_levels.clear();
            sample.gt_levels.push_back(vertices_tensor(posed));
            for (size_t lvl = 0; lvl + 1 < hier.levels.size(); ++lvl)
                sample.gt_levels.push_back(pool(hier.down[lvl], sample.gt_levels.back()));
            ok = true;
        }
        if (!ok) throw std::runtime_error("generate_synthetic: no valid camera draw for sample " +
                                          std::to_string(i));
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Directory layout: manifest.json + per-sample TNSR tensors + finest gt OBJ

inline void save_dataset(const SyntheticDataset& ds, const TriMesh& tmpl, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["image_size"] = ds.image_size;
    manifest["aux_size"] = ds.aux_size;
    manifest["samples"] = nlohmann::json::array();
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        char tag[16];
        std::snprintf(tag, sizeof(tag), "s%04zu", i);
        const std::string base(tag);
        write_tensor((std::filesystem::path(dir) / (base + "_image.tnsr")).string(), s.image);
        write_tensor((std::filesystem::path(dir) / (base + "_sil.tnsr")).string(), s.sil);
        write_tensor((std::filesystem::path(dir) / (base + "_pose.tnsr")).string(), s.pose);
        TriMesh gt;
        gt.vertices = tensor_vertices(s.gt_levels[0]);
        gt.faces = tmpl.faces;
        save_obj(gt, (std::filesystem::path(dir) / (base + "_mesh.obj")).string());
        manifest["samples"].push_back({{"image", base + "_image.tnsr"},
                                       {"sil", base + "_sil.tnsr"},
                                       {"pose", base + "_pose.tnsr"},
                                       {"mesh", base + "_mesh.obj"},
                                       {"camera", camera_json(s.cam)}});
    }
    std::ofstream out(std::filesystem::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
    out << manifest.dump(2) << '\n';
}

inline SyntheticDataset load_dataset(const std::string& dir, const MeshHierarchy& hier) {
    std::ifstream in(std::filesystem::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("load_dataset: no manifest.json in " + dir);
    nlohmann::json manifest;
    in >> manifest;

    SyntheticDataset ds;
    ds.image_size = manifest.at("image_size").get<int>();
    ds.aux_size = manifest.at("aux_size").get<int>();
    for (const auto& e : manifest.at("samples")) {
        Sample s;
        s.image = read_tensor<double>((std::filesystem::path(dir) / e.at("image").get<std::string>()).string());
        s.sil = read_tensor<double>((std::filesystem::path(dir) / e.at("sil").get<std::string>()).string());
        s.pose = read_tensor<double>((std::filesystem::path(dir) / e.at("pose").get<std::string>()).string());
        s.cam = camera_from_json(e.at("camera"));
        const TriMesh gt = load_obj((std::filesystem::path(dir) / e.at("mesh").get<std::string>()).string());
        if (gt.vertex_count() != hier.levels[0].vertex_count())
            throw std::runtime_error("load_dataset: ground-truth mesh does not match hierarchy");
        s.gt_levels.push_back(vertices_tensor(gt));
        for (size_t lvl = 0; lvl + 1 < hier.levels.size(); ++lvl)
            s.gt_levels.push_back(pool(hier.down[lvl], s.gt_levels.back()));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace meshrec
