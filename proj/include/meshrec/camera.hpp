#pragma once

// Pinhole camera and the projection / feature-grid conventions shared by the
// plain sampler and its differentiable twin.

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "meshrec/mesh.hpp"

namespace meshrec {

inline constexpr double kMinDepth = 1e-6;

struct Camera {
    double fx = 1.0, fy = 1.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
    int width = 1, height = 1;  // image size, pixels

    void validate() const {
        if (fx <= 0 || fy <= 0) throw std::invalid_argument("Camera: focal lengths must be positive");
        if (width < 1 || height < 1) throw std::invalid_argument("Camera: image size must be >= 1");
    }
};

inline nlohmann::json camera_json(const Camera& c) {
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"W", c.width}, {"H", c.height}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    c.width = j.at("W").get<int>();
    c.height = j.at("H").get<int>();
    c.validate();
    return c;
}

// (u, v) = (fx * x / z + cx, fy * y / z + cy), camera-frame points, z > kMinDepth.
inline Eigen::Vector2d project(const Camera& cam, const Vec3& p) {
    if (p.z() <= kMinDepth)
        throw std::runtime_error("project: non-positive depth z=" + std::to_string(p.z()));
    return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

inline std::vector<Eigen::Vector2d> project(const Camera& cam, const std::vector<Vec3>& pts) {
    std::vector<Eigen::Vector2d> uv;
    uv.reserve(pts.size());
    for (const Vec3& p : pts) uv.push_back(project(cam, p));
    return uv;
}

// Image pixels -> continuous feature-map coordinates, pixel-center convention:
// (u * w/W - 0.5, v * h/H - 0.5).
inline Eigen::Vector2d to_grid(const Eigen::Vector2d& uv, const Camera& cam, int map_h, int map_w) {
    return {uv.x() * static_cast<double>(map_w) / cam.width - 0.5,
            uv.y() * static_cast<double>(map_h) / cam.height - 0.5};
}

}  // namespace meshrec
