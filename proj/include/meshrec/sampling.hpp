#pragma once

// Bilinear feature-map sampling with border clamping, and the full
// project -> grid -> sample composition that turns a 2D feature map into
// per-vertex features.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "meshrec/camera.hpp"
#include "meshrec/tensor.hpp"

namespace meshrec {

namespace detail {

struct BilinearWeights {
    int x0, x1, y0, y1;
    double wx, wy;       // fractional parts after clamping
    bool grad_x, grad_y;  // false when the coordinate was clamped at the border
};

inline BilinearWeights bilinear_weights(double gx, double gy, int h, int w) {
    BilinearWeights bw{};
    bw.grad_x = gx > 0.0 && gx < w - 1;
    bw.grad_y = gy > 0.0 && gy < h - 1;
    gx = std::clamp(gx, 0.0, static_cast<double>(w - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(h - 1));
    bw.x0 = static_cast<int>(std::floor(gx));
    bw.y0 = static_cast<int>(std::floor(gy));
    bw.x0 = std::min(bw.x0, w - 1);
    bw.y0 = std::min(bw.y0, h - 1);
    bw.x1 = std::min(bw.x0 + 1, w - 1);
    bw.y1 = std::min(bw.y0 + 1, h - 1);
    bw.wx = gx - bw.x0;
    bw.wy = gy - bw.y0;
    return bw;
}

}  // namespace detail

// map: [h, w, c]; grid: [n, 2] continuous (x, y) map coordinates. Out-of-range
// coordinates are clamped to the border (replicate padding).
template <class Real>
Tensor<Real> bilinear_sample(const Tensor<Real>& map, const Tensor<Real>& grid) {
    if (map.ndim() != 3) throw std::invalid_argument("bilinear_sample: map must be [h,w,c]");
    if (grid.ndim() != 2 || grid.dim(1) != 2)
        throw std::invalid_argument("bilinear_sample: grid must be [n,2]");
    const int h = map.dim(0), w = map.dim(1), c = map.dim(2), n = grid.dim(0);
    Tensor<Real> out({n, c});
    for (int i = 0; i < n; ++i) {
        const auto bw = detail::bilinear_weights(static_cast<double>(grid(i, 0)),
                                                 static_cast<double>(grid(i, 1)), h, w);
        for (int j = 0; j < c; ++j) {
            const double v00 = map(bw.y0, bw.x0, j), v01 = map(bw.y0, bw.x1, j);
            const double v10 = map(bw.y1, bw.x0, j), v11 = map(bw.y1, bw.x1, j);
            out(i, j) = static_cast<Real>((1 - bw.wy) * ((1 - bw.wx) * v00 + bw.wx * v01) +
                                          bw.wy * ((1 - bw.wx) * v10 + bw.wx * v11));
        }
    }
    return out;
}

// G = f(Q, pi(M)): project vertices, convert to map coordinates, sample.
template <class Real>
Tensor<Real> map_vertex_features(const Tensor<Real>& map, const std::vector<Vec3>& vertices,
                                 const Camera& cam) {
    if (map.ndim() != 3) throw std::invalid_argument("map_vertex_features: map must be [h,w,c]");
    Tensor<Real> grid({static_cast<int>(vertices.size()), 2});
    for (size_t i = 0; i < vertices.size(); ++i) {
        const Eigen::Vector2d g = to_grid(project(cam, vertices[i]), cam, map.dim(0), map.dim(1));
        grid(static_cast<int>(i), 0) = static_cast<Real>(g.x());
        grid(static_cast<int>(i), 1) = static_cast<Real>(g.y());
    }
    return bilinear_sample(map, grid);
}

}  // namespace meshrec
