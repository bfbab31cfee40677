#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;

#include <random>

#include "meshrec/sampling.hpp"

using namespace meshrec;

namespace {

// independent scalar reference: naive clamp + lerp per query and channel
double reference_sample(const Tensor<double>& map, double gx, double gy, int ch) {
    const int h = map.dim(0), w = map.dim(1);
    gx = std::min(std::max(gx, 0.0), static_cast<double>(w - 1));
    gy = std::min(std::max(gy, 0.0), static_cast<double>(h - 1));
    const int x0 = std::min(static_cast<int>(std::floor(gx)), w - 1);
    const int y0 = std::min(static_cast<int>(std::floor(gy)), h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = gx - x0, fy = gy - y0;
    const double top = map(y0, x0, ch) * (1 - fx) + map(y0, x1, ch) * fx;
    const double bot = map(y1, x0, ch) * (1 - fx) + map(y1, x1, ch) * fx;
    return top * (1 - fy) + bot * fy;
}

Tensor<double> random_map(int h, int w, int c, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-2, 2);
    Tensor<double> m({h, w, c});
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = dist(rng);
    return m;
}

}  // namespace

TEST_CASE("pinhole projection formula") {
    Camera cam{1.0, 1.0, 0.0, 0.0, 224, 224};
    REQUIRE(project(cam, Vec3(0, 0, 100)).norm() == 0.0);

    cam.fx = 200.0;
    cam.cx = 112.0;
    const auto uv = project(cam, Vec3(50, 0, 100));
    REQUIRE(uv.x() == Approx(212.0));

    REQUIRE_THROWS_AS(project(cam, Vec3(0, 0, 0)), std::runtime_error);
    REQUIRE_THROWS_AS(project(cam, Vec3(0, 0, -5)), std::runtime_error);
}

TEST_CASE("to_grid pixel-center convention") {
    Camera cam{100, 100, 112, 112, 224, 224};
    const auto center = to_grid(Eigen::Vector2d(112, 112), cam, 56, 56);
    REQUIRE(center.x() == Approx(56.0 / 2 - 0.5));
    REQUIRE(center.y() == Approx(56.0 / 2 - 0.5));

    const auto g = to_grid(Eigen::Vector2d(4, 4), cam, 56, 56);
    REQUIRE(g.x() == Approx(0.5));
    REQUIRE(g.y() == Approx(0.5));

    const auto origin = to_grid(Eigen::Vector2d(0, 0), cam, 56, 56);
    REQUIRE(origin.x() == Approx(-0.5));
    REQUIRE(origin.y() == Approx(-0.5));
}

TEST_CASE("bilinear sampling hits pixel centers and midpoints") {
    Tensor<double> map({2, 3, 1});
    map(0, 0, 0) = 1;
    map(0, 1, 0) = 2;
    map(0, 2, 0) = 3;
    map(1, 0, 0) = 4;
    map(1, 1, 0) = 5;
    map(1, 2, 0) = 6;

    Tensor<double> grid({3, 2});
    grid(0, 0) = 1.0;  // exactly on (x=1, y=0)
    grid(0, 1) = 0.0;
    grid(1, 0) = 0.5;  // midpoint of two horizontal neighbors
    grid(1, 1) = 0.0;
    grid(2, 0) = -3.0;  // clamped to the border
    grid(2, 1) = 9.0;

    const auto out = bilinear_sample(map, grid);
    REQUIRE(out(0, 0) == 2.0);
    REQUIRE(out(1, 0) == Approx(1.5));
    REQUIRE(out(2, 0) == 4.0);
}

TEST_CASE("bilinear sampling matches the scalar reference") {
    const Tensor<double> map = random_map(7, 5, 3, 11);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> dist(-2, 8);
    Tensor<double> grid({40, 2});
    for (int64_t i = 0; i < grid.numel(); ++i) grid[i] = dist(rng);

    const auto out = bilinear_sample(map, grid);
    for (int i = 0; i < 40; ++i)
        for (int ch = 0; ch < 3; ++ch)
            REQUIRE(out(i, ch) == Approx(reference_sample(map, grid(i, 0), grid(i, 1), ch)).margin(1e-12));
}

TEST_CASE("sampling is linear in the map and stays in range") {
    const Tensor<double> a = random_map(6, 6, 2, 21);
    const Tensor<double> b = random_map(6, 6, 2, 22);
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> dist(0, 5);
    Tensor<double> grid({25, 2});
    for (int64_t i = 0; i < grid.numel(); ++i) grid[i] = dist(rng);

    const double alpha = 0.7, beta = -1.3;
    Tensor<double> mix({6, 6, 2});
    for (int64_t i = 0; i < mix.numel(); ++i) mix[i] = alpha * a[i] + beta * b[i];

    const auto sa = bilinear_sample(a, grid);
    const auto sb = bilinear_sample(b, grid);
    const auto sm = bilinear_sample(mix, grid);
    for (int64_t i = 0; i < sm.numel(); ++i)
        REQUIRE(sm[i] == Approx(alpha * sa[i] + beta * sb[i]).margin(1e-12));

    // convex combination of map values per channel
    for (int ch = 0; ch < 2; ++ch) {
        double lo = 1e300, hi = -1e300;
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                lo = std::min(lo, a(y, x, ch));
                hi = std::max(hi, a(y, x, ch));
            }
        for (int i = 0; i < 25; ++i) {
            REQUIRE(sa(i, ch) >= lo - 1e-12);
            REQUIRE(sa(i, ch) <= hi + 1e-12);
        }
    }
}

TEST_CASE("map_vertex_features composes project, to_grid, sample") {
    Camera cam{60, 60, 16, 16, 32, 32};
    const Tensor<double> map = random_map(8, 8, 4, 31);
    std::vector<Vec3> verts = {Vec3(0, 0, 60), Vec3(5, -3, 80), Vec3(-9, 9, 120), Vec3(30, 30, 70)};

    const auto fused = map_vertex_features(map, verts, cam);
    Tensor<double> grid({static_cast<int>(verts.size()), 2});
    for (size_t i = 0; i < verts.size(); ++i) {
        const auto g = to_grid(project(cam, verts[i]), cam, 8, 8);
        grid(static_cast<int>(i), 0) = g.x();
        grid(static_cast<int>(i), 1) = g.y();
    }
    const auto direct = bilinear_sample(map, grid);
    for (int64_t i = 0; i < fused.numel(); ++i) REQUIRE(fused[i] == direct[i]);

    // constant map: every vertex feature equals the constant regardless of pose
    const auto constant = Tensor<double>::full({8, 8, 4}, 3.25);
    const auto cf = map_vertex_features(constant, verts, cam);
    for (int64_t i = 0; i < cf.numel(); ++i) REQUIRE(cf[i] == 3.25);

    // behind-camera vertex propagates the projection error
    verts.push_back(Vec3(0, 0, -1));
    REQUIRE_THROWS_AS(map_vertex_features(map, verts, cam), std::runtime_error);
}
