#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;

#include "meshrec/decoder.hpp"
#include "meshrec/templates.hpp"

using namespace meshrec;
using D = double;
using Id = Tape<D>::Id;

namespace {

struct Fixture {
    TriMesh tmpl;
    MeshHierarchy hier;
    std::vector<SpiralTable> spirals;
    EncoderConfig enc_cfg;
    DecoderConfig dec_cfg;

    explicit Fixture(MappingMode mode = MappingMode::pixel_aligned, bool attention = true) {
        tmpl = desk_template(48);
        hier = build_hierarchy(tmpl, {48, 24, 12});
        spirals = precompute_spirals(hier, {9, 9, 9});
        enc_cfg.levels = 3;
        enc_cfg.channels = {4, 8, 12};
        dec_cfg.levels = 3;
        dec_cfg.spiral_lengths = {9, 9, 9};
        dec_cfg.widths = {4, 8, 12};
        dec_cfg.blocks_per_level = 2;
        dec_cfg.heads = 2;
        dec_cfg.attention = attention;
        dec_cfg.mapping = mode;
        dec_cfg.level_loss_weights = {1.0, 0.5, 0.25};
    }

    Camera camera() const {
        Camera cam;
        cam.width = cam.height = 64;
        cam.fx = cam.fy = 76.8;
        cam.cx = cam.cy = 32.0;
        return cam;
    }

    // place the template centroid at depth z so everything projects in front
    Tensor<double> posed_template(double z = 500.0) const {
        Tensor<double> v = vertices_tensor(tmpl);
        for (int i = 0; i < v.dim(0); ++i) v(i, 2) += z;
        return v;
    }
};

}  // namespace

TEST_CASE("init_template returns the coarsest level and roughly preserves the centroid") {
    const Fixture fx;
    const Tensor<double> init = init_template(fx.hier);
    REQUIRE(init.dim(0) == 12);
    for (int k = 0; k < 3; ++k)
        REQUIRE(init(3, k) == fx.hier.levels[2].vertices[3][k]);

    Vec3 c_tmpl = Vec3::Zero(), c_init = Vec3::Zero();
    for (const Vec3& v : fx.tmpl.vertices) c_tmpl += v / fx.tmpl.vertex_count();
    for (int i = 0; i < init.dim(0); ++i)
        c_init += Vec3(init(i, 0), init(i, 1), init(i, 2)) / init.dim(0);
    Vec3 lo = Vec3::Constant(1e300), hi = -Vec3::Constant(1e300);
    for (const Vec3& v : fx.tmpl.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    REQUIRE((c_tmpl - c_init).norm() < 0.05 * (hi - lo).norm());
}

TEST_CASE("zeroed offset heads reproduce the unpooled template chain bit-exactly") {
    Fixture fx;
    // pose the hierarchy in front of the camera so projection succeeds
    MeshHierarchy posed = fx.hier;
    for (auto& level : posed.levels)
        for (Vec3& v : level.vertices) v.z() += 500.0;

    ParamStore<D> store(3);
    Decoder<D> dec = Decoder<D>::build(store, fx.dec_cfg, posed, fx.spirals);
    for (int s = 0; s < 3; ++s) {
        auto& lp = dec.levels[static_cast<size_t>(s)];
        std::fill(lp.offset_w->value.raw().begin(), lp.offset_w->value.raw().end(), 0.0);
        std::fill(lp.offset_b->value.raw().begin(), lp.offset_b->value.raw().end(), 0.0);
    }

    Tape<D> t;
    std::vector<FeatMap<D>> fused;
    const int hw[3] = {16, 8, 4};
    for (int s = 0; s < 3; ++s) {
        Tensor<D> q({hw[s], hw[s], fx.dec_cfg.widths[static_cast<size_t>(s)]});
        for (int64_t i = 0; i < q.numel(); ++i) q[i] = 0.01 * static_cast<double>(i % 13);
        fused.push_back({t.constant(q), hw[s], hw[s], fx.dec_cfg.widths[static_cast<size_t>(s)]});
    }
    const auto res = dec.forward(t, fused, fx.camera());

    // expected chain: coarsest template, unpooled level by level
    Tensor<D> expect = vertices_tensor(posed.levels[2]);
    for (int s = 2; s >= 0; --s) {
        const auto& got = t.value(res.meshes[static_cast<size_t>(s)]);
        REQUIRE(got.dim(0) == posed.levels[static_cast<size_t>(s)].vertex_count());
        for (int64_t i = 0; i < got.numel(); ++i) REQUIRE(got[i] == expect[i]);
        if (s > 0) expect = unpool(posed.up[static_cast<size_t>(s) - 1], expect);
    }
}

TEST_CASE("vertex counts follow the hierarchy and repeat runs are identical") {
    Fixture fx;
    MeshHierarchy posed = fx.hier;
    for (auto& level : posed.levels)
        for (Vec3& v : level.vertices) v.z() += 500.0;

    ParamStore<D> store(4);
    Decoder<D> dec = Decoder<D>::build(store, fx.dec_cfg, posed, fx.spirals);

    auto run = [&]() {
        Tape<D> t;
        std::vector<FeatMap<D>> fused;
        const int hw[3] = {16, 8, 4};
        for (int s = 0; s < 3; ++s) {
            Tensor<D> q({hw[s], hw[s], fx.dec_cfg.widths[static_cast<size_t>(s)]});
            for (int64_t i = 0; i < q.numel(); ++i)
                q[i] = 0.05 * std::sin(0.37 * static_cast<double>(i));
            fused.push_back({t.constant(q), hw[s], hw[s], fx.dec_cfg.widths[static_cast<size_t>(s)]});
        }
        const auto res = dec.forward(t, fused, fx.camera());
        std::vector<Tensor<D>> values;
        for (int s = 0; s < 3; ++s) values.push_back(t.value(res.meshes[static_cast<size_t>(s)]));
        return values;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a[0].dim(0) == 48);
    REQUIRE(a[1].dim(0) == 24);
    REQUIRE(a[2].dim(0) == 12);
    for (int s = 0; s < 3; ++s)
        for (int64_t i = 0; i < a[static_cast<size_t>(s)].numel(); ++i)
            REQUIRE(a[static_cast<size_t>(s)][i] == b[static_cast<size_t>(s)][i]);
}

TEST_CASE("global_repeat duplicates the global vector across rows") {
    Tape<D> t;
    const Id vec = t.constant(Tensor<D>({1, 2}, {1.0, 2.0}));
    const Id rows = global_feature_mapping(t, vec, MappingMode::global_repeat, 3);
    REQUIRE(t.value(rows).dim(0) == 3);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(t.value(rows)(i, 0) == 1.0);
        REQUIRE(t.value(rows)(i, 1) == 2.0);
    }
    REQUIRE_THROWS_AS(global_feature_mapping(t, vec, MappingMode::pixel_aligned, 3),
                      std::invalid_argument);
}

TEST_CASE("global_mlp equals the linear-plus-reshape oracle") {
    const int c = 3, n = 4;
    Tape<D> t;
    Tensor<D> vec({1, c});
    vec(0, 0) = 0.5;
    vec(0, 1) = -1.0;
    vec(0, 2) = 2.0;
    Tensor<D> w({c, n * c});
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = 0.01 * static_cast<double>((i * 7) % 23) - 0.1;
    Tensor<D> b({n * c});
    for (int64_t i = 0; i < b.numel(); ++i) b[i] = 0.05 * static_cast<double>(i % 5);

    const Id out = global_feature_mapping(t, t.constant(vec), MappingMode::global_mlp, n,
                                          t.constant(w), t.constant(b));
    REQUIRE(t.value(out).dim(0) == n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            double acc = b[static_cast<int64_t>(i) * c + j];
            for (int k = 0; k < c; ++k) acc += vec(0, k) * w(k, i * c + j);
            REQUIRE(t.value(out)(i, j) == Approx(acc).margin(1e-12));
        }

    // identity-extended construction: block rows stack the global vector
    Tensor<D> wid({c, n * c});
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < c; ++k) wid(k, i * c + k) = 1.0;
    const Id tiled = global_feature_mapping(t, t.constant(vec), MappingMode::global_mlp, n,
                                            t.constant(wid), t.constant(Tensor<D>({n * c})));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) REQUIRE(t.value(tiled)(i, j) == vec(0, j));
}

TEST_CASE("mesh_conv_layer equals its step-by-step recomposition") {
    Fixture fx(MappingMode::pixel_aligned, true);
    MeshHierarchy posed = fx.hier;
    for (auto& level : posed.levels)
        for (Vec3& v : level.vertices) v.z() += 500.0;

    // single-level decoder so one mesh-conv layer is the whole forward pass
    DecoderConfig cfg1 = fx.dec_cfg;
    cfg1.levels = 1;
    cfg1.spiral_lengths = {9};
    cfg1.widths = {6};
    cfg1.heads = 2;
    cfg1.level_loss_weights = {1.0};
    MeshHierarchy single;
    single.levels = {posed.levels[0]};
    std::vector<SpiralTable> tables = {fx.spirals[0]};

    ParamStore<D> store(5);
    Decoder<D> dec = Decoder<D>::build(store, cfg1, single, tables);

    Tape<D> t;
    Tensor<D> q({16, 16, 6});
    for (int64_t i = 0; i < q.numel(); ++i) q[i] = 0.02 * static_cast<double>((i * 11) % 29) - 0.2;
    const std::vector<FeatMap<D>> fused = {{t.constant(q), 16, 16, 6}};
    const Camera cam = fx.camera();
    const auto res = dec.forward(t, fused, cam);

    // recomposition from primitives
    Tape<D> t2;
    const Id v0 = t2.constant(init_template(single));
    const Id uv = t2.project_points(v0, cam);
    Tensor<D> sc({2}), sh({2});
    sc[0] = 16.0 / cam.width;
    sc[1] = 16.0 / cam.height;
    sh[0] = sh[1] = -0.5;
    const Id grid = t2.add_rowvec(t2.mul_rowvec(uv, t2.constant(sc)), t2.constant(sh));
    const Id g = t2.grid_sample(t2.constant(q), grid);
    Id x = g;
    const auto gather = spiral_gather_indices(tables[0]);
    for (int bl = 0; bl < 2; ++bl) {
        auto& lp = dec.levels[0];
        x = t2.relu(spiral_conv(t2, x, gather, 9,
                                t2.constant(lp.block_w[static_cast<size_t>(bl)]->value),
                                t2.constant(lp.block_b[static_cast<size_t>(bl)]->value)));
    }
    x = t2.add(x, mhsa(t2, x, t2.constant(dec.levels[0].wq->value),
                       t2.constant(dec.levels[0].wk->value), t2.constant(dec.levels[0].wv->value),
                       t2.constant(dec.levels[0].wo->value), 2));
    const Id delta = linear(t2, x, t2.constant(dec.levels[0].offset_w->value),
                            t2.constant(dec.levels[0].offset_b->value));
    const Id v1 = t2.add(v0, delta);

    const auto& got = t.value(res.meshes[0]);
    const auto& expect = t2.value(v1);
    for (int64_t i = 0; i < got.numel(); ++i) REQUIRE(got[i] == Approx(expect[i]).margin(1e-12));
}

TEST_CASE("pixel-aligned gradients reach vertex positions through sampling") {
    Fixture fx;
    MeshHierarchy posed = fx.hier;
    for (auto& level : posed.levels)
        for (Vec3& v : level.vertices) v.z() += 500.0;

    ParamStore<D> store(6);
    Decoder<D> dec = Decoder<D>::build(store, fx.dec_cfg, posed, fx.spirals);

    Tape<D> t;
    std::vector<FeatMap<D>> fused;
    const int hw[3] = {16, 8, 4};
    for (int s = 0; s < 3; ++s) {
        Tensor<D> q({hw[s], hw[s], fx.dec_cfg.widths[static_cast<size_t>(s)]});
        for (int64_t i = 0; i < q.numel(); ++i)
            q[i] = 0.3 * std::sin(0.11 * static_cast<double>(i) + s);
        fused.push_back({t.constant(q), hw[s], hw[s], fx.dec_cfg.widths[static_cast<size_t>(s)]});
    }
    const auto res = dec.forward(t, fused, fx.camera());
    t.backward(t.mean_all(t.abs_op(res.meshes[0])));

    // some offset-head gradient at the coarsest level proves the chain is connected
    double norm = 0;
    for (int64_t i = 0; i < dec.levels[2].offset_w->grad.numel(); ++i)
        norm += std::abs(dec.levels[2].offset_w->grad[i]);
    REQUIRE(norm > 0.0);
}

TEST_CASE("decoder rejects inconsistent configurations") {
    Fixture fx;
    ParamStore<D> store(7);
    DecoderConfig bad = fx.dec_cfg;
    bad.levels = 2;
    bad.spiral_lengths = {9, 9};
    bad.widths = {4, 8};
    bad.level_loss_weights = {1.0, 0.5};
    REQUIRE_THROWS_AS(Decoder<D>::build(store, bad, fx.hier, fx.spirals), std::invalid_argument);

    DecoderConfig bad_heads = fx.dec_cfg;
    bad_heads.heads = 5;
    REQUIRE_THROWS_AS(Decoder<D>::build(store, bad_heads, fx.hier, fx.spirals),
                      std::invalid_argument);
}
