#include <catch2/catch_amalgamated.hpp>

using Catch::Approx;

#include <random>

#include "meshrec/nn.hpp"
#include "meshrec/tape.hpp"

using namespace meshrec;
using D = double;
using Id = Tape<D>::Id;

namespace {

Tensor<D> random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1, double hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<D> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

}  // namespace

TEST_CASE("linear layer forward matches the triple-loop oracle") {
    const Tensor<D> x = random_tensor({4, 3}, 1);
    const Tensor<D> w = random_tensor({3, 5}, 2);
    const Tensor<D> b = random_tensor({5}, 3);

    Tape<D> t;
    const Id y = linear(t, t.constant(x), t.constant(w), t.constant(b));
    const Tensor<D>& out = t.value(y);

    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) {
            double acc = b[j];
            for (int k = 0; k < 3; ++k) acc += x(i, k) * w(k, j);
            REQUIRE(out(i, j) == Approx(acc).margin(1e-12));
        }
}

TEST_CASE("linear identity and scalar cases") {
    Tape<D> t;
    Tensor<D> eye({2, 2});
    eye(0, 0) = eye(1, 1) = 1;
    const Tensor<D> x = random_tensor({3, 2}, 4);
    const Id y = linear(t, t.constant(x), t.constant(eye), t.constant(Tensor<D>({2})));
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(t.value(y)[i] == x[i]);

    // 1x1: x=2, W=3, b=1 -> 7
    const Id z = linear(t, t.constant(Tensor<D>({1, 1}, {2.0})),
                        t.constant(Tensor<D>({1, 1}, {3.0})), t.constant(Tensor<D>({1}, {1.0})));
    REQUIRE(t.value(z)[0] == 7.0);
}

TEST_CASE("backward on sum(W x) reproduces the analytic gradient") {
    // loss = sum over rows of x W, so dL/dW[k][j] = sum_i x[i][k]
    const Tensor<D> x = random_tensor({4, 3}, 5);
    ParamStore<D> store(1);
    auto& w = store.create_glorot("w", {3, 2}, 3, 2);

    Tape<D> t;
    const Id loss = t.sum_all(t.matmul(t.constant(x), t.param(w)));
    t.backward(loss);
    for (int k = 0; k < 3; ++k) {
        double colsum = 0;
        for (int i = 0; i < 4; ++i) colsum += x(i, k);
        for (int j = 0; j < 2; ++j) REQUIRE(w.grad(k, j) == Approx(colsum).margin(1e-12));
    }
}

TEST_CASE("unused parameters receive zero gradient") {
    ParamStore<D> store(1);
    auto& used = store.create_glorot("used", {2, 2}, 2, 2);
    auto& unused = store.create_glorot("unused", {2, 2}, 2, 2);
    Tape<D> t;
    const Id loss = t.sum_all(t.matmul(t.constant(random_tensor({3, 2}, 6)), t.param(used)));
    (void)t.param(unused);  // on the tape but not on the loss path
    t.backward(loss);
    for (int64_t i = 0; i < unused.grad.numel(); ++i) REQUIRE(unused.grad[i] == 0.0);
}

TEST_CASE("elementwise op gradients pass grad_check") {
    ParamStore<D> store(1);
    auto& a = store.create_glorot("a", {3, 4}, 3, 4);
    auto& b = store.create_glorot("b", {3, 4}, 4, 3);
    // keep abs/sqrt away from their kinks
    for (int64_t i = 0; i < a.value.numel(); ++i) a.value[i] += a.value[i] > 0 ? 0.5 : -0.5;

    const auto build = [&](Tape<D>& t) {
        const Id pa = t.param(a);
        const Id pb = t.param(b);
        const Id mixed = t.mul(t.add(pa, pb), t.sub(pa, t.scale(pb, 0.3)));
        const Id guarded = t.sqrt_op(t.add(t.abs_op(mixed), t.constant(Tensor<D>::full({3, 4}, 1.0))));
        return t.mean_all(t.mul(guarded, t.recip(t.add(t.abs_op(pa), t.constant(Tensor<D>::full({3, 4}, 2.0))))));
    };
    const auto report = grad_check<D>(build, {&a, &b});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-8);
}

TEST_CASE("matmul, transpose, softmax, slicing pass grad_check") {
    ParamStore<D> store(2);
    auto& a = store.create_glorot("a", {4, 6}, 4, 6);
    auto& w = store.create_glorot("w", {6, 6}, 6, 6);
    const auto build = [&](Tape<D>& t) {
        const Id x = t.matmul(t.param(a), t.param(w));
        const Id sm = t.softmax_rows(t.scale(x, 2.0));
        const Id sl = t.concat_cols(t.slice_cols(sm, 0, 2), t.slice_cols(sm, 3, 6));  // [4,5]
        const Id y = t.matmul(t.transpose(sl), t.slice_cols(t.param(a), 0, 5));       // [5,5]
        return t.mean_all(t.mul(y, y));
    };
    const auto report = grad_check<D>(build, {&a, &w});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-7);
}

TEST_CASE("row/col broadcast ops pass grad_check") {
    ParamStore<D> store(3);
    auto& x = store.create_glorot("x", {5, 3}, 5, 3);
    auto& r = store.create_glorot("r", {3}, 3, 3);
    auto& srow = store.create_glorot("s", {5, 1}, 5, 1);
    const auto build = [&](Tape<D>& t) {
        const Id y = t.mul_rowvec(t.add_rowvec(t.param(x), t.param(r)), t.param(r));
        const Id z = t.mul_colvec(y, t.param(srow));
        return t.add(t.mean_all(t.row_sum(z)), t.mean_all(t.mean_rows(t.transpose(z))));
    };
    const auto report = grad_check<D>(build, {&x, &r, &srow});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-8);
}

TEST_CASE("gather_rows routes gradients and zeroes sentinels") {
    ParamStore<D> store(4);
    auto& x = store.create_glorot("x", {4, 3}, 4, 3);
    const std::vector<int> idx = {2, 2, -1, 0};
    Tape<D> t;
    const Id g = t.gather_rows(t.param(x), idx);
    REQUIRE(t.value(g).dim(0) == 4);
    for (int j = 0; j < 3; ++j) {
        REQUIRE(t.value(g)(0, j) == x.value(2, j));
        REQUIRE(t.value(g)(2, j) == 0.0);
    }
    t.backward(t.sum_all(g));
    for (int j = 0; j < 3; ++j) {
        REQUIRE(x.grad(2, j) == 2.0);  // gathered twice
        REQUIRE(x.grad(1, j) == 0.0);
        REQUIRE(x.grad(0, j) == 1.0);
    }
    const auto report = grad_check<D>(
        [&](Tape<D>& tp) { return tp.mean_all(tp.gather_rows(tp.param(x), idx)); }, {&x});
    REQUIRE(report.max_rel_err < 1e-8);
}

TEST_CASE("spmm forward and backward") {
    SparseMatrix s;
    s.rows = 2;
    s.cols = 3;
    s.triplets = {{0, 1, 1.0}, {1, 0, 0.25}, {1, 2, 0.75}};
    ParamStore<D> store(5);
    auto& x = store.create_glorot("x", {3, 2}, 3, 2);
    const auto report = grad_check<D>(
        [&](Tape<D>& t) { return t.mean_all(t.spmm_op(s, t.param(x))); }, {&x});
    REQUIRE(report.max_rel_err < 1e-8);
}

TEST_CASE("conv2d forward matches the direct loop oracle") {
    const Tensor<D> x = random_tensor({5, 6, 2}, 13);
    const Tensor<D> k = random_tensor({3, 3, 2, 4}, 14);
    const int stride = 2, pad = 1;
    Tape<D> t;
    const Id y = t.conv2d(t.constant(x), t.constant(k), stride, pad);
    const Tensor<D>& out = t.value(y);
    REQUIRE(out.shape() == std::vector<int>{3, 3, 4});
    for (int oy = 0; oy < 3; ++oy)
        for (int ox = 0; ox < 3; ++ox)
            for (int o = 0; o < 4; ++o) {
                double acc = 0;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx)
                        for (int c = 0; c < 2; ++c) {
                            const int yy = oy * stride + ky - pad;
                            const int xx = ox * stride + kx - pad;
                            if (yy < 0 || yy >= 5 || xx < 0 || xx >= 6) continue;
                            acc += x(yy, xx, c) * k(ky, kx, c, o);
                        }
                REQUIRE(out(oy, ox, o) == Approx(acc).margin(1e-10));
            }
}

TEST_CASE("conv2d special cases: 1x1 identity and constant averaging") {
    Tape<D> t;
    const Tensor<D> x = random_tensor({4, 4, 3}, 15);
    Tensor<D> k1({1, 1, 3, 3});
    for (int c = 0; c < 3; ++c) k1(0, 0, c, c) = 1.0;
    const Id y = t.conv2d(t.constant(x), t.constant(k1), 1, 0);
    for (int64_t i = 0; i < x.numel(); ++i) REQUIRE(t.value(y)[i] == Approx(x[i]).margin(1e-14));

    const Tensor<D> constant = Tensor<D>::full({5, 5, 1}, 2.0);
    const Tensor<D> avg = Tensor<D>::full({3, 3, 1, 1}, 1.0 / 9.0);
    const Id z = t.conv2d(t.constant(constant), t.constant(avg), 1, 0);
    for (int64_t i = 0; i < t.value(z).numel(); ++i)
        REQUIRE(t.value(z)[i] == Approx(2.0).margin(1e-12));
}

TEST_CASE("conv2d, bias, upsample pass grad_check") {
    ParamStore<D> store(6);
    auto& x = store.create_glorot("x", {4, 4, 2}, 8, 8);
    auto& k = store.create_glorot("k", {3, 3, 2, 3}, 18, 27);
    auto& b = store.create_glorot("b", {3}, 3, 3);
    const auto build = [&](Tape<D>& t) {
        const Id conv = t.add_channel_bias(t.conv2d(t.param(x), t.param(k), 2, 1), t.param(b));
        const Id up = t.upsample2x(t.relu(conv));
        return t.mean_all(t.reshape(up, {16, 3}));
    };
    const auto report = grad_check<D>(build, {&x, &k, &b});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-7);
}

TEST_CASE("grid_sample gradients flow to map and coordinates") {
    ParamStore<D> store(7);
    auto& map = store.create_glorot("map", {5, 4, 3}, 20, 3);
    auto& grid = store.create_glorot("grid", {6, 2}, 2, 2);
    // keep samples strictly inside and off pixel boundaries
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(0.2, 0.8);
    for (int i = 0; i < 6; ++i) {
        grid.value(i, 0) = dist(rng) + (i % 3);
        grid.value(i, 1) = dist(rng) + (i % 4);
    }
    const auto build = [&](Tape<D>& t) {
        return t.mean_all(t.grid_sample(t.param(map), t.param(grid)));
    };
    const auto report = grad_check<D>(build, {&map, &grid});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-7);

    // detached coordinates receive no gradient
    grid.zero_grad();
    map.zero_grad();
    Tape<D> t;
    const Id out = t.grid_sample(t.param(map), t.detach(t.param(grid)));
    t.backward(t.mean_all(out));
    for (int64_t i = 0; i < grid.grad.numel(); ++i) REQUIRE(grid.grad[i] == 0.0);
}

TEST_CASE("projection gradients match finite differences") {
    ParamStore<D> store(8);
    auto& v = store.create_glorot("v", {5, 3}, 3, 3);
    for (int i = 0; i < 5; ++i) {
        v.value(i, 0) *= 20;
        v.value(i, 1) *= 20;
        v.value(i, 2) = 90 + 10 * v.value(i, 2);
    }
    const Camera cam{70, 65, 32, 31, 64, 64};
    const auto build = [&](Tape<D>& t) {
        const Id uv = t.project_points(t.param(v), cam);
        return t.mean_all(t.mul(uv, uv));
    };
    const auto report = grad_check<D>(build, {&v});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-6);

    Tape<D> t;
    Tensor<D> behind({1, 3});
    behind(0, 2) = -3;
    REQUIRE_THROWS_AS(t.project_points(t.constant(behind), cam), std::runtime_error);
}

TEST_CASE("full sampling path gradient: vertices through projection and bilinear lookup") {
    ParamStore<D> store(9);
    auto& v = store.create_glorot("v", {4, 3}, 3, 3);
    for (int i = 0; i < 4; ++i) {
        v.value(i, 0) = 3.0 * v.value(i, 0) + 0.37;
        v.value(i, 1) = 3.0 * v.value(i, 1) - 0.21;
        v.value(i, 2) = 25 + 2 * v.value(i, 2);
    }
    auto& map = store.create_glorot("map", {6, 6, 2}, 36, 2);
    const Camera cam{40, 40, 12, 12, 24, 24};
    const auto build = [&](Tape<D>& t) {
        const Id uv = t.project_points(t.param(v), cam);
        Tensor<D> sc({2});
        sc[0] = 6.0 / cam.width;
        sc[1] = 6.0 / cam.height;
        Tensor<D> sh({2});
        sh[0] = sh[1] = -0.5;
        const Id grid = t.add_rowvec(t.mul_rowvec(uv, t.constant(sc)), t.constant(sh));
        return t.mean_all(t.grid_sample(t.param(map), grid));
    };
    const auto report = grad_check<D>(build, {&v, &map});
    INFO(report.worst_param);
    REQUIRE(report.max_rel_err < 1e-6);
}

TEST_CASE("bce_with_logits values and gradient") {
    Tape<D> t;
    const Tensor<D> zeros({2, 3});
    const Tensor<D> half = Tensor<D>::full({2, 3}, 0.5);
    const Id ln2 = t.bce_with_logits(t.constant(zeros), t.constant(half));
    REQUIRE(t.value(ln2)[0] == Approx(std::log(2.0)).margin(1e-12));

    // saturated logits matching the target are essentially free
    Tensor<D> logits({2}), targets({2});
    logits[0] = 20;
    targets[0] = 1;
    logits[1] = -20;
    targets[1] = 0;
    const Id tiny = t.bce_with_logits(t.constant(logits), t.constant(targets));
    REQUIRE(t.value(tiny)[0] < 1e-8);

    ParamStore<D> store(10);
    auto& z = store.create_glorot("z", {3, 4}, 3, 4);
    const Tensor<D> target = random_tensor({3, 4}, 99, 0, 1);
    const auto report = grad_check<D>(
        [&](Tape<D>& tp) { return tp.bce_with_logits(tp.param(z), tp.constant(target)); }, {&z});
    REQUIRE(report.max_rel_err < 1e-8);
}

TEST_CASE("non-finite op outputs are trapped in checked mode") {
    Tape<D> t;
    Tensor<D> zero({1, 1});
    REQUIRE_THROWS_WITH(t.recip(t.constant(zero)), Catch::Matchers::ContainsSubstring("recip"));
    Tape<D> unchecked(false);
    REQUIRE_NOTHROW(unchecked.recip(unchecked.constant(zero)));
}

TEST_CASE("backward requires a scalar loss") {
    Tape<D> t;
    const Id x = t.constant(random_tensor({2, 2}, 1));
    REQUIRE_THROWS_AS(t.backward(x), std::invalid_argument);
}
