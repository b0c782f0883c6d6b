// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/autodiff.hpp"

#include <cmath>

#include "doctest.h"
#include "selfpitch/adam.hpp"
#include "selfpitch/checkpoint.hpp"
#include "selfpitch/common.hpp"
#include "selfpitch/gradcheck.hpp"

using namespace selfpitch;
using namespace selfpitch::ad;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    Rng rng(seed);
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// requires rel err < 1e-4 at >= 20 sampled coordinates per input
void require_grad_ok(
    const std::function<Graph<double>::Id(Graph<double>&, std::vector<Tensor<double>*>&)>& build,
    std::vector<Tensor<double>*> inputs, double tol = 1e-4) {
    const GradCheckResult res = grad_check(build, inputs, 1e-5, 20, 42);
    INFO("max_rel_err=", res.max_rel_err, " checked=", res.checked, " skipped=", res.skipped);
    CHECK(res.checked > 0);
    CHECK(res.max_rel_err < tol);
}

}  // namespace

TEST_CASE("shape arithmetic and printing") {
    const Shape s = make_shape(2, 3, 4);
    CHECK(s.numel() == 24);
    CHECK(s.rows() == 6);
    CHECK(s.last() == 4);
    CHECK(s.str() == "(2,3,4)");
}

TEST_CASE("elementwise op values") {
    Graph<double> g;
    Tensor<double> a(make_shape(3), {1.0, -2.0, 0.5});
    Tensor<double> b(make_shape(3), {2.0, 3.0, -1.0});
    const auto ia = g.leaf(a), ib = g.leaf(b);
    CHECK(g.val(g.add(ia, ib))[1] == doctest::Approx(1.0));
    CHECK(g.val(g.mul(ia, ib))[0] == doctest::Approx(2.0));
    CHECK(g.val(g.div(ia, ib))[2] == doctest::Approx(-0.5));
    CHECK(g.val(g.affine(ia, 2.0, 1.0))[1] == doctest::Approx(-3.0));
    CHECK(g.val(g.relu(ia))[1] == 0.0);
    CHECK(g.val(g.abs(ia))[1] == 2.0);
    CHECK(g.val(g.sin(ia))[0] == doctest::Approx(std::sin(1.0)));
    CHECK(g.val(g.exp(ia))[0] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("add/mul shape mismatch raises a structured error") {
    Graph<double> g;
    Tensor<double> a(make_shape(2, 3));
    Tensor<double> b(make_shape(3, 2));
    const auto ia = g.leaf(a), ib = g.leaf(b);
    CHECK_THROWS_WITH_AS(g.add(ia, ib), doctest::Contains("add"), ShapeError);
    CHECK_THROWS_AS(g.matmul(g.leaf(a), g.leaf(a)), ShapeError);
}

TEST_CASE("huber value and kink") {
    Graph<double> g;
    Tensor<double> a(make_shape(3), {0.0, 0.5, 3.0});
    const auto h = g.huber(g.leaf(a), 1.0);
    CHECK(g.val(h)[0] == 0.0);
    CHECK(g.val(h)[1] == doctest::Approx(0.125));
    CHECK(g.val(h)[2] == doctest::Approx(2.5));
}

TEST_CASE("softmax rows sum to one and roll round-trips") {
    Graph<double> g;
    Tensor<double> a = random_tensor(make_shape(4, 7), 1);
    const auto ia = g.leaf(a);
    const auto p = g.softmax(ia);
    for (int r = 0; r < 4; ++r) {
        double sum = 0;
        for (int k = 0; k < 7; ++k) sum += g.val(p)[std::size_t(r) * 7 + k];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    const auto rolled = g.roll(g.roll(ia, 3), -3);
    for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(g.val(rolled)[i] == a.v[i]);  // exact
}

TEST_CASE("roll moves content upward by delta") {
    Graph<double> g;
    Tensor<double> a(make_shape(4), {1.0, 0.0, 0.0, 0.0});
    const auto r = g.roll(g.leaf(a), 1);
    CHECK(g.val(r)[1] == 1.0);  // out[k] = in[k - delta]
    CHECK(g.val(r)[0] == 0.0);
}

TEST_CASE("cross-entropy of softmax-matching target has zero gradient") {
    // CE(y, q) with softmax(y) == q: gradient p - q == 0
    Graph<double> g;
    Tensor<double> y(make_shape(5), {0.3, -0.2, 1.4, 0.0, -1.0});
    const auto iy = g.leaf(y);
    const auto p = g.softmax(iy);
    const auto q = g.constant(make_shape(5), std::span<const double>(g.val(p)));
    const auto ce = g.cross_entropy(iy, q);
    g.backward(g.sum(ce));
    for (const double gv : y.g) CHECK(std::abs(gv) < 1e-15);
}

TEST_CASE("cross-entropy rejects live targets") {
    Graph<double> g;
    Tensor<double> y(make_shape(3), {0.1, 0.2, 0.3});
    const auto iy = g.leaf(y);
    CHECK_THROWS_AS(g.cross_entropy(iy, iy), ShapeError);
}

TEST_CASE("conv1d grouped shape contract") {
    // groups=4, 8->8 channels, kernel 3, padding 1: output length == input length
    Graph<double> g;
    Tensor<double> x = random_tensor(make_shape(2, 8, 10), 2);
    Tensor<double> w = random_tensor(make_shape(8, 2, 3), 3);
    Tensor<double> b = random_tensor(make_shape(8), 4);
    const auto out = g.conv1d(g.leaf(x), g.leaf(w), g.leaf(b), 1, 1, 4, PadMode::kZero);
    CHECK(g.shape(out) == make_shape(2, 8, 10));
}

TEST_CASE("conv1d matches a hand-computed case") {
    // single channel, kernel [1,2,3], zero padding; out[l] = sum_k w[k] x[l+k-1]
    Graph<double> g;
    Tensor<double> x(make_shape(1, 1, 4), {1.0, 2.0, 3.0, 4.0});
    Tensor<double> w(make_shape(1, 1, 3), {1.0, 2.0, 3.0});
    const auto out = g.conv1d(g.leaf(x), g.leaf(w), -1, 1, 1, 1, PadMode::kZero);
    CHECK(g.val(out)[0] == doctest::Approx(8.0));   // 0 + 2*1 + 3*2
    CHECK(g.val(out)[1] == doctest::Approx(14.0));  // 1 + 4 + 9
    CHECK(g.val(out)[2] == doctest::Approx(20.0));  // 2 + 6 + 12
    CHECK(g.val(out)[3] == doctest::Approx(11.0));  // 3 + 8 + 0
}

TEST_CASE("conv1d replicate and circular padding preserve constants") {
    Graph<double> g;
    Tensor<double> x(make_shape(1, 1, 6), std::vector<double>(6, 2.5));
    Tensor<double> w = random_tensor(make_shape(1, 1, 5), 7);
    double wsum = 0;
    for (const double v : w.v) wsum += v;
    const auto rep = g.conv1d(g.leaf(x), g.leaf(w), -1, 1, 2, 1, PadMode::kReplicate);
    const auto cir = g.conv1d(g.leaf(x), g.leaf(w), -1, 1, 2, 1, PadMode::kCircular);
    for (int l = 0; l < 6; ++l) {
        CHECK(g.val(rep)[std::size_t(l)] == doctest::Approx(2.5 * wsum).epsilon(1e-12));
        CHECK(g.val(cir)[std::size_t(l)] == doctest::Approx(2.5 * wsum).epsilon(1e-12));
    }
}

TEST_CASE("gradients: every op passes central differences") {
    SUBCASE("add/mul/div/affine chain") {
        Tensor<double> a = random_tensor(make_shape(3, 4), 10);
        Tensor<double> b = random_tensor(make_shape(3, 4), 11, 0.5, 2.0);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto x = g.leaf(*in[0]), y = g.leaf(*in[1]);
                return g.sum(g.div(g.mul(g.add(x, y), g.affine(x, 0.5, 1.0)), y));
            },
            {&a, &b});
    }
    SUBCASE("scalar broadcast add/mul/div") {
        Tensor<double> a = random_tensor(make_shape(5), 12);
        Tensor<double> s(make_shape(1), {1.7});
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto x = g.leaf(*in[0]), k = g.leaf(*in[1]);
                return g.sum(g.add(g.div(g.mul(x, k), k), k));
            },
            {&a, &s});
    }
    SUBCASE("matmul") {
        Tensor<double> a = random_tensor(make_shape(3, 4), 13);
        Tensor<double> b = random_tensor(make_shape(4, 2), 14);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                return g.sum(g.matmul(g.leaf(*in[0]), g.leaf(*in[1])));
            },
            {&a, &b}, 1e-7);
    }
    SUBCASE("conv1d all pad modes, stride 1 and 2, groups") {
        for (const PadMode mode : {PadMode::kZero, PadMode::kReplicate, PadMode::kCircular}) {
            for (const int stride : {1, 2}) {
                Tensor<double> x = random_tensor(make_shape(2, 4, 9), 15);
                Tensor<double> w = random_tensor(make_shape(4, 2, 3), 16);
                Tensor<double> b = random_tensor(make_shape(4), 17);
                require_grad_ok(
                    [mode, stride](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                        return g.sum(g.conv1d(g.leaf(*in[0]), g.leaf(*in[1]), g.leaf(*in[2]),
                                              stride, 1, 2, mode));
                    },
                    {&x, &w, &b});
            }
        }
    }
    SUBCASE("relu softplus sin exp log abs") {
        Tensor<double> a = random_tensor(make_shape(4, 5), 18, 0.2, 2.0);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto x = g.leaf(*in[0]);
                return g.sum(
                    g.add(g.add(g.relu(x), g.softplus(x)),
                          g.add(g.add(g.sin(x), g.exp(g.affine(x, 0.3, 0.0))), g.abs(g.log(x)))));
            },
            {&a});
    }
    SUBCASE("cumsum") {
        Tensor<double> a = random_tensor(make_shape(3, 6), 19);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto c = g.cumsum(g.leaf(*in[0]));
                return g.sum(g.mul(c, c));
            },
            {&a});
    }
    SUBCASE("softmax and log_softmax") {
        Tensor<double> a = random_tensor(make_shape(2, 9), 20);
        Tensor<double> m = random_tensor(make_shape(2, 9), 21);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto y = g.leaf(*in[0]);
                const auto mask = g.leaf(*in[1]);
                return g.sum(g.add(g.mul(g.softmax(y), mask), g.mul(g.log_softmax(y), mask)));
            },
            {&a, &m});
    }
    SUBCASE("cross entropy wrt logits") {
        Tensor<double> y = random_tensor(make_shape(3, 8), 22);
        std::vector<double> q(24, 1.0 / 8.0);
        require_grad_ok(
            [&q](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto t = g.constant(make_shape(3, 8), std::span<const double>(q));
                return g.sum(g.cross_entropy(g.leaf(*in[0]), t));
            },
            {&y});
    }
    SUBCASE("huber") {
        Tensor<double> a = random_tensor(make_shape(12), 23, -2.0, 2.0);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                return g.sum(g.huber(g.leaf(*in[0]), 1.0));
            },
            {&a});
    }
    SUBCASE("roll and roll_rows") {
        Tensor<double> a = random_tensor(make_shape(3, 7), 24);
        Tensor<double> m = random_tensor(make_shape(3, 7), 25);
        const std::vector<int> deltas{2, -3, 0};
        require_grad_ok(
            [&deltas](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto x = g.leaf(*in[0]);
                const auto mask = g.leaf(*in[1]);
                return g.sum(g.mul(g.add(g.roll(x, 4), g.roll_rows(x, deltas)), mask));
            },
            {&a, &m});
    }
    SUBCASE("upsample linear and nearest") {
        Tensor<double> a = random_tensor(make_shape(2, 5), 26);
        Tensor<double> m = random_tensor(make_shape(2, 17), 27);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto x = g.leaf(*in[0]);
                const auto mask = g.leaf(*in[1]);
                return g.sum(g.mul(g.add(g.upsample_linear(x, 4, 17), g.upsample_nearest(x, 4, 17)),
                                   mask));
            },
            {&a, &m});
    }
    SUBCASE("stft magnitude") {
        Tensor<double> a = random_tensor(make_shape(40), 28);
        const StftPlan<double> plan = make_stft_plan<double>(16, 4);
        require_grad_ok(
            [&plan](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                return g.sum(g.stft_mag(g.leaf(*in[0]), plan));
            },
            {&a});
    }
    SUBCASE("reductions") {
        Tensor<double> a = random_tensor(make_shape(4, 6), 29);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto x = g.leaf(*in[0]);
                const auto rows = g.sum_rows(x);
                const auto cols = g.sum_axis0(x);
                return g.add(g.add(g.mean(x), g.sum(g.mul(rows, rows))), g.sum(g.mul(cols, cols)));
            },
            {&a});
    }
    SUBCASE("channel_norm") {
        Tensor<double> x = random_tensor(make_shape(2, 3, 8), 30);
        Tensor<double> gm = random_tensor(make_shape(3), 31, 0.5, 1.5);
        Tensor<double> bt = random_tensor(make_shape(3), 32);
        require_grad_ok(
            [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
                const auto y =
                    g.channel_norm(g.leaf(*in[0]), g.leaf(*in[1]), g.leaf(*in[2]), 1e-5);
                return g.sum(g.mul(y, y));
            },
            {&x, &gm, &bt});
    }
}

TEST_CASE("backward on a graph not touching a leaf leaves its gradient zero") {
    Graph<double> g;
    Tensor<double> used = random_tensor(make_shape(3), 33);
    Tensor<double> unused = random_tensor(make_shape(3), 34);
    const auto iu = g.leaf(used);
    g.leaf(unused);
    g.backward(g.sum(g.mul(iu, iu)));
    for (const double gv : unused.g) CHECK(gv == 0.0);
    bool any = false;
    for (const double gv : used.g) any = any || gv != 0.0;
    CHECK(any);
}

TEST_CASE("backward runs exactly once") {
    Graph<double> g;
    Tensor<double> a = random_tensor(make_shape(2), 35);
    const auto root = g.sum(g.leaf(a));
    g.backward(root);
    CHECK_THROWS_AS(g.backward(root), NumericError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor<double> p(make_shape(3), {1.0, 2.0, 3.0});
    std::vector<Tensor<double>*> params{&p};
    AdamState<double> adam(0.1);
    adam.step(params);
    CHECK(p.v[0] == 1.0);
    CHECK(p.v[2] == 3.0);
}

TEST_CASE("adam: first step with unit gradient moves by about lr") {
    // bias-corrected update with m_hat = 1, v_hat = 1: delta = lr / (1 + eps)
    Tensor<double> p(make_shape(2), {0.5, -0.25});
    p.g = {1.0, 1.0};
    std::vector<Tensor<double>*> params{&p};
    AdamState<double> adam(0.1);
    adam.step(params);
    CHECK(p.v[0] == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(p.v[1] == doctest::Approx(-0.35).epsilon(1e-6));
    CHECK(p.g[0] == 0.0);  // gradients consumed
}

TEST_CASE("adam: NaN gradient aborts with diagnostics") {
    Tensor<double> p(make_shape(1), {0.0});
    p.g = {std::nan("")};
    std::vector<Tensor<double>*> params{&p};
    AdamState<double> adam(0.1);
    CHECK_THROWS_AS(adam.step(params), NumericError);
}

TEST_CASE("adam: identical runs are bitwise identical") {
    auto run = [] {
        Tensor<double> p(make_shape(4), {1.0, -1.0, 2.0, 0.5});
        std::vector<Tensor<double>*> params{&p};
        AdamState<double> adam(0.05);
        for (int step = 0; step < 25; ++step) {
            Graph<double> g;
            const auto x = g.leaf(p);
            g.backward(g.sum(g.mul(g.sin(x), x)));
            adam.step(params);
        }
        return p.v;
    };
    const auto a = run();
    const auto b = run();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("grad_check skips relu kinks and reports them") {
    Tensor<double> a(make_shape(3), {0.0, 1.0, -1.0});  // exact kink at index 0
    const GradCheckResult res = grad_check(
        [](Graph<double>& g, std::vector<Tensor<double>*>& in) {
            return g.sum(g.relu(g.leaf(*in[0])));
        },
        {&a}, 1e-5, 3, 0);
    CHECK(res.skipped >= 1);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("checkpoint round-trip preserves names, shapes, values") {
    Checkpoint ckpt;
    Tensor<double> a = random_tensor(make_shape(3, 4), 40);
    Tensor<float> b(make_shape(5), {1.f, 2.f, 3.f, 4.f, 5.f});
    ckpt.put("stage0.block1.conv1.w", a);
    ckpt.put("head.b", b);
    const std::string path = "/tmp/selfpitch_test_ckpt.plck";
    save_checkpoint(path, ckpt);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.has("head.b"));
    Tensor<double> a2(make_shape(3, 4));
    loaded.get("stage0.block1.conv1.w", a2);
    for (std::size_t i = 0; i < a.v.size(); ++i)
        CHECK(a2.v[i] == doctest::Approx(a.v[i]).epsilon(1e-6));
    Tensor<double> wrong(make_shape(4, 3));
    CHECK_THROWS_AS(loaded.get("stage0.block1.conv1.w", wrong), ShapeError);
    CHECK_THROWS_AS(loaded.get("missing", a2), FormatError);
}

TEST_CASE("backward keeps buffers when asked") {
    Graph<double> g;
    Tensor<double> a = random_tensor(make_shape(4), 41);
    const auto x = g.leaf(a);
    const auto y = g.mul(x, x);
    g.backward(g.sum(y), /*free_buffers=*/false);
    CHECK(g.grad(y).size() == 4);
    CHECK(g.val(y).size() == 4);
}
