#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sflsim/errors.hpp"
#include "sflsim/nn.hpp"

using namespace sflsim;

namespace {

Batch single(const Shape3& shape, std::vector<double> x, int label) {
    Batch b;
    b.n = 1;
    b.shape = shape;
    b.x = std::move(x);
    b.y = {label};
    return b;
}

} // namespace

TEST_CASE("zero parameters give zero logits") {
    const ModelSpec spec = SpecBuilder({1, 1, 4}).dense(6).build(6);
    const ParamVector params(static_cast<std::size_t>(spec.param_count()), 0.0);
    const auto logits = forward(spec, params, single({1, 1, 4}, {0.3, -0.1, 0.7, 0.2}, 0));
    for (double v : logits) CHECK(v == 0.0);
}

TEST_CASE("identity dense layer passes input through") {
    const ModelSpec spec = SpecBuilder({1, 1, 3}).dense(3).build(3);
    ParamVector params(static_cast<std::size_t>(spec.param_count()), 0.0);
    for (int i = 0; i < 3; ++i) params[static_cast<std::size_t>(i * 3 + i)] = 1.0;
    const std::vector<double> x = {0.25, -1.5, 3.0};
    const auto logits = forward(spec, params, single({1, 1, 3}, x, 0));
    for (int i = 0; i < 3; ++i) CHECK(logits[static_cast<std::size_t>(i)] == x[static_cast<std::size_t>(i)]);
}

TEST_CASE("two-layer MLP matches hand matrix arithmetic") {
    // W1 = [[1, 2], [0, -1]], b1 = [0.5, 0], relu, W2 = [[1, 1], [2, 0]], b2 = [0, -1]
    const ModelSpec spec = SpecBuilder({1, 1, 2}).dense(2).relu().dense(2).build(2);
    ParamVector p = {1, 2, 0, -1, 0.5, 0, /* layer 2 */ 1, 1, 2, 0, 0, -1};
    REQUIRE(p.size() == static_cast<std::size_t>(spec.param_count()));
    // x = [1, -2]: h = relu([1*1+2*(-2)+0.5, -1*(-2)]) = relu([-2.5, 2]) = [0, 2]
    // logits = [0+2+0, 0+0-1] = [2, -1]
    const auto logits = forward(spec, p, single({1, 1, 2}, {1.0, -2.0}, 0));
    CHECK(logits[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(logits[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("forward rejects shape mismatch") {
    const ModelSpec spec = SpecBuilder({1, 1, 3}).dense(2).build(2);
    const ParamVector params(static_cast<std::size_t>(spec.param_count()), 0.0);
    CHECK_THROWS_AS(forward(spec, params, single({1, 1, 4}, {1, 2, 3, 4}, 0)), shape_error);
}

TEST_CASE("cross entropy fixtures") {
    SUBCASE("uniform logits over 10 classes") {
        const std::vector<double> logits(10, 0.0);
        CHECK(cross_entropy(logits, 1, 10, {3}) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    }
    SUBCASE("confident logit at the true class approaches zero") {
        std::vector<double> logits(10, 0.0);
        logits[7] = 50.0;
        CHECK(cross_entropy(logits, 1, 10, {7}) < 1e-12);
    }
    SUBCASE("logits [1,2,3], label 2") {
        CHECK(cross_entropy({1.0, 2.0, 3.0}, 1, 3, {2}) ==
              doctest::Approx(0.40760596444438079).epsilon(1e-12));
    }
    SUBCASE("label out of range rejected") {
        CHECK_THROWS(cross_entropy({0.0, 0.0}, 1, 2, {2}));
    }
}

TEST_CASE("gradient vanishes at a fitted minimum") {
    // Linearly separable pair driven to a confident fit; gradient ~ 0.
    const ModelSpec spec = SpecBuilder({1, 1, 2}).dense(2).build(2);
    ParamVector p = {30.0, 0.0, 0.0, 30.0, 0.0, 0.0};
    Batch b;
    b.n = 2;
    b.shape = {1, 1, 2};
    b.x = {1.0, 0.0, 0.0, 1.0};
    b.y = {0, 1};
    const auto g = backward(spec, p, b);
    CHECK(pv::l2_norm(g) < 1e-6);
}

TEST_CASE("squared-error gradient through a linear layer matches 2(wx-y)x") {
    const ModelSpec spec = SpecBuilder({1, 1, 3}).dense(1).build();
    const ParamVector w = {0.4, -0.2, 0.9, 0.1}; // weights + bias
    const std::vector<double> x = {1.0, 2.0, -0.5};
    const double y = 0.7;
    Batch b = single({1, 1, 3}, x, 0);
    b.y.clear();

    Workspace ws;
    const auto& out = forward_pass(spec, w, b, ws);
    const double pred = out[0];
    // L = (pred - y)^2, dL/dpred = 2(pred - y)
    ParamVector grad = pv::zeros_like(w);
    backward_pass(spec, w, b, ws, {2.0 * (pred - y)}, grad);
    for (int i = 0; i < 3; ++i)
        CHECK(grad[static_cast<std::size_t>(i)] ==
              doctest::Approx(2.0 * (pred - y) * x[static_cast<std::size_t>(i)]).epsilon(1e-12));
    CHECK(grad[3] == doctest::Approx(2.0 * (pred - y)).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
    Rng rng(70123);
    for (const auto& spec : oracles::small_specs()) {
        REQUIRE(spec.param_count() <= 5000);
        const ParamVector params = init_params(spec, rng.next_u64());
        const Batch batch =
            oracles::random_batch(spec.input, spec.output().count(), 3, rng);
        const auto analytic = backward(spec, params, batch);
        const auto fd = oracles::fd_gradient(spec, params, batch);
        CHECK(oracles::max_rel_error(analytic, fd) < 1e-4);
    }
}

TEST_CASE("sgd step fixtures") {
    const ModelSpec spec = SpecBuilder({1, 1, 1}).dense(1).build();
    SUBCASE("plain step") {
        ModelState s;
        s.spec = spec;
        s.params = {1.0, 0.0};
        s.reset_optimizer(OptKind::Sgd);
        sgd_step(s, {1.0, 0.0}, 0.1);
        CHECK(s.params[0] == doctest::Approx(0.9).epsilon(1e-15));
    }
    SUBCASE("zero gradient with zero accumulator is a fixed point") {
        ModelState s;
        s.spec = spec;
        s.params = {1.0, -2.0};
        s.reset_optimizer(OptKind::Sgd);
        sgd_step(s, {0.0, 0.0}, 0.1, 0.9);
        CHECK(s.params[0] == 1.0);
        CHECK(s.params[1] == -2.0);
    }
    SUBCASE("momentum recurrence over two steps") {
        ModelState s;
        s.spec = spec;
        s.params = {1.0, 0.0};
        s.reset_optimizer(OptKind::Sgd);
        sgd_step(s, {1.0, 0.0}, 0.1, 0.9);
        CHECK(s.params[0] == doctest::Approx(0.9).epsilon(1e-15));
        sgd_step(s, {1.0, 0.0}, 0.1, 0.9); // v = 0.9*1 + 1 = 1.9
        CHECK(s.params[0] == doctest::Approx(0.71).epsilon(1e-15));
    }
    SUBCASE("negative lr rejected") {
        ModelState s;
        s.spec = spec;
        s.params = {1.0, 0.0};
        CHECK_THROWS(sgd_step(s, {1.0, 0.0}, -0.1));
    }
}

TEST_CASE("adam step fixtures") {
    const ModelSpec spec = SpecBuilder({1, 1, 1}).dense(1).build();
    SUBCASE("zero gradient with zero moments is a fixed point") {
        ModelState s;
        s.spec = spec;
        s.params = {0.5, 0.0};
        s.reset_optimizer(OptKind::Adam);
        adam_step(s, {0.0, 0.0}, 0.01);
        CHECK(s.params[0] == 0.5);
    }
    SUBCASE("first step magnitude is about lr") {
        ModelState s;
        s.spec = spec;
        s.params = {0.5, 0.25};
        s.reset_optimizer(OptKind::Adam);
        adam_step(s, {3.0, -7.0}, 0.01, 0.9, 0.999, 1e-12);
        CHECK(s.params[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-8));
        CHECK(s.params[1] == doctest::Approx(0.25 + 0.01).epsilon(1e-8));
    }
    SUBCASE("three steps match a hand-unrolled recurrence") {
        // Scalar quadratic f(w) = 0.5*(w-2)^2, grad = w - 2.
        ModelState s;
        s.spec = spec;
        s.params = {0.0, 0.0};
        s.reset_optimizer(OptKind::Adam);
        const double lr = 0.1, b1 = 0.5, b2 = 0.9, eps = 1e-8;
        double w = 0.0, m = 0.0, v = 0.0;
        for (int t = 1; t <= 3; ++t) {
            const double g = w - 2.0;
            adam_step(s, {g, 0.0}, lr, b1, b2, eps);
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            const double mhat = m / (1 - std::pow(b1, t));
            const double vhat = v / (1 - std::pow(b2, t));
            w -= lr * mhat / (std::sqrt(vhat) + eps);
            CHECK(s.params[0] == doctest::Approx(w).epsilon(1e-12));
        }
    }
    SUBCASE("betas outside [0,1) rejected") {
        ModelState s;
        s.spec = spec;
        s.params = {0.0, 0.0};
        CHECK_THROWS(adam_step(s, {1.0, 0.0}, 0.01, 1.0, 0.999));
    }
}

TEST_CASE("fixed seed training is bit-identical") {
    const ModelSpec spec = SpecBuilder({1, 1, 4}).dense(8).relu().dense(3).build(3);
    Rng data_rng(99);
    const Batch batch = oracles::random_batch(spec.input, 3, 6, data_rng);

    const auto run = [&]() {
        ModelState s = make_model(spec, 1234);
        for (int i = 0; i < 25; ++i) sgd_step(s, backward(spec, s.params, batch), 0.05, 0.9);
        return s.params;
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("full-batch loss strictly decreases on a separable toy set") {
    const ModelSpec spec = SpecBuilder({1, 1, 2}).dense(2).build(2);
    Batch b;
    b.shape = {1, 1, 2};
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const int cls = i % 2;
        b.x.push_back(rng.uniform(0.1, 0.6) + (cls == 0 ? 0.4 : -0.1));
        b.x.push_back(rng.uniform(0.1, 0.6) + (cls == 1 ? 0.4 : -0.1));
        b.y.push_back(cls);
    }
    b.n = 20;

    ModelState s = make_model(spec, 42);
    double prev = cross_entropy(forward(spec, s.params, b), b.n, 2, b.y);
    for (int step = 0; step < 50; ++step) {
        sgd_step(s, backward(spec, s.params, b), 0.01);
        const double cur = cross_entropy(forward(spec, s.params, b), b.n, 2, b.y);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("parameter layout round-trips through per-layer slices") {
    const ModelSpec spec = mnist_convnet();
    const ParamVector p = init_params(spec, 7);
    ParamVector rebuilt(p.size(), 0.0);
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const auto off = static_cast<std::size_t>(spec.param_offset(li));
        const auto len = static_cast<std::size_t>(spec.layers[li].param_count());
        for (std::size_t i = 0; i < len; ++i) rebuilt[off + i] = p[off + i];
    }
    CHECK(rebuilt == p);
    CHECK(static_cast<std::int64_t>(p.size()) == spec.param_count());
}

TEST_CASE("reference architectures have the documented shapes") {
    const ModelSpec m = mnist_convnet();
    CHECK(m.output().count() == 10);
    const ModelSpec c = cifar_cnn(10);
    CHECK(c.output().count() == 10);
    const ModelSpec g = mnist_generator();
    CHECK(g.output() == Shape3{1, 28, 28});
    const ModelSpec cg = cifar_generator();
    CHECK(cg.output() == Shape3{3, 32, 32});
    int tconvs = 0;
    for (const auto& l : g.layers)
        if (l.kind == LayerKind::TConv) ++tconvs;
    CHECK(tconvs == 3);
    tconvs = 0;
    for (const auto& l : cg.layers)
        if (l.kind == LayerKind::TConv) ++tconvs;
    CHECK(tconvs == 5);
}
