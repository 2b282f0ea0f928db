#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdp/lif.hpp"
#include "test_util.hpp"

using namespace sdp;
using sdp_test::max_grad_rel_err;
using sdp_test::rel_err;

TEST_CASE("theta_of_m analytic values") {
    const Tensor64 m({3}, {0.0, 1.0, -3.0});
    const Tensor64 th = theta_of_m(m);
    CHECK(th[0] == 0.0);
    CHECK(th[1] == doctest::Approx(0.7071067811865476).epsilon(1e-12));
    CHECK(th[2] == doctest::Approx(-0.9486832980505138).epsilon(1e-12));
    const Tensor64 bad({1}, {std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS((void)theta_of_m(bad), NumericError);
}

TEST_CASE("dtheta_dm analytic values and vanishing tails") {
    const Tensor64 m({3}, {0.0, 1.0, 100.0});
    const Tensor64 d = dtheta_dm(m);
    CHECK(d[0] == 1.0);
    CHECK(d[1] == doctest::Approx(0.35355339059327373).epsilon(1e-12));
    CHECK(d[2] < 1e-5);
    const Tensor64 mneg({1}, {-100.0});
    CHECK(dtheta_dm(mneg)[0] < 1e-5);
}

TEST_CASE("dtheta_dm matches finite differences of theta_of_m on 1000 points") {
    Rng rng(21);
    for (int i = 0; i < 1000; ++i) {
        const double m = rng.uniform(-20.0, 20.0);
        Tensor64 mt({1}, {m});
        const double analytic = dtheta_dm(mt)[0];
        // dtheta/dm decays like 1/|m|^3, so the step must grow with |m| to
        // keep the difference quotient above roundoff.
        const double h = 1e-5 * (1.0 + std::abs(m));
        const Tensor64 mp({1}, {m + h});
        const Tensor64 mm({1}, {m - h});
        const double fd = (theta_of_m(mp)[0] - theta_of_m(mm)[0]) / (2.0 * h);
        REQUIRE(rel_err(analytic, fd) < 1e-8);
    }
}

TEST_CASE("theta stays in (-1,1) and is monotone in m") {
    Rng rng(22);
    double prev_m = -1e9, prev_th = -1.0;
    // Sorted sweep plus random draws.
    for (int i = 0; i < 100000; ++i) {
        const double m = rng.uniform(-50.0, 50.0);
        const Tensor64 th = theta_of_m(Tensor64({1}, {m}));
        REQUIRE(th[0] > -1.0);
        REQUIRE(th[0] < 1.0);
        if (m > prev_m) {
            // strictly increasing function
            if (prev_m > -1e8) REQUIRE(th[0] > prev_th);
        }
        prev_m = m;
        prev_th = th[0];
    }
}

TEST_CASE("surrogate window is inclusive on both ends") {
    CHECK(surrogate_grad_scalar(0.25) == 1.0);
    CHECK(surrogate_grad_scalar(0.75) == 0.0);
    CHECK(surrogate_grad_scalar(-0.1) == 0.0);
    CHECK(surrogate_grad_scalar(0.0) == 1.0);
    CHECK(surrogate_grad_scalar(0.5) == 1.0);
    CHECK(surrogate_grad_scalar(std::nextafter(0.5, 1.0)) == 0.0);
    CHECK(surrogate_grad_scalar(std::nextafter(0.0, -1.0)) == 0.0);
    const Tensor x({4}, {0.0f, 0.5f, 0.51f, -0.01f});
    const Tensor g = surrogate_grad(x);
    CHECK(g.data == std::vector<float>{1.0f, 1.0f, 0.0f, 0.0f});
}

TEST_CASE("lif forward: sub-threshold input stays silent") {
    LifParamsT<float> p;
    p.tau = 0.5f;
    p.m = Tensor::full({2}, 1.0f);  // theta ~ 0.707
    const Tensor currents = Tensor::zeros({4, 1, 2, 3});
    const Tensor s = lif_forward(currents, p);
    for (auto v : s.data) CHECK(v == 0.0f);
}

TEST_CASE("lif forward: hand-stepped single neuron trace") {
    LifParamsT<float> p;
    p.tau = 0.5f;
    p.m = Tensor::full({1}, 1.0f);  // theta = 0.70710678
    const Tensor currents({3, 1, 1}, {1.0f, 0.2f, 0.9f});
    LifTapeT<float> tape;
    const Tensor s = lif_forward(currents, p, &tape);
    CHECK(s.data == std::vector<float>{1.0f, 0.0f, 1.0f});
    CHECK(tape.u[0] == doctest::Approx(1.0f));
    CHECK(tape.u[1] == doctest::Approx(0.2f));
    CHECK(tape.u[2] == doctest::Approx(1.0f));  // 0.5*0.2 + 0.9
}

TEST_CASE("lif forward: supra-threshold every step keeps reset active") {
    LifParamsT<float> p;
    p.tau = 0.5f;
    p.m = Tensor::full({1}, 0.7f);  // theta ~ 0.5735
    const Tensor currents({4, 1, 1}, {0.8f, 0.9f, 0.75f, 0.6f});
    LifTapeT<float> tape;
    const Tensor s = lif_forward(currents, p, &tape);
    for (auto v : s.data) CHECK(v == 1.0f);
    // reset zeroes the decay term, so u[t] == I[t] exactly
    CHECK(tape.u.data == currents.data);
}

TEST_CASE("lif forward output is always binary") {
    Rng rng(30);
    LifParamsT<float> p;
    p.tau = 0.5f;
    p.m = Tensor::uniform({4}, rng, -1.0f, 2.0f);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor currents = Tensor::randn({3, 2, 4, 5}, rng);
        const Tensor s = lif_forward(currents, p);
        REQUIRE(s.is_binary());
    }
}

TEST_CASE("lif reset invariant: decay contribution is exactly zero after a spike") {
    Rng rng(31);
    LifParamsT<float> p;
    p.tau = 0.9f;
    p.m = Tensor::uniform({3}, rng, 0.1f, 1.0f);
    const Tensor currents = Tensor::randn({6, 2, 3, 4}, rng);
    LifTapeT<float> tape;
    (void)lif_forward(currents, p, &tape);
    const std::int64_t step = 2 * 3 * 4;
    for (std::int64_t t = 1; t < 6; ++t) {
        for (std::int64_t i = 0; i < step; ++i) {
            const std::size_t cur = static_cast<std::size_t>(t * step + i);
            const std::size_t prev = static_cast<std::size_t>((t - 1) * step + i);
            if (tape.s[prev] == 1.0f) {
                REQUIRE(tape.u[cur] == currents[cur]);
            }
        }
    }
}

TEST_CASE("lif backward: zero cotangent and closed surrogate window") {
    LifParamsT<double> p;
    p.tau = 0.5;
    p.m = Tensor64::full({1}, 1.0);
    {
        const Tensor64 currents({3, 1, 1}, {1.0, 0.2, 0.9});
        LifTapeT<double> tape;
        (void)lif_forward(currents, p, &tape);
        const Tensor64 gz = Tensor64::zeros(currents.shape);
        auto g = lif_backward(gz, tape, p);
        for (auto v : g.currents.data) CHECK(v == 0.0);
        CHECK(g.m[0] == 0.0);
    }
    {
        // No spike and u - theta far below the window at both steps.
        const Tensor64 currents({2, 1, 1}, {0.1, 0.05});
        LifTapeT<double> tape;
        const Tensor64 s = lif_forward(currents, p, &tape);
        for (auto v : s.data) REQUIRE(v == 0.0);
        const Tensor64 ones = Tensor64::full(currents.shape, 1.0);
        auto g = lif_backward(ones, tape, p);
        for (auto v : g.currents.data) CHECK(v == 0.0);
        CHECK(g.m[0] == 0.0);
    }
}

namespace {

// Symbolic unroll of the T=3 chain rule for one neuron, written directly
// from the recurrence (independent of the library's backward loop).
struct Unroll3 {
    double grad_i[3];
    double grad_theta;
};

Unroll3 unroll3(double tau, double theta, const double i[3], const double g[3]) {
    double u[3], s[3], pwin[3];
    u[0] = i[0];
    s[0] = u[0] >= theta ? 1.0 : 0.0;
    u[1] = tau * u[0] * (1.0 - s[0]) + i[1];
    s[1] = u[1] >= theta ? 1.0 : 0.0;
    u[2] = tau * u[1] * (1.0 - s[1]) + i[2];
    s[2] = u[2] >= theta ? 1.0 : 0.0;
    for (int t = 0; t < 3; ++t) {
        const double x = u[t] - theta;
        pwin[t] = (x >= 0.0 && x <= 0.5) ? 1.0 : 0.0;
    }
    const double a3 = g[2] * pwin[2];
    const double a2 = g[1] * pwin[1] + a3 * (tau * (1.0 - s[1]) - tau * u[1] * pwin[1]);
    const double a1 = g[0] * pwin[0] + a2 * (tau * (1.0 - s[0]) - tau * u[0] * pwin[0]);
    const double d3 = g[2];
    const double d2 = g[1] + a3 * (-tau * u[1]);
    const double d1 = g[0] + a2 * (-tau * u[0]);
    Unroll3 out;
    out.grad_i[0] = a1;
    out.grad_i[1] = a2;
    out.grad_i[2] = a3;
    out.grad_theta = -(d1 * pwin[0] + d2 * pwin[1] + d3 * pwin[2]);
    return out;
}

}  // namespace

TEST_CASE("lif backward matches the hand-unrolled 2-neuron T_S=3 oracle") {
    const double tau = 0.5;
    const double m_a = 1.0, m_b = 0.3;
    LifParamsT<double> p;
    p.tau = tau;
    p.m = Tensor64({2}, {m_a, m_b});

    const double i_a[3] = {1.0, 0.2, 0.9};
    const double i_b[3] = {0.1, 0.35, 0.5};
    const double g_a[3] = {0.7, -0.4, 0.2};
    const double g_b[3] = {-0.3, 0.5, 1.0};

    Tensor64 currents({3, 1, 2});
    Tensor64 grad_out({3, 1, 2});
    for (int t = 0; t < 3; ++t) {
        currents[currents.at(t, 0, 0)] = i_a[t];
        currents[currents.at(t, 0, 1)] = i_b[t];
        grad_out[grad_out.at(t, 0, 0)] = g_a[t];
        grad_out[grad_out.at(t, 0, 1)] = g_b[t];
    }

    LifTapeT<double> tape;
    (void)lif_forward(currents, p, &tape);
    auto g = lif_backward(grad_out, tape, p);

    const double theta_a = m_a / std::sqrt(1.0 + m_a * m_a);
    const double theta_b = m_b / std::sqrt(1.0 + m_b * m_b);
    const Unroll3 oa = unroll3(tau, theta_a, i_a, g_a);
    const Unroll3 ob = unroll3(tau, theta_b, i_b, g_b);

    for (int t = 0; t < 3; ++t) {
        CHECK(g.currents[currents.at(t, 0, 0)] == doctest::Approx(oa.grad_i[t]).epsilon(1e-6));
        CHECK(g.currents[currents.at(t, 0, 1)] == doctest::Approx(ob.grad_i[t]).epsilon(1e-6));
    }
    const double dth_a = 1.0 / ((1.0 + m_a * m_a) * std::sqrt(1.0 + m_a * m_a));
    const double dth_b = 1.0 / ((1.0 + m_b * m_b) * std::sqrt(1.0 + m_b * m_b));
    CHECK(g.m[0] == doctest::Approx(oa.grad_theta * dth_a).epsilon(1e-6));
    CHECK(g.m[1] == doctest::Approx(ob.grad_theta * dth_b).epsilon(1e-6));
}

TEST_CASE("channel-shared grad_m equals the sum of per-neuron threshold grads") {
    Rng rng(55);
    // 2 channels x 3 positions; the per-neuron reference treats every
    // position as its own channel and sums afterwards.
    LifParamsT<double> shared;
    shared.tau = 0.5;
    shared.m = Tensor64({2}, {0.8, -0.2});
    const Tensor64 currents = Tensor64::randn({4, 1, 2, 3}, rng);
    const Tensor64 grad_out = Tensor64::randn({4, 1, 2, 3}, rng);

    LifTapeT<double> tape;
    (void)lif_forward(currents, shared, &tape);
    auto g = lif_backward(grad_out, tape, shared);

    LifParamsT<double> per_neuron;
    per_neuron.tau = 0.5;
    per_neuron.m = Tensor64({6}, {0.8, 0.8, 0.8, -0.2, -0.2, -0.2});
    Tensor64 currents_r({4, 1, 6});
    Tensor64 grad_r({4, 1, 6});
    std::copy(currents.data.begin(), currents.data.end(), currents_r.data.begin());
    std::copy(grad_out.data.begin(), grad_out.data.end(), grad_r.data.begin());

    LifTapeT<double> tape_r;
    (void)lif_forward(currents_r, per_neuron, &tape_r);
    auto g_r = lif_backward(grad_r, tape_r, per_neuron);

    CHECK(g.m[0] == doctest::Approx(g_r.m[0] + g_r.m[1] + g_r.m[2]).epsilon(1e-12));
    CHECK(g.m[1] == doctest::Approx(g_r.m[3] + g_r.m[4] + g_r.m[5]).epsilon(1e-12));
    for (std::size_t i = 0; i < currents.data.size(); ++i) {
        CHECK(g.currents.data[i] == doctest::Approx(g_r.currents.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("lif backward matches finite differences of the smoothed forward") {
    Rng rng(66);
    int done = 0;
    for (int attempt = 0; attempt < 50 && done < 3; ++attempt) {
        LifParamsT<double> p;
        p.tau = 0.6;
        p.m = Tensor64::uniform({3}, rng, 0.2, 1.2);
        Tensor64 currents = Tensor64::randn({4, 2, 3, 2}, rng);
        const Tensor64 weights = Tensor64::randn(currents.shape, rng);

        LifTapeT<double> probe;
        (void)lif_forward(currents, p, &probe, FiringMode::smoothed);
        if (min_kink_distance(probe, p) < 1e-3) continue;
        ++done;

        const auto loss = [&]() {
            const Tensor64 s = lif_forward<double>(currents, p, nullptr, FiringMode::smoothed);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.data.size(); ++i) acc += weights.data[i] * s.data[i];
            return acc;
        };
        LifTapeT<double> tape;
        (void)lif_forward(currents, p, &tape, FiringMode::smoothed);
        auto g = lif_backward(weights, tape, p);
        CHECK(max_grad_rel_err(currents, g.currents, loss, 1e-5) < 1e-4);
        CHECK(max_grad_rel_err(p.m, g.m, loss, 1e-5) < 1e-4);
    }
    REQUIRE(done == 3);
}

TEST_CASE("lif backward requires a matching tape") {
    LifParamsT<float> p;
    p.tau = 0.5f;
    p.m = Tensor::full({1}, 1.0f);
    LifTapeT<float> empty;
    const Tensor g = Tensor::zeros({2, 1, 1});
    CHECK_THROWS_AS((void)lif_backward(g, empty, p), NumericError);
}
