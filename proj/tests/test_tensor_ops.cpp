#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "sdp/ops.hpp"
#include "test_util.hpp"

using namespace sdp;
using sdp_test::max_grad_rel_err;
using sdp_test::rel_err;

namespace {

// Independent nested-loop oracle: direct translation of the cross-correlation
// formula, reading zero-padded positions explicitly.
template <class T>
TensorT<T> conv_reference(const TensorT<T>& x, const ConvParamsT<T>& p) {
    const std::int64_t batch = x.dim(0), len = x.dim(2);
    const std::int64_t out_len = conv1d_out_len(len, p.kernel(), p.stride, p.padding);
    TensorT<T> y({batch, p.c_out(), out_len});
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t co = 0; co < p.c_out(); ++co) {
            for (std::int64_t lo = 0; lo < out_len; ++lo) {
                T acc = p.bias[static_cast<std::size_t>(co)];
                for (std::int64_t ci = 0; ci < p.c_in(); ++ci) {
                    for (std::int64_t kk = 0; kk < p.kernel(); ++kk) {
                        const std::int64_t li = lo * p.stride + kk - p.padding;
                        const T xv = (li >= 0 && li < len) ? x[x.at(b, ci, li)] : T(0);
                        acc += p.weight[p.weight.at(co, ci, kk)] * xv;
                    }
                }
                y[y.at(b, co, lo)] = acc;
            }
        }
    }
    return y;
}

template <class T>
ConvParamsT<T> random_conv(std::int64_t c_in, std::int64_t c_out, std::int64_t k,
                           std::int64_t stride, std::int64_t padding, Rng& rng) {
    ConvParamsT<T> p;
    p.weight = TensorT<T>::randn({c_out, c_in, k}, rng, T(0.5));
    p.bias = TensorT<T>::randn({c_out}, rng, T(0.5));
    p.stride = stride;
    p.padding = padding;
    return p;
}

}  // namespace

TEST_CASE("conv1d forward: zero input yields per-channel bias") {
    ConvParamsT<float> p;
    p.weight = Tensor::full({3, 2, 3}, 0.7f);
    p.bias = Tensor({3}, {0.1f, -0.5f, 2.0f});
    p.padding = 1;
    const Tensor x = Tensor::zeros({2, 2, 8});
    const Tensor y = conv1d_forward(x, p);
    for (std::int64_t b = 0; b < 2; ++b) {
        for (std::int64_t co = 0; co < 3; ++co) {
            for (std::int64_t l = 0; l < 8; ++l) {
                CHECK(y[y.at(b, co, l)] == p.bias[static_cast<std::size_t>(co)]);
            }
        }
    }
}

TEST_CASE("conv1d forward: k=1 scaling") {
    ConvParamsT<float> p;
    p.weight = Tensor({1, 1, 1}, {2.0f});
    p.bias = Tensor({1}, {0.0f});
    const Tensor x = Tensor({1, 1, 3}, {1.0f, 2.0f, 3.0f});
    const Tensor y = conv1d_forward(x, p);
    CHECK(y.data == std::vector<float>{2.0f, 4.0f, 6.0f});
}

TEST_CASE("conv1d forward matches nested-loop reference (seeded case)") {
    Rng rng(0);
    auto p = random_conv<float>(2, 4, 3, 1, 1, rng);
    const Tensor x = Tensor::randn({1, 2, 16}, rng);
    const Tensor got = conv1d_forward(x, p);
    const Tensor want = conv_reference(x, p);
    REQUIRE(got.shape == want.shape);
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(std::abs(got[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) <
              1e-6f);
    }
}

TEST_CASE("conv1d forward matches reference on 100 randomized draws") {
    Rng rng(1234);
    for (int trial = 0; trial < 100; ++trial) {
        const std::int64_t c_in = 1 + static_cast<std::int64_t>(rng.uniform_index(4));
        const std::int64_t c_out = 1 + static_cast<std::int64_t>(rng.uniform_index(4));
        const std::int64_t k = 1 + 2 * static_cast<std::int64_t>(rng.uniform_index(3));
        const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.uniform_index(2));
        const std::int64_t padding = static_cast<std::int64_t>(rng.uniform_index(3));
        const std::int64_t batch = 1 + static_cast<std::int64_t>(rng.uniform_index(3));
        std::int64_t len = 4 + static_cast<std::int64_t>(rng.uniform_index(21));
        if (len + 2 * padding < k) len = k;
        auto p = random_conv<float>(c_in, c_out, k, stride, padding, rng);
        const Tensor x = Tensor::randn({batch, c_in, len}, rng);
        const Tensor got = conv1d_forward(x, p);
        const Tensor want = conv_reference(x, p);
        REQUIRE(got.shape == want.shape);
        for (std::int64_t i = 0; i < got.numel(); ++i) {
            REQUIRE(std::abs(got[static_cast<std::size_t>(i)] -
                             want[static_cast<std::size_t>(i)]) < 1e-6f);
        }
    }
}

TEST_CASE("conv1d forward is deterministic") {
    Rng rng(5);
    auto p = random_conv<float>(3, 2, 3, 1, 1, rng);
    const Tensor x = Tensor::randn({2, 3, 12}, rng);
    const Tensor a = conv1d_forward(x, p);
    const Tensor b = conv1d_forward(x, p);
    CHECK(std::memcmp(a.ptr(), b.ptr(), sizeof(float) * a.data.size()) == 0);
}

TEST_CASE("conv1d backward: zero cotangent gives zero gradients") {
    Rng rng(9);
    auto p = random_conv<float>(2, 3, 3, 1, 1, rng);
    const Tensor x = Tensor::randn({2, 2, 8}, rng);
    Conv1dTapeT<float> tape;
    const Tensor y = conv1d_forward(x, p, &tape);
    const Tensor gz = Tensor::zeros(y.shape);
    auto g = conv1d_backward(gz, tape, p);
    for (auto v : g.input.data) CHECK(v == 0.0f);
    for (auto v : g.weight.data) CHECK(v == 0.0f);
    for (auto v : g.bias.data) CHECK(v == 0.0f);
}

TEST_CASE("conv1d backward: k=1 single channel weight gradient is sum x*g") {
    ConvParamsT<float> p;
    p.weight = Tensor({1, 1, 1}, {1.5f});
    p.bias = Tensor({1}, {0.0f});
    const Tensor x = Tensor({1, 1, 4}, {1.0f, -2.0f, 3.0f, 0.5f});
    Conv1dTapeT<float> tape;
    (void)conv1d_forward(x, p, &tape);
    const Tensor gout = Tensor({1, 1, 4}, {0.5f, 1.0f, -1.0f, 2.0f});
    auto g = conv1d_backward(gout, tape, p);
    float expect = 0.0f;
    for (int i = 0; i < 4; ++i) expect += x.data[static_cast<std::size_t>(i)] * gout.data[static_cast<std::size_t>(i)];
    CHECK(g.weight[0] == doctest::Approx(expect));
}

TEST_CASE("tape is consumed exactly once") {
    Rng rng(2);
    auto p = random_conv<float>(1, 1, 3, 1, 1, rng);
    const Tensor x = Tensor::randn({1, 1, 6}, rng);
    Conv1dTapeT<float> tape;
    const Tensor y = conv1d_forward(x, p, &tape);
    const Tensor g = Tensor::full(y.shape, 1.0f);
    (void)conv1d_backward(g, tape, p);
    CHECK_THROWS_AS((void)conv1d_backward(g, tape, p), NumericError);
    Conv1dTapeT<float> empty;
    CHECK_THROWS_AS((void)conv1d_backward(g, empty, p), NumericError);
}

// Finite-difference oracles run in 64-bit mode; loss is sum(y^2)/2 so the
// output cotangent equals y itself.
namespace {

template <class MakeInput, class MakeParams>
void conv_fd_check(MakeInput make_x, MakeParams make_p, Rng& rng) {
    auto p = make_p(rng);
    Tensor64 x = make_x(rng);
    const auto loss = [&]() {
        const Tensor64 y = conv1d_forward(x, p);
        double acc = 0.0;
        for (auto v : y.data) acc += 0.5 * v * v;
        return acc;
    };
    Conv1dTapeT<double> tape;
    const Tensor64 y = conv1d_forward(x, p, &tape);
    auto g = conv1d_backward(y, tape, p);
    const double h = 1e-4;
    CHECK(max_grad_rel_err(x, g.input, loss, h) < 1e-5);
    CHECK(max_grad_rel_err(p.weight, g.weight, loss, h) < 1e-5);
    CHECK(max_grad_rel_err(p.bias, g.bias, loss, h) < 1e-5);
}

}  // namespace

TEST_CASE("conv1d backward matches central finite differences (3 shapes)") {
    Rng rng(77);
    conv_fd_check(
        [](Rng& r) { return Tensor64::randn({2, 2, 8}, r); },
        [](Rng& r) { return random_conv<double>(2, 2, 3, 1, 1, r); }, rng);
    conv_fd_check(
        [](Rng& r) { return Tensor64::randn({1, 3, 10}, r); },
        [](Rng& r) { return random_conv<double>(3, 2, 5, 1, 2, r); }, rng);
    conv_fd_check(
        [](Rng& r) { return Tensor64::randn({2, 1, 12}, r); },
        [](Rng& r) { return random_conv<double>(1, 4, 3, 2, 1, r); }, rng);
}

TEST_CASE("linear forward: identity and constant maps") {
    LinearParamsT<float> ident;
    ident.weight = Tensor({3, 3});
    for (int i = 0; i < 3; ++i) ident.weight[ident.weight.at(i, i)] = 1.0f;
    ident.bias = Tensor({3});
    Rng rng(4);
    const Tensor x = Tensor::randn({2, 3}, rng);
    const Tensor y = linear_forward(x, ident);
    CHECK(y.data == x.data);

    LinearParamsT<float> constant;
    constant.weight = Tensor({2, 3});
    constant.bias = Tensor({2}, {5.0f, -1.0f});
    const Tensor z = linear_forward(x, constant);
    for (std::int64_t b = 0; b < 2; ++b) {
        CHECK(z[z.at(b, 0)] == 5.0f);
        CHECK(z[z.at(b, 1)] == -1.0f);
    }
}

TEST_CASE("linear backward matches finite differences (3 shapes)") {
    Rng rng(11);
    for (auto dims : {std::pair<std::int64_t, std::int64_t>{3, 4},
                      {4, 3},
                      {5, 2}}) {
        LinearParamsT<double> p;
        p.weight = Tensor64::randn({dims.second, dims.first}, rng);
        p.bias = Tensor64::randn({dims.second}, rng);
        Tensor64 x = Tensor64::randn({4, dims.first}, rng);
        const auto loss = [&]() {
            const Tensor64 y = linear_forward(x, p);
            double acc = 0.0;
            for (auto v : y.data) acc += 0.5 * v * v;
            return acc;
        };
        LinearTapeT<double> tape;
        const Tensor64 y = linear_forward(x, p, &tape);
        auto g = linear_backward(y, tape, p);
        CHECK(max_grad_rel_err(x, g.input, loss, 1e-4) < 1e-5);
        CHECK(max_grad_rel_err(p.weight, g.weight, loss, 1e-4) < 1e-5);
        CHECK(max_grad_rel_err(p.bias, g.bias, loss, 1e-4) < 1e-5);
    }
}

TEST_CASE("elementwise add identities and broadcast") {
    Rng rng(6);
    const Tensor x = Tensor::randn({2, 3, 4}, rng);
    const Tensor z = Tensor::zeros({2, 3, 4});
    CHECK(elementwise_add(x, z).data == x.data);

    // leading-axis broadcast of [3,4] over [2,3,4]
    const Tensor y = Tensor::randn({3, 4}, rng);
    const Tensor s = elementwise_add(x, y);
    for (std::int64_t b = 0; b < 2; ++b) {
        for (std::int64_t i = 0; i < 12; ++i) {
            CHECK(s.data[static_cast<std::size_t>(b * 12 + i)] ==
                  doctest::Approx(x.data[static_cast<std::size_t>(b * 12 + i)] +
                                  y.data[static_cast<std::size_t>(i)]));
        }
    }
    const Tensor gy = elementwise_add_backward_y(s, y.shape);
    for (std::int64_t i = 0; i < 12; ++i) {
        CHECK(gy.data[static_cast<std::size_t>(i)] ==
              doctest::Approx(s.data[static_cast<std::size_t>(i)] +
                              s.data[static_cast<std::size_t>(12 + i)]));
    }

    const Tensor bad = Tensor::zeros({5});
    CHECK_THROWS_AS((void)elementwise_add(x, bad), ShapeError);
}

TEST_CASE("scale is exact arithmetic") {
    const Tensor x = Tensor({4}, {1.0f, -2.0f, 0.0f, 8.0f});
    const Tensor y = elementwise_scale(x, 0.25f);
    CHECK(y.data == std::vector<float>{0.25f, -0.5f, 0.0f, 2.0f});
}

TEST_CASE("mean over singleton axis squeezes") {
    Rng rng(8);
    const Tensor x = Tensor::randn({1, 3, 4}, rng);
    const Tensor m = mean_over_axis(x, 0);
    CHECK(m.shape == std::vector<std::int64_t>{3, 4});
    CHECK(m.data == x.data);
}

TEST_CASE("mean_over_axis backward distributes grad/T and matches FD") {
    Rng rng(13);
    for (std::size_t axis : {0u, 1u, 2u}) {
        Tensor64 x = Tensor64::randn({3, 4, 5}, rng);
        const auto loss = [&]() {
            const Tensor64 m = mean_over_axis(x, axis);
            double acc = 0.0;
            for (auto v : m.data) acc += 0.5 * v * v;
            return acc;
        };
        const Tensor64 m = mean_over_axis(x, axis);
        const Tensor64 g = mean_over_axis_backward(m, x.shape, axis);
        CHECK(max_grad_rel_err(x, g, loss, 1e-4) < 1e-5);
    }
}

TEST_CASE("non-finite values are rejected when checks are on") {
    ConvParamsT<float> p;
    p.weight = Tensor({1, 1, 1}, {std::numeric_limits<float>::infinity()});
    p.bias = Tensor({1}, {0.0f});
    const Tensor x = Tensor({1, 1, 2}, {1.0f, 1.0f});
    CHECK_THROWS_AS((void)conv1d_forward(x, p), NumericError);
}
