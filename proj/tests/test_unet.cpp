#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "reference_unet.hpp"
#include "sdp/kernels/kernels.hpp"
#include "sdp/unet.hpp"
#include "test_util.hpp"

using namespace sdp;
using sdp_test::max_grad_rel_err;

namespace {

UNetConfig tiny_cfg() {
    UNetConfig cfg;
    cfg.widths = {4, 8};
    cfg.horizon = 8;
    cfg.action_dim = 2;
    cfg.obs_dim = 6;
    cfg.t_s = 2;
    cfg.time_embed_dim = 8;
    cfg.cond_feat = 4;
    return cfg;
}

std::vector<std::int64_t> const_t(std::int64_t batch, std::int64_t v) {
    return std::vector<std::int64_t>(static_cast<std::size_t>(batch), v);
}

// Collect the spike tensors of every LIF tape (all spike-carrying edges).
template <class T>
std::vector<const TensorT<T>*> spike_edges(const UNetTapeT<T>& tape) {
    std::vector<const TensorT<T>*> out;
    out.push_back(&tape.enc.lif.s);
    auto add_block = [&out](const BlockTapeT<T>& b) {
        out.push_back(&b.lif1.s);
        out.push_back(&b.lif2.s);
    };
    for (const auto& b : tape.enc_blocks) add_block(b);
    for (const auto& d : tape.downs) out.push_back(&d.lif.s);
    add_block(tape.bottleneck);
    for (const auto& u : tape.ups) out.push_back(&u.lif.s);
    for (const auto& b : tape.dec_blocks) add_block(b);
    return out;
}

}  // namespace

TEST_CASE("unet config validation") {
    UNetConfig cfg = tiny_cfg();
    CHECK_NOTHROW(cfg.validate());
    cfg.horizon = 9;  // not divisible by 2
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_cfg();
    cfg.kernel = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("unet output shape equals input shape") {
    struct Case {
        std::int64_t b, h, d;
    };
    for (const Case c : {Case{1, 16, 2}, Case{2, 16, 2}, Case{2, 32, 7}}) {
        UNetConfig cfg;
        cfg.widths = {4, 8};
        cfg.horizon = c.h;
        cfg.action_dim = c.d;
        cfg.obs_dim = 6;
        cfg.t_s = 2;
        cfg.time_embed_dim = 8;
        cfg.cond_feat = 4;
        auto net = build_unet<float>(cfg, 1);
        Rng rng(2);
        const Tensor x = Tensor::randn({c.b, c.h, c.d}, rng);
        const Tensor obs = Tensor::randn({c.b, 6}, rng);
        const Tensor y = unet_forward(net, x, const_t(c.b, 10), obs);
        CHECK(y.shape == x.shape);
    }
}

TEST_CASE("all-zero parameters yield exactly zero output") {
    auto net = build_unet<float>(tiny_cfg(), 3);
    for (auto& p : net.params()) p.value->fill(0.0f);
    Rng rng(4);
    const Tensor x = Tensor::randn({2, 8, 2}, rng);
    const Tensor obs = Tensor::randn({2, 6}, rng);
    const Tensor y = unet_forward(net, x, const_t(2, 5), obs);
    for (auto v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("untrained net predicts exactly zero noise (zero-init head)") {
    auto net = build_unet<float>(tiny_cfg(), 9);
    Rng rng(10);
    const Tensor x = Tensor::randn({1, 8, 2}, rng);
    const Tensor obs = Tensor::randn({1, 6}, rng);
    const Tensor y = unet_forward(net, x, const_t(1, 42), obs);
    for (auto v : y.data) CHECK(v == 0.0f);
}

TEST_CASE("unet forward matches the straight-line reference (seed 0)") {
    UNetConfig cfg = tiny_cfg();  // widths {4,8}, H=8, T_S=2
    auto net = build_unet<double>(cfg, 0);
    ref_unet::Params params = ref_unet::snapshot(net);

    Rng rng(0);
    const Tensor64 x = Tensor64::randn({2, cfg.horizon, cfg.action_dim}, rng);
    const Tensor64 obs = Tensor64::randn({2, cfg.obs_dim}, rng);
    const std::vector<std::int64_t> t_d{7, 63};

    const Tensor64 got = unet_forward(net, x, t_d, obs);
    const ref_unet::Vec want = ref_unet::forward(
        params, cfg, ref_unet::Vec(x.data.begin(), x.data.end()), t_d,
        ref_unet::Vec(obs.data.begin(), obs.data.end()), 2);

    REQUIRE(got.data.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        REQUIRE(std::abs(got.data[i] - want[i]) < 1e-6);
    }
}

TEST_CASE("unet forward is deterministic and reproducible from the seed") {
    UNetConfig cfg = tiny_cfg();
    auto net1 = build_unet<float>(cfg, 77);
    auto net2 = build_unet<float>(cfg, 77);
    for (std::size_t i = 0; i < net1.params().size(); ++i) {
        CHECK(net1.params()[i].value->data == net2.params()[i].value->data);
    }
    Rng rng(5);
    const Tensor x = Tensor::randn({2, 8, 2}, rng);
    const Tensor obs = Tensor::randn({2, 6}, rng);
    const Tensor a = unet_forward(net1, x, const_t(2, 3), obs);
    const Tensor b = unet_forward(net1, x, const_t(2, 3), obs);
    CHECK(std::memcmp(a.ptr(), b.ptr(), a.data.size() * sizeof(float)) == 0);
}

TEST_CASE("parameter count matches the closed-form formula") {
    for (auto widths : std::vector<std::vector<std::int64_t>>{{4}, {4, 8}, {8, 16, 32}}) {
        UNetConfig cfg = tiny_cfg();
        cfg.widths = widths;
        cfg.horizon = 16;
        auto net = build_unet<float>(cfg, 1);
        std::int64_t total = 0;
        for (auto& p : net.params()) total += p.value->numel();
        CHECK(total == unet_parameter_count(cfg));
    }
}

TEST_CASE("spike-carrying edges contain only 0/1 across random forwards") {
    UNetConfig cfg = tiny_cfg();
    auto net = build_unet<float>(cfg, 11);
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor x = Tensor::randn({1, 8, 2}, rng);
        const Tensor obs = Tensor::randn({1, 6}, rng);
        UNetTapeT<float> tape;
        (void)unet_forward(net, x, const_t(1, static_cast<std::int64_t>(rng.uniform_index(100))),
                           obs, &tape);
        for (const Tensor* s : spike_edges(tape)) REQUIRE(s->is_binary());
    }
}

TEST_CASE("residual path is non-degenerate") {
    UNetConfig cfg = tiny_cfg();
    cfg.m_init = 0.2;  // low thresholds so spikes reach the last block
    auto net = build_unet<float>(cfg, 21);
    Rng rng(22);
    const Tensor x = elementwise_scale(Tensor::randn({1, 8, 2}, rng), 2.0f);
    const Tensor obs = Tensor::randn({1, 6}, rng);
    // use a live head so outputs are not trivially zero
    net.dec_conv.p.weight.fill(0.3f);
    UNetTapeT<float> tape;
    const Tensor y1 = unet_forward(net, x, const_t(1, 9), obs, &tape);
    REQUIRE(kern::count_ones(tape.dec_blocks[0].lif2.s.ptr(),
                             tape.dec_blocks[0].lif2.s.data.size()) > 0);
    for (auto& blk : net.enc_blocks) blk.skip.p.weight.fill(0.0f);
    net.bottleneck.skip.p.weight.fill(0.0f);
    for (auto& blk : net.dec_blocks) blk.skip.p.weight.fill(0.0f);
    const Tensor y2 = unet_forward(net, x, const_t(1, 9), obs);
    CHECK(y1.data != y2.data);
}

TEST_CASE("unet backward: zero cotangent zeroes every gradient") {
    UNetConfig cfg = tiny_cfg();
    auto net = build_unet<float>(cfg, 31);
    Rng rng(32);
    const Tensor x = Tensor::randn({2, 8, 2}, rng);
    const Tensor obs = Tensor::randn({2, 6}, rng);
    UNetTapeT<float> tape;
    (void)unet_forward(net, x, const_t(2, 1), obs, &tape);
    net.zero_grads();
    (void)unet_backward(net, Tensor::zeros({2, 8, 2}), tape);
    for (auto& p : net.params()) {
        for (auto v : p.grad->data) REQUIRE(v == 0.0f);
    }
}

TEST_CASE("every LCMT parameter appears in the gradient set (2-level config)") {
    UNetConfig cfg = tiny_cfg();
    auto net = build_unet<float>(cfg, 41);
    std::vector<std::string> m_names;
    for (auto& p : net.params()) {
        if (p.name.size() >= 2 && p.name.substr(p.name.size() - 2) == ".m") {
            m_names.push_back(p.name);
            CHECK(p.grad->shape == p.value->shape);
        }
    }
    // encode + 2 per block (4 blocks) + down + up = 11 LIF layers
    CHECK(m_names.size() == 11);
    CHECK(std::find(m_names.begin(), m_names.end(), "encode.lif.m") != m_names.end());
    CHECK(std::find(m_names.begin(), m_names.end(), "mid.lif1.m") != m_names.end());
    CHECK(std::find(m_names.begin(), m_names.end(), "down0.lif.m") != m_names.end());
    CHECK(std::find(m_names.begin(), m_names.end(), "up0.lif.m") != m_names.end());
}

namespace {

// Shared harness: smoothed-forward FD over every parameter of a micro net.
void unet_fd_check(const UNetConfig& cfg, std::uint64_t net_seed, double tol) {
    auto net = build_unet<double>(cfg, net_seed);
    for (std::uint64_t data_seed = 100;; ++data_seed) {
        Rng rng(data_seed);
        Tensor64 x = Tensor64::randn({1, cfg.horizon, cfg.action_dim}, rng);
        const Tensor64 obs = Tensor64::randn({1, cfg.obs_dim}, rng);
        const auto t_d = const_t(1, 17);

        UNetTapeT<double> probe;
        (void)unet_forward(net, x, t_d, obs, &probe, FiringMode::smoothed);
        if (unet_min_kink_distance(net, probe) <= 1e-3) continue;

        const auto loss = [&]() {
            const Tensor64 y = unet_forward<double>(net, x, t_d, obs, nullptr, FiringMode::smoothed);
            double acc = 0.0;
            for (auto v : y.data) acc += 0.5 * v * v;
            return acc;
        };
        UNetTapeT<double> tape;
        const Tensor64 y = unet_forward(net, x, t_d, obs, &tape, FiringMode::smoothed);
        net.zero_grads();
        const Tensor64 gx = unet_backward(net, y, tape);

        for (auto& p : net.params()) {
            INFO("param ", p.name);
            CHECK(max_grad_rel_err(*p.value, *p.grad, loss, 1e-5) < tol);
        }
        CHECK(max_grad_rel_err(x, gx, loss, 1e-5) < tol);
        return;
    }
}

}  // namespace

TEST_CASE("unet backward matches smoothed finite differences (single level micro)") {
    UNetConfig cfg;
    cfg.widths = {2};
    cfg.horizon = 4;
    cfg.action_dim = 1;
    cfg.obs_dim = 3;
    cfg.t_s = 2;
    cfg.time_embed_dim = 4;
    cfg.cond_feat = 2;
    unet_fd_check(cfg, 51, 1e-3);
}

TEST_CASE("unet backward matches smoothed finite differences (two level micro)") {
    UNetConfig cfg;
    cfg.widths = {2, 3};
    cfg.horizon = 4;
    cfg.action_dim = 1;
    cfg.obs_dim = 3;
    cfg.t_s = 2;
    cfg.time_embed_dim = 4;
    cfg.cond_feat = 2;
    unet_fd_check(cfg, 52, 1e-3);
}
