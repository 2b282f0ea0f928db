#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdp/env.hpp"
#include "sdp/unet.hpp"

namespace sdp {

// Run configuration, loaded from a key-value text file ('#' comments,
// "section.key = value" lines) plus --set overrides. Unknown keys are
// rejected, never silently accepted.
struct RunConfig {
    // data
    std::string data_path = "data/push.sdpd";
    std::int64_t data_n_traj = 200;
    std::uint64_t data_seed = 7;

    // model
    std::vector<std::int64_t> widths{32, 64};
    std::int64_t horizon = 16;
    std::int64_t kernel = 3;
    std::int64_t t_s = 4;
    double tau = 0.5;
    double m_init = 0.7;
    std::int64_t cond_feat = 32;
    std::int64_t time_embed_dim = 64;
    std::int64_t obs_frames = 2;
    bool lcmt = true;

    // diffusion
    std::int64_t t_d = 100;
    std::string schedule = "linear";

    // train
    std::int64_t epochs = 50;
    std::int64_t batch_size = 64;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t train_seed = 1;
    std::int64_t ckpt_every = 50;
    std::string out_dir = "runs/default";
    std::int64_t batches_per_epoch = 0;  // 0 = one pass over all windows
    std::int64_t probe_every = 1;        // action-MSE probe cadence (0 = off)
    std::int64_t probe_size = 8;
    std::int64_t eval_episodes_during = 0;  // closed-loop eval at ckpt cadence
    std::string resume;
    bool checks = true;

    // eval
    std::int64_t eval_episodes = 50;
    std::uint64_t eval_seed = 123;
    std::int64_t exec_steps = 4;
    std::int64_t max_steps = 300;

    // profile / stats
    std::int64_t profile_batch = 8;
    std::uint64_t profile_seed = 5;

    // log
    bool svg = false;
    std::string kernels = "auto";  // auto | scalar | avx2

    UNetConfig unet_config() const;
    EnvConfig env_config() const;

    // Digest over the model+diffusion fields that must match between a
    // checkpoint and the config it is used with.
    std::uint64_t model_digest() const;

    // Throws ConfigError on invalid values; prints advisory notices (e.g.
    // off-sweep T_S) to `notices`.
    void validate(std::ostream& notices) const;
};

// path may be empty (defaults only); overrides are "key=value" strings.
RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

void apply_override(RunConfig& cfg, const std::string& key_value);

// One "key = value" line per field, stable order; also the digest input.
std::string config_canonical(const RunConfig& cfg);

// Key/description table for --help.
std::string config_key_help();

}  // namespace sdp
