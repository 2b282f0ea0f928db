#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "sdp/rng.hpp"

namespace sdp {

// Deterministic 2-D point-mass pushing task in the unit workspace: the agent
// pushes a circular block (contact radius r) toward a fixed target. Contact
// is resolved by displacing the block along the contact normal by the
// overlap amount (rigid push, no pull).
struct EnvConfig {
    float a_max = 0.05f;
    float contact_radius = 0.04f;
    float success_tol = 0.03f;
    std::int64_t max_steps = 300;
};

struct EnvState {
    std::array<float, 2> agent{};
    std::array<float, 2> block{};
    std::array<float, 2> target{};
    std::int64_t step_count = 0;
};

constexpr std::int64_t kObsDim = 6;
constexpr std::int64_t kActDim = 2;

EnvState env_init(std::uint64_t seed, const EnvConfig& cfg = {});
EnvState env_step(const EnvState& state, std::array<float, 2> action,
                  const EnvConfig& cfg = {});
bool env_success(const EnvState& state, const EnvConfig& cfg = {});
void env_observe(const EnvState& state, float* out6);

// Navigate to the push station behind the block on the block->target line,
// then push toward the target; all actions bounded by a_max.
std::array<float, 2> scripted_expert(const EnvState& state, const EnvConfig& cfg = {});

struct Trajectory {
    std::vector<float> observations;  // steps * kObsDim, state before each action
    std::vector<float> actions;       // steps * kActDim
    bool success = false;

    std::int64_t steps() const {
        return static_cast<std::int64_t>(actions.size()) / kActDim;
    }
};

struct Dataset {
    std::uint32_t version = 1;
    std::array<float, 2> act_min{};  // per-dimension stats for normalization
    std::array<float, 2> act_max{};
    std::vector<Trajectory> trajectories;

    std::int64_t total_steps() const;
    void recompute_stats();
};

// Expert rollouts from seeded initial states; failures are resampled and only
// successful episodes retained. Aborts after 10x oversampling.
Dataset generate_dataset(std::int64_t n_traj, std::uint64_t seed, const EnvConfig& cfg = {});

// Binary "SDPD" container, little-endian f32 payloads; read(write(d)) == d.
void write_dataset(const Dataset& d, const std::string& path);
Dataset read_dataset(const std::string& path);

// Receding-horizon policy: plan() maps a 2-frame observation window (dim 12)
// to a full horizon of actions; the evaluator executes the first few.
class Policy {
public:
    virtual ~Policy() = default;
    virtual void reset(std::uint64_t episode_seed) { (void)episode_seed; }
    virtual std::vector<float> plan(const std::vector<float>& obs_window) = 0;
    virtual std::int64_t horizon() const = 0;
};

struct EvalMetrics {
    std::int64_t episodes = 0;
    std::uint64_t seed = 0;
    double success_rate = 0.0;
    double mean_steps = 0.0;
    double coverage = 0.0;  // 1 - final/initial block-target distance, clamped
};

// Per-episode seeds are a documented splitmix of the master seed
// (derive_seed(seed, 2*episode) for the env, 2*episode+1 for the policy).
EvalMetrics evaluate_policy(Policy& policy, std::int64_t n_episodes, std::uint64_t seed,
                            std::int64_t exec_steps = 4, const EnvConfig& cfg = {});

std::string eval_metrics_csv(const EvalMetrics& m);

}  // namespace sdp
