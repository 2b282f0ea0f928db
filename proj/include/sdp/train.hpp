#pragma once

#include <iosfwd>
#include <utility>

#include "sdp/checkpoint.hpp"
#include "sdp/config.hpp"
#include "sdp/diffusion.hpp"
#include "sdp/energy.hpp"
#include "sdp/env.hpp"

namespace sdp {

// Receding-horizon policy: every plan() call runs a full DDPM reverse pass
// conditioned on the observation window, then denormalizes the actions.
class DiffusionPolicy : public Policy {
public:
    DiffusionPolicy(SpikingUNetT<float> net, NoiseSchedule sched, std::array<float, 2> act_min,
                    std::array<float, 2> act_max, float a_max = 0.05f);

    void reset(std::uint64_t episode_seed) override;
    std::vector<float> plan(const std::vector<float>& obs_window) override;
    std::int64_t horizon() const override;

private:
    SpikingUNetT<float> net_;
    NoiseSchedule sched_;
    std::array<float, 2> act_min_, act_max_;
    float a_max_;
    std::uint64_t episode_seed_ = 0;
    std::uint64_t plan_counter_ = 0;
};

struct TrainOutputs {
    std::string final_checkpoint;
    double final_loss = 0.0;
    std::vector<double> loss_history;  // per completed epoch, this run only
};

int gen_data_run(const RunConfig& cfg, std::ostream& log);
TrainOutputs train_run(const RunConfig& cfg, std::ostream& log);

struct EvalRow {
    std::string checkpoint;
    std::int64_t epoch = 0;
    EvalMetrics metrics;
};

struct EvalOutputs {
    std::vector<EvalRow> rows;
    std::size_t best_index = 0;
};

EvalOutputs eval_run(const RunConfig& cfg, const std::vector<std::string>& checkpoints,
                     std::ostream& log);

// Best = max success rate, ties broken by earliest epoch.
std::size_t select_best(const std::vector<std::pair<std::int64_t, double>>& epoch_success);

EnergyReport profile_run(const RunConfig& cfg, const std::string& checkpoint,
                         std::ostream& log);

// Per-layer, per-channel firing data behind the threshold-learning
// motivation: rates, membrane potential at firing instants, learned theta.
struct ChannelStats {
    std::string layer;
    std::int64_t channel = 0;
    double firing_rate = 0.0;
    bool any_fire = false;
    double mean_u_at_fire = 0.0;  // meaningful only when any_fire
    double theta = 0.0;
};

std::vector<ChannelStats> channel_statistics(const SpikingUNetT<float>& net, const Tensor& x,
                                             const std::vector<std::int64_t>& t_d,
                                             const Tensor& obs);
std::string stats_csv(const std::vector<ChannelStats>& stats);
std::vector<ChannelStats> stats_run(const RunConfig& cfg, const std::string& checkpoint,
                                    std::ostream& log);

// Minimal loss-curve emitter (one polyline, log-free axes).
void emit_loss_svg(const std::vector<double>& losses, const std::string& path);

}  // namespace sdp
