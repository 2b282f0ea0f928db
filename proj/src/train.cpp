#include "sdp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "sdp/kernels/kernels.hpp"

namespace sdp {

namespace {

namespace fs = std::filesystem;

// stream labels for the per-purpose random substreams
constexpr std::uint64_t kStreamShuffle = 0x5u;
constexpr std::uint64_t kStreamBatch = 0xBu;
constexpr std::uint64_t kStreamProbe = 0xAu;

void select_kernels(const RunConfig& cfg) {
    if (cfg.kernels == "scalar") kern::select_isa(kern::Isa::scalar);
    else if (cfg.kernels == "avx2") kern::select_isa(kern::Isa::avx2);
    else kern::select_isa(kern::detected_isa());
}

struct WindowSampler {
    const Dataset* data = nullptr;
    std::int64_t horizon = 0;
    std::int64_t obs_frames = 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> windows;  // (traj, start)
    std::array<float, 2> act_min{}, act_max{};

    void build(const Dataset& d, std::int64_t h, std::int64_t frames) {
        data = &d;
        horizon = h;
        obs_frames = frames;
        act_min = d.act_min;
        act_max = d.act_max;
        windows.clear();
        for (std::size_t ti = 0; ti < d.trajectories.size(); ++ti) {
            const std::int64_t steps = d.trajectories[ti].steps();
            for (std::int64_t s = 0; s < steps; ++s) {
                windows.emplace_back(static_cast<std::int32_t>(ti),
                                     static_cast<std::int32_t>(s));
            }
        }
        if (windows.empty()) throw IoError("dataset contains no usable windows");
    }

    float norm(float a, int d) const {
        const float range = act_max[static_cast<std::size_t>(d)] -
                            act_min[static_cast<std::size_t>(d)];
        if (range < 1e-9f) return 0.0f;
        return 2.0f * (a - act_min[static_cast<std::size_t>(d)]) / range - 1.0f;
    }

    // x0: horizon*2 normalized actions; obs: obs_frames*kObsDim raw states
    void fill(std::size_t widx, float* x0, float* obs) const {
        const auto [ti, start] = windows[widx];
        const Trajectory& traj = data->trajectories[static_cast<std::size_t>(ti)];
        const std::int64_t steps = traj.steps();
        for (std::int64_t f = 0; f < obs_frames; ++f) {
            const std::int64_t idx = std::max<std::int64_t>(0, start - (obs_frames - 1 - f));
            std::copy(traj.observations.begin() + idx * kObsDim,
                      traj.observations.begin() + (idx + 1) * kObsDim, obs + f * kObsDim);
        }
        for (std::int64_t j = 0; j < horizon; ++j) {
            const std::int64_t idx = std::min<std::int64_t>(start + j, steps - 1);
            for (int d = 0; d < 2; ++d) {
                x0[j * 2 + d] =
                    norm(traj.actions[static_cast<std::size_t>(idx * kActDim + d)], d);
            }
        }
    }
};

DiffusionBatchT<float> make_batch(const WindowSampler& sampler,
                                  const std::vector<std::size_t>& ids,
                                  const NoiseSchedule& sched, std::int64_t obs_dim, Rng& rng) {
    const std::int64_t batch = static_cast<std::int64_t>(ids.size());
    DiffusionBatchT<float> out;
    out.x0 = Tensor({batch, sampler.horizon, 2});
    out.obs = Tensor({batch, obs_dim});
    for (std::int64_t b = 0; b < batch; ++b) {
        sampler.fill(ids[static_cast<std::size_t>(b)], out.x0.ptr() + b * sampler.horizon * 2,
                     out.obs.ptr() + b * obs_dim);
    }
    out.t.resize(static_cast<std::size_t>(batch));
    for (auto& t : out.t) {
        t = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(sched.t_d)));
    }
    out.eps = Tensor::randn({batch, sampler.horizon, 2}, rng);
    return out;
}

std::string ckpt_path(const std::string& out_dir, std::int64_t epoch) {
    std::ostringstream os;
    os << out_dir << "/ckpt_" << std::setw(6) << std::setfill('0') << epoch << ".sdpc";
    return os.str();
}

DenoiserFnT<float> make_denoiser(const SpikingUNetT<float>& net) {
    return [&net](const Tensor& x, std::int64_t t, const Tensor& obs) {
        const std::vector<std::int64_t> t_d(static_cast<std::size_t>(x.dim(0)), t);
        return unet_forward(net, x, t_d, obs);
    };
}

double action_mse_probe(const SpikingUNetT<float>& net, const WindowSampler& sampler,
                        const NoiseSchedule& sched, const RunConfig& cfg,
                        std::uint64_t seed) {
    const std::int64_t n_windows = static_cast<std::int64_t>(sampler.windows.size());
    const std::int64_t probe = std::min<std::int64_t>(cfg.probe_size, n_windows);
    const std::int64_t obs_dim = cfg.obs_frames * kObsDim;
    std::vector<std::size_t> ids;
    for (std::int64_t k = 0; k < probe; ++k) {
        ids.push_back(static_cast<std::size_t>(k * n_windows / probe));
    }
    Tensor x0({probe, sampler.horizon, 2});
    Tensor obs({probe, obs_dim});
    for (std::int64_t b = 0; b < probe; ++b) {
        sampler.fill(ids[static_cast<std::size_t>(b)], x0.ptr() + b * sampler.horizon * 2,
                     obs.ptr() + b * obs_dim);
    }
    const Tensor sampled = ddpm_sample(make_denoiser(net), obs, probe, sampler.horizon, 2,
                                       sched, seed);
    double acc = 0.0;
    for (std::size_t i = 0; i < sampled.data.size(); ++i) {
        const double d = static_cast<double>(sampled.data[i]) - x0.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(sampled.data.size());
}

void freeze_thresholds(SpikingUNetT<float>& net) {
    // theta = 0.5 corresponds to m = 0.5 / sqrt(1 - 0.25)
    const float frozen_m = 0.5f / std::sqrt(0.75f);
    for (auto& p : net.params()) {
        if (p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".m") == 0) {
            p.value->fill(frozen_m);
        }
    }
}

void dump_nonfinite(const RunConfig& cfg, std::int64_t epoch, std::int64_t batch_idx,
                    const std::vector<std::size_t>& ids, const DiffusionBatchT<float>& batch) {
    std::ofstream os(cfg.out_dir + "/nonfinite_dump.txt");
    os << "non-finite loss at epoch " << epoch << " batch " << batch_idx << "\n";
    os << "window ids:";
    for (auto i : ids) os << " " << i;
    os << "\nt:";
    for (auto t : batch.t) os << " " << t;
    auto minmax = [](const Tensor& t) {
        float lo = t.data.empty() ? 0.0f : t.data[0], hi = lo;
        for (auto v : t.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return std::pair<float, float>{lo, hi};
    };
    const auto [x0lo, x0hi] = minmax(batch.x0);
    const auto [elo, ehi] = minmax(batch.eps);
    os << "\nx0 range [" << x0lo << "," << x0hi << "] eps range [" << elo << "," << ehi
       << "]\n";
}

}  // namespace

DiffusionPolicy::DiffusionPolicy(SpikingUNetT<float> net, NoiseSchedule sched,
                                 std::array<float, 2> act_min, std::array<float, 2> act_max,
                                 float a_max)
    : net_(std::move(net)),
      sched_(std::move(sched)),
      act_min_(act_min),
      act_max_(act_max),
      a_max_(a_max) {}

void DiffusionPolicy::reset(std::uint64_t episode_seed) {
    episode_seed_ = episode_seed;
    plan_counter_ = 0;
}

std::int64_t DiffusionPolicy::horizon() const { return net_.cfg.horizon; }

std::vector<float> DiffusionPolicy::plan(const std::vector<float>& obs_window) {
    if (static_cast<std::int64_t>(obs_window.size()) != net_.cfg.obs_dim) {
        throw ShapeError("policy observation window size mismatch");
    }
    Tensor obs({1, net_.cfg.obs_dim});
    std::copy(obs_window.begin(), obs_window.end(), obs.ptr());
    const std::uint64_t seed = derive_seed(episode_seed_, plan_counter_++);
    const Tensor acts =
        ddpm_sample(make_denoiser(net_), obs, 1, net_.cfg.horizon, 2, sched_, seed);
    std::vector<float> plan(static_cast<std::size_t>(net_.cfg.horizon) * 2);
    for (std::int64_t h = 0; h < net_.cfg.horizon; ++h) {
        for (int d = 0; d < 2; ++d) {
            const float range = act_max_[static_cast<std::size_t>(d)] -
                                act_min_[static_cast<std::size_t>(d)];
            float a = acts[acts.at(0, h, d)];
            a = range < 1e-9f ? act_min_[static_cast<std::size_t>(d)]
                              : act_min_[static_cast<std::size_t>(d)] + 0.5f * (a + 1.0f) * range;
            plan[static_cast<std::size_t>(h * 2 + d)] =
                std::min(std::max(a, -a_max_), a_max_);
        }
    }
    return plan;
}

int gen_data_run(const RunConfig& cfg, std::ostream& log) {
    const Dataset data = generate_dataset(cfg.data_n_traj, cfg.data_seed, cfg.env_config());
    const fs::path parent = fs::path(cfg.data_path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_dataset(data, cfg.data_path);
    log << "wrote " << data.trajectories.size() << " trajectories (" << data.total_steps()
        << " steps) to " << cfg.data_path << "\n";
    return 0;
}

TrainOutputs train_run(const RunConfig& cfg, std::ostream& log) {
    set_runtime_checks(cfg.checks);
    select_kernels(cfg);
    const Dataset data = read_dataset(cfg.data_path);
    WindowSampler sampler;
    sampler.build(data, cfg.horizon, cfg.obs_frames);

    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.t_d);
    const UNetConfig ucfg = cfg.unet_config();
    auto net = build_unet<float>(ucfg, cfg.train_seed);
    auto params = net.params();
    AdamState opt;
    opt.init_like(params);

    std::int64_t start_epoch = 0;
    CheckpointMeta meta;
    meta.config_digest = cfg.model_digest();
    meta.act_min = sampler.act_min;
    meta.act_max = sampler.act_max;
    if (!cfg.resume.empty()) {
        meta = load_checkpoint(cfg.resume, net, &opt, cfg.model_digest(), true);
        start_epoch = meta.epoch;
        log << "resumed from " << cfg.resume << " at epoch " << start_epoch << "\n";
    }
    if (!cfg.lcmt) freeze_thresholds(net);

    fs::create_directories(cfg.out_dir);
    const std::string metrics_path = cfg.out_dir + "/metrics.csv";
    const bool fresh_log = !fs::exists(metrics_path);
    std::ofstream metrics(metrics_path, std::ios::app);
    if (!metrics) throw IoError("cannot open metrics log: " + metrics_path);
    if (fresh_log) metrics << "epoch,train_loss,action_mse,eval_success,eval_coverage,wall_time\n";

    const std::int64_t n_windows = static_cast<std::int64_t>(sampler.windows.size());
    const std::int64_t eff_bs = std::min<std::int64_t>(cfg.batch_size, n_windows);
    std::int64_t n_batches = std::max<std::int64_t>(1, n_windows / eff_bs);
    if (cfg.batches_per_epoch > 0) n_batches = std::min(n_batches, cfg.batches_per_epoch);
    const std::int64_t obs_dim = cfg.obs_frames * kObsDim;

    TrainOutputs out;
    out.final_loss = std::numeric_limits<double>::quiet_NaN();

    std::vector<std::size_t> perm(static_cast<std::size_t>(n_windows));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;

    for (std::int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng(derive_seed(derive_seed(cfg.train_seed, kStreamShuffle),
                                    static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[shuffle_rng.uniform_index(i)]);
        }

        double loss_sum = 0.0;
        for (std::int64_t b = 0; b < n_batches; ++b) {
            Rng brng(derive_seed(
                derive_seed(derive_seed(cfg.train_seed, kStreamBatch),
                            static_cast<std::uint64_t>(epoch)),
                static_cast<std::uint64_t>(b)));
            std::vector<std::size_t> ids(perm.begin() + b * eff_bs,
                                         perm.begin() + (b + 1) * eff_bs);
            const DiffusionBatchT<float> batch =
                make_batch(sampler, ids, sched, obs_dim, brng);
            const float loss = loss_eps_mse(net, batch, sched, true);
            if (!std::isfinite(loss)) {
                dump_nonfinite(cfg, epoch, b, ids, batch);
                throw NumericError("non-finite training loss; diagnostics in " + cfg.out_dir +
                                   "/nonfinite_dump.txt");
            }
            adam_step(params, opt, cfg.lr, cfg.beta1, cfg.beta2, !cfg.lcmt);
            loss_sum += loss;
        }
        const double train_loss = loss_sum / static_cast<double>(n_batches);
        out.loss_history.push_back(train_loss);
        out.final_loss = train_loss;

        const std::int64_t done = epoch + 1;
        const bool at_ckpt = (done % cfg.ckpt_every == 0) || done == cfg.epochs;

        std::string action_mse_str;
        if (cfg.probe_every > 0 && done % cfg.probe_every == 0) {
            const double mse = action_mse_probe(
                net, sampler, sched, cfg,
                derive_seed(derive_seed(cfg.train_seed, kStreamProbe),
                            static_cast<std::uint64_t>(epoch)));
            std::ostringstream os;
            os << std::setprecision(9) << mse;
            action_mse_str = os.str();
        }

        std::string eval_success_str, eval_coverage_str;
        if (cfg.eval_episodes_during > 0 && at_ckpt) {
            DiffusionPolicy policy(net, sched, sampler.act_min, sampler.act_max);
            const EvalMetrics m = evaluate_policy(policy, cfg.eval_episodes_during,
                                                  cfg.eval_seed, cfg.exec_steps,
                                                  cfg.env_config());
            std::ostringstream s1, s2;
            s1 << std::setprecision(9) << m.success_rate;
            s2 << std::setprecision(9) << m.coverage;
            eval_success_str = s1.str();
            eval_coverage_str = s2.str();
        }

        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                .count();
        metrics << done << "," << std::setprecision(9) << train_loss << "," << action_mse_str
                << "," << eval_success_str << "," << eval_coverage_str << ","
                << std::setprecision(3) << std::fixed << wall << std::defaultfloat << "\n";
        metrics.flush();
        log << "epoch " << done << "/" << cfg.epochs << " loss " << std::setprecision(6)
            << train_loss;
        if (!action_mse_str.empty()) log << " action_mse " << action_mse_str;
        log << " (" << std::setprecision(3) << wall << "s)\n";
        log.flush();

        if (at_ckpt) {
            meta.epoch = done;
            const std::string path = ckpt_path(cfg.out_dir, done);
            save_checkpoint(path, net, opt, meta);
            out.final_checkpoint = path;
        }
    }

    if (cfg.epochs == 0 || start_epoch >= cfg.epochs) {
        // still provide a loadable checkpoint for downstream tooling
        meta.epoch = start_epoch;
        const std::string path = ckpt_path(cfg.out_dir, start_epoch);
        save_checkpoint(path, net, opt, meta);
        out.final_checkpoint = path;
    }
    if (cfg.svg) emit_loss_svg(out.loss_history, cfg.out_dir + "/loss_curve.svg");
    return out;
}

std::size_t select_best(const std::vector<std::pair<std::int64_t, double>>& epoch_success) {
    if (epoch_success.empty()) throw ConfigError("select_best: no checkpoints");
    std::size_t best = 0;
    for (std::size_t i = 1; i < epoch_success.size(); ++i) {
        const auto& [ep, succ] = epoch_success[i];
        const auto& [bep, bsucc] = epoch_success[best];
        if (succ > bsucc || (succ == bsucc && ep < bep)) best = i;
    }
    return best;
}

EvalOutputs eval_run(const RunConfig& cfg, const std::vector<std::string>& checkpoints,
                     std::ostream& log) {
    if (checkpoints.empty()) throw ConfigError("eval: at least one checkpoint required");
    set_runtime_checks(cfg.checks);
    select_kernels(cfg);
    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.t_d);
    EvalOutputs out;
    for (const auto& path : checkpoints) {
        auto net = build_unet<float>(cfg.unet_config(), 0);
        const CheckpointMeta meta =
            load_checkpoint(path, net, nullptr, cfg.model_digest(), true);
        DiffusionPolicy policy(std::move(net), sched, meta.act_min, meta.act_max);
        EvalRow row;
        row.checkpoint = path;
        row.epoch = meta.epoch;
        row.metrics = evaluate_policy(policy, cfg.eval_episodes, cfg.eval_seed, cfg.exec_steps,
                                      cfg.env_config());
        log << path << " epoch " << row.epoch << " success " << row.metrics.success_rate
            << " coverage " << row.metrics.coverage << " mean_steps " << row.metrics.mean_steps
            << "\n";
        out.rows.push_back(std::move(row));
    }
    std::vector<std::pair<std::int64_t, double>> pairs;
    for (const auto& r : out.rows) pairs.emplace_back(r.epoch, r.metrics.success_rate);
    out.best_index = select_best(pairs);

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir + "/eval.csv");
    csv << "checkpoint,epoch,n_episodes,seed,success_rate,mean_steps,coverage\n";
    for (const auto& r : out.rows) {
        csv << r.checkpoint << "," << r.epoch << "," << r.metrics.episodes << ","
            << r.metrics.seed << "," << std::setprecision(9) << r.metrics.success_rate << ","
            << r.metrics.mean_steps << "," << r.metrics.coverage << "\n";
    }
    const auto& b = out.rows[out.best_index];
    csv << "BEST," << b.epoch << "," << b.metrics.episodes << "," << b.metrics.seed << ","
        << std::setprecision(9) << b.metrics.success_rate << "," << b.metrics.mean_steps << ","
        << b.metrics.coverage << "\n";
    return out;
}

namespace {

// Deterministic probe batch for profiling/statistics: evenly spaced windows,
// seeded noise levels.
struct ProbeBatch {
    Tensor x_noisy;
    std::vector<std::int64_t> t;
    Tensor obs;
};

ProbeBatch make_probe(const RunConfig& cfg, const CheckpointMeta& meta,
                      const NoiseSchedule& sched) {
    const Dataset data = read_dataset(cfg.data_path);
    WindowSampler sampler;
    sampler.build(data, cfg.horizon, cfg.obs_frames);
    sampler.act_min = meta.act_min;
    sampler.act_max = meta.act_max;
    const std::int64_t n_windows = static_cast<std::int64_t>(sampler.windows.size());
    const std::int64_t batch = std::min<std::int64_t>(cfg.profile_batch, n_windows);
    const std::int64_t obs_dim = cfg.obs_frames * kObsDim;

    Tensor x0({batch, cfg.horizon, 2});
    ProbeBatch p;
    p.obs = Tensor({batch, obs_dim});
    for (std::int64_t b = 0; b < batch; ++b) {
        sampler.fill(static_cast<std::size_t>(b * n_windows / batch),
                     x0.ptr() + b * cfg.horizon * 2, p.obs.ptr() + b * obs_dim);
    }
    Rng rng(cfg.profile_seed);
    p.t.resize(static_cast<std::size_t>(batch));
    for (auto& t : p.t) {
        t = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(sched.t_d)));
    }
    const Tensor eps = Tensor::randn(x0.shape, rng);
    p.x_noisy = forward_diffuse(x0, p.t, eps, sched);
    return p;
}

}  // namespace

EnergyReport profile_run(const RunConfig& cfg, const std::string& checkpoint,
                         std::ostream& log) {
    set_runtime_checks(cfg.checks);
    select_kernels(cfg);
    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.t_d);
    auto net = build_unet<float>(cfg.unet_config(), 0);
    const CheckpointMeta meta =
        load_checkpoint(checkpoint, net, nullptr, cfg.model_digest(), true);
    const ProbeBatch probe = make_probe(cfg, meta, sched);
    const EnergyReport report = measure_energy(net, probe.x_noisy, probe.t, probe.obs);

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir + "/energy.csv");
    csv << energy_csv(report);
    log << energy_table(report);
    return report;
}

std::vector<ChannelStats> channel_statistics(const SpikingUNetT<float>& net, const Tensor& x,
                                             const std::vector<std::int64_t>& t_d,
                                             const Tensor& obs) {
    UNetTapeT<float> tape;
    (void)unet_forward(net, x, t_d, obs, &tape);

    std::vector<ChannelStats> out;
    auto visit = [&out](const std::string& name, const LifTapeT<float>& t,
                        const LifParamsT<float>& p) {
        const Tensor theta = theta_of_m(p.m);
        const std::int64_t steps = t.s.dim(0);
        const std::int64_t batch = t.s.dim(1);
        const std::int64_t ch = t.s.dim(2);
        const std::int64_t inner = t.s.rank() == 4 ? t.s.dim(3) : 1;
        for (std::int64_t c = 0; c < ch; ++c) {
            ChannelStats cs;
            cs.layer = name;
            cs.channel = c;
            cs.theta = theta[static_cast<std::size_t>(c)];
            std::int64_t fires = 0;
            double u_sum = 0.0;
            for (std::int64_t ti = 0; ti < steps; ++ti) {
                for (std::int64_t b = 0; b < batch; ++b) {
                    const std::int64_t row = ((ti * batch + b) * ch + c) * inner;
                    for (std::int64_t i = 0; i < inner; ++i) {
                        if (t.s[static_cast<std::size_t>(row + i)] == 1.0f) {
                            ++fires;
                            u_sum += t.u[static_cast<std::size_t>(row + i)];
                        }
                    }
                }
            }
            const std::int64_t total = steps * batch * inner;
            cs.firing_rate = static_cast<double>(fires) / static_cast<double>(total);
            cs.any_fire = fires > 0;
            cs.mean_u_at_fire = fires > 0 ? u_sum / static_cast<double>(fires) : 0.0;
            out.push_back(std::move(cs));
        }
    };

    visit("encode.lif", tape.enc.lif, net.enc_lif.p);
    for (std::size_t i = 0; i < net.enc_blocks.size(); ++i) {
        const std::string prefix = "enc" + std::to_string(i);
        visit(prefix + ".lif1", tape.enc_blocks[i].lif1, net.enc_blocks[i].lif1.p);
        visit(prefix + ".lif2", tape.enc_blocks[i].lif2, net.enc_blocks[i].lif2.p);
        if (i < net.downs.size()) {
            visit("down" + std::to_string(i) + ".lif", tape.downs[i].lif, net.downs[i].lif.p);
        }
    }
    visit("mid.lif1", tape.bottleneck.lif1, net.bottleneck.lif1.p);
    visit("mid.lif2", tape.bottleneck.lif2, net.bottleneck.lif2.p);
    for (std::size_t i = 0; i < net.ups.size(); ++i) {
        visit("up" + std::to_string(i) + ".lif", tape.ups[i].lif, net.ups[i].lif.p);
        const std::string prefix = "dec" + std::to_string(i);
        visit(prefix + ".lif1", tape.dec_blocks[i].lif1, net.dec_blocks[i].lif1.p);
        visit(prefix + ".lif2", tape.dec_blocks[i].lif2, net.dec_blocks[i].lif2.p);
    }
    return out;
}

std::string stats_csv(const std::vector<ChannelStats>& stats) {
    std::ostringstream os;
    os << "layer,channel,firing_rate,mean_u_at_fire,theta\n";
    for (const auto& s : stats) {
        os << s.layer << "," << s.channel << "," << std::setprecision(9) << s.firing_rate
           << ",";
        if (s.any_fire) os << s.mean_u_at_fire;
        os << "," << s.theta << "\n";
    }
    return os.str();
}

std::vector<ChannelStats> stats_run(const RunConfig& cfg, const std::string& checkpoint,
                                    std::ostream& log) {
    set_runtime_checks(cfg.checks);
    select_kernels(cfg);
    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.t_d);
    auto net = build_unet<float>(cfg.unet_config(), 0);
    const CheckpointMeta meta =
        load_checkpoint(checkpoint, net, nullptr, cfg.model_digest(), true);
    const ProbeBatch probe = make_probe(cfg, meta, sched);
    auto stats = channel_statistics(net, probe.x_noisy, probe.t, probe.obs);

    fs::create_directories(cfg.out_dir);
    std::ofstream csv(cfg.out_dir + "/stats.csv");
    csv << stats_csv(stats);
    log << "wrote channel statistics for " << stats.size() << " channels to " << cfg.out_dir
        << "/stats.csv\n";
    return stats;
}

void emit_loss_svg(const std::vector<double>& losses, const std::string& path) {
    const int w = 640, h = 360, margin = 40;
    std::ofstream os(path);
    if (!os) throw IoError("cannot write svg: " + path);
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
       << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    if (!losses.empty()) {
        double lo = losses[0], hi = losses[0];
        for (double v : losses) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo < 1e-12) hi = lo + 1.0;
        os << "<polyline fill='none' stroke='black' stroke-width='1.5' points='";
        for (std::size_t i = 0; i < losses.size(); ++i) {
            const double x =
                margin + (w - 2.0 * margin) * (losses.size() == 1
                                                   ? 0.0
                                                   : static_cast<double>(i) /
                                                         static_cast<double>(losses.size() - 1));
            const double y = h - margin - (h - 2.0 * margin) * (losses[i] - lo) / (hi - lo);
            os << x << "," << y << " ";
        }
        os << "'/>\n";
        os << "<text x='" << margin << "' y='" << margin - 10 << "' font-size='12'>loss "
           << std::setprecision(4) << lo << " .. " << hi << " over " << losses.size()
           << " epochs</text>\n";
    }
    os << "<line x1='" << margin << "' y1='" << h - margin << "' x2='" << w - margin
       << "' y2='" << h - margin << "' stroke='gray'/>\n";
    os << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
       << h - margin << "' stroke='gray'/>\n";
    os << "</svg>\n";
}

}  // namespace sdp
