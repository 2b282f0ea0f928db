#include "sdp/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "binio.hpp"

namespace sdp {

namespace {

constexpr float kKeepDist = 0.002f;   // closest the expert lets itself get to the block center
constexpr float kStationTolCos = 0.985f;  // alignment cone for pushing (~10 degrees)
constexpr float kDetourClearance = 0.02f;

float clampf(float v, float lo, float hi) { return std::min(std::max(v, lo), hi); }

float dist(const std::array<float, 2>& a, const std::array<float, 2>& b) {
    const float dx = a[0] - b[0], dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

// distance from point p to segment a-b
float segment_dist(const std::array<float, 2>& a, const std::array<float, 2>& b,
                   const std::array<float, 2>& p) {
    const float vx = b[0] - a[0], vy = b[1] - a[1];
    const float wx = p[0] - a[0], wy = p[1] - a[1];
    const float vv = vx * vx + vy * vy;
    float t = vv > 0.0f ? (wx * vx + wy * vy) / vv : 0.0f;
    t = clampf(t, 0.0f, 1.0f);
    const float dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

EnvState env_init(std::uint64_t seed, const EnvConfig& cfg) {
    Rng rng(seed);
    EnvState st;
    st.target = {static_cast<float>(rng.uniform(0.25, 0.75)),
                 static_cast<float>(rng.uniform(0.25, 0.75))};
    do {
        st.block = {static_cast<float>(rng.uniform(0.2, 0.8)),
                    static_cast<float>(rng.uniform(0.2, 0.8))};
    } while (dist(st.block, st.target) < 0.15f);
    do {
        st.agent = {static_cast<float>(rng.uniform(0.05, 0.95)),
                    static_cast<float>(rng.uniform(0.05, 0.95))};
    } while (dist(st.agent, st.block) < cfg.contact_radius + 0.02f);
    return st;
}

EnvState env_step(const EnvState& state, std::array<float, 2> action, const EnvConfig& cfg) {
    EnvState next = state;
    action[0] = clampf(action[0], -cfg.a_max, cfg.a_max);
    action[1] = clampf(action[1], -cfg.a_max, cfg.a_max);
    next.agent[0] = clampf(state.agent[0] + action[0], 0.0f, 1.0f);
    next.agent[1] = clampf(state.agent[1] + action[1], 0.0f, 1.0f);

    const float d = dist(next.agent, next.block);
    if (d < cfg.contact_radius) {
        std::array<float, 2> normal{};
        if (d > 1e-9f) {
            normal = {(next.block[0] - next.agent[0]) / d,
                      (next.block[1] - next.agent[1]) / d};
        } else {
            // degenerate: displace along the motion direction
            const float alen = std::sqrt(action[0] * action[0] + action[1] * action[1]);
            normal = alen > 1e-9f ? std::array<float, 2>{action[0] / alen, action[1] / alen}
                                  : std::array<float, 2>{1.0f, 0.0f};
        }
        const float overlap = cfg.contact_radius - d;
        next.block[0] = clampf(next.block[0] + overlap * normal[0], 0.0f, 1.0f);
        next.block[1] = clampf(next.block[1] + overlap * normal[1], 0.0f, 1.0f);
    }
    next.step_count = state.step_count + 1;
    return next;
}

bool env_success(const EnvState& state, const EnvConfig& cfg) {
    return dist(state.block, state.target) <= cfg.success_tol;
}

void env_observe(const EnvState& state, float* out6) {
    out6[0] = state.agent[0];
    out6[1] = state.agent[1];
    out6[2] = state.block[0];
    out6[3] = state.block[1];
    out6[4] = state.target[0];
    out6[5] = state.target[1];
}

std::array<float, 2> scripted_expert(const EnvState& state, const EnvConfig& cfg) {
    const float dist_bt = dist(state.block, state.target);
    if (dist_bt <= cfg.success_tol) return {0.0f, 0.0f};

    const std::array<float, 2> dir{(state.target[0] - state.block[0]) / dist_bt,
                                   (state.target[1] - state.block[1]) / dist_bt};
    const float r = cfg.contact_radius;
    // station distance chosen so a full a_max push from the station ends
    // kKeepDist short of the block center
    const float station_dist = cfg.a_max + kKeepDist;

    const float vab_x = state.block[0] - state.agent[0];
    const float vab_y = state.block[1] - state.agent[1];
    const float d_ab = std::sqrt(vab_x * vab_x + vab_y * vab_y);
    const bool aligned =
        d_ab > 1e-6f && (vab_x * dir[0] + vab_y * dir[1]) / d_ab >= kStationTolCos;

    if (aligned && d_ab <= station_dist + 0.005f) {
        // push: never cross the block center, and shorten the final push so
        // the block lands on the target instead of overshooting
        float move = std::min(cfg.a_max, d_ab - kKeepDist);
        move = std::min(move, std::max(0.0f, d_ab - r) + dist_bt);
        return {move * dir[0], move * dir[1]};
    }

    const std::array<float, 2> station{state.block[0] - dir[0] * station_dist,
                                       state.block[1] - dir[1] * station_dist};
    const float to_st_x = station[0] - state.agent[0];
    const float to_st_y = station[1] - state.agent[1];
    const float d_st = std::sqrt(to_st_x * to_st_x + to_st_y * to_st_y);
    if (d_st < 1e-6f) return {0.0f, 0.0f};

    const bool blocked = segment_dist(state.agent, station, state.block) < r + kDetourClearance &&
                         d_ab < d_st + r;
    if (blocked && d_ab > 1e-6f) {
        // steer tangentially around the block, on the side that makes
        // progress toward the station; blend away when touching
        float px = -vab_y / d_ab, py = vab_x / d_ab;
        if (px * to_st_x + py * to_st_y < 0.0f) {
            px = -px;
            py = -py;
        }
        if (d_ab < r + 0.01f) {
            const float ox = -vab_x / d_ab, oy = -vab_y / d_ab;
            px += 0.8f * ox;
            py += 0.8f * oy;
            const float n = std::sqrt(px * px + py * py);
            px /= n;
            py /= n;
        }
        return {cfg.a_max * px, cfg.a_max * py};
    }
    const float step = std::min(cfg.a_max, d_st);
    return {step * to_st_x / d_st, step * to_st_y / d_st};
}

std::int64_t Dataset::total_steps() const {
    std::int64_t n = 0;
    for (const auto& t : trajectories) n += t.steps();
    return n;
}

void Dataset::recompute_stats() {
    act_min = {std::numeric_limits<float>::max(), std::numeric_limits<float>::max()};
    act_max = {std::numeric_limits<float>::lowest(), std::numeric_limits<float>::lowest()};
    for (const auto& t : trajectories) {
        for (std::int64_t i = 0; i < t.steps(); ++i) {
            for (int d = 0; d < 2; ++d) {
                const float a = t.actions[static_cast<std::size_t>(i * kActDim + d)];
                act_min[static_cast<std::size_t>(d)] = std::min(act_min[static_cast<std::size_t>(d)], a);
                act_max[static_cast<std::size_t>(d)] = std::max(act_max[static_cast<std::size_t>(d)], a);
            }
        }
    }
    if (trajectories.empty()) {
        act_min = {0.0f, 0.0f};
        act_max = {0.0f, 0.0f};
    }
}

Dataset generate_dataset(std::int64_t n_traj, std::uint64_t seed, const EnvConfig& cfg) {
    if (n_traj < 1) throw ConfigError("generate_dataset: n_traj must be >= 1");
    Dataset data;
    std::int64_t attempts = 0;
    const std::int64_t max_attempts = 10 * n_traj;
    while (static_cast<std::int64_t>(data.trajectories.size()) < n_traj) {
        if (attempts >= max_attempts) {
            throw ConfigError("generate_dataset: expert failed too often (10x oversampling)");
        }
        const std::uint64_t ep_seed = derive_seed(seed, static_cast<std::uint64_t>(attempts));
        ++attempts;

        EnvState st = env_init(ep_seed, cfg);
        Trajectory traj;
        while (st.step_count < cfg.max_steps) {
            float obs[kObsDim];
            env_observe(st, obs);
            const auto action = scripted_expert(st, cfg);
            traj.observations.insert(traj.observations.end(), obs, obs + kObsDim);
            traj.actions.push_back(action[0]);
            traj.actions.push_back(action[1]);
            st = env_step(st, action, cfg);
            if (env_success(st, cfg)) {
                traj.success = true;
                break;
            }
        }
        if (traj.success) data.trajectories.push_back(std::move(traj));
    }
    data.recompute_stats();
    return data;
}

void write_dataset(const Dataset& d, const std::string& path) {
    binio::AtomicFile file(path);
    std::ostream& os = file.stream();
    os.write("SDPD", 4);
    binio::put_u32(os, d.version);
    binio::put_u32(os, static_cast<std::uint32_t>(d.trajectories.size()));
    binio::put_u32(os, static_cast<std::uint32_t>(kObsDim));
    binio::put_u32(os, static_cast<std::uint32_t>(kActDim));
    binio::put_f32(os, d.act_min[0]);
    binio::put_f32(os, d.act_min[1]);
    binio::put_f32(os, d.act_max[0]);
    binio::put_f32(os, d.act_max[1]);
    for (const auto& t : d.trajectories) {
        binio::put_u32(os, static_cast<std::uint32_t>(t.steps()));
        binio::put_u8(os, t.success ? 1 : 0);
        binio::put_f32_array(os, t.observations.data(), t.observations.size());
        binio::put_f32_array(os, t.actions.data(), t.actions.size());
    }
    file.commit();
}

Dataset read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SDPD") throw IoError("bad dataset magic: " + path);
    Dataset d;
    d.version = binio::get_u32(is);
    if (d.version != 1) throw IoError("unsupported dataset version");
    const std::uint32_t n_traj = binio::get_u32(is);
    const std::uint32_t obs_dim = binio::get_u32(is);
    const std::uint32_t act_dim = binio::get_u32(is);
    if (obs_dim != kObsDim || act_dim != kActDim) {
        throw IoError("dataset dims mismatch");
    }
    d.act_min[0] = binio::get_f32(is);
    d.act_min[1] = binio::get_f32(is);
    d.act_max[0] = binio::get_f32(is);
    d.act_max[1] = binio::get_f32(is);
    d.trajectories.resize(n_traj);
    for (auto& t : d.trajectories) {
        const std::uint32_t steps = binio::get_u32(is);
        t.success = binio::get_u8(is) != 0;
        t.observations.resize(static_cast<std::size_t>(steps) * kObsDim);
        t.actions.resize(static_cast<std::size_t>(steps) * kActDim);
        binio::get_f32_array(is, t.observations.data(), t.observations.size());
        binio::get_f32_array(is, t.actions.data(), t.actions.size());
    }
    return d;
}

EvalMetrics evaluate_policy(Policy& policy, std::int64_t n_episodes, std::uint64_t seed,
                            std::int64_t exec_steps, const EnvConfig& cfg) {
    if (n_episodes < 1) throw ConfigError("evaluate_policy: n_episodes must be >= 1");
    if (exec_steps < 1 || exec_steps > policy.horizon()) {
        throw ConfigError("evaluate_policy: exec_steps must be in [1, horizon]");
    }
    EvalMetrics m;
    m.episodes = n_episodes;
    m.seed = seed;
    double success_sum = 0.0, steps_sum = 0.0, coverage_sum = 0.0;

    for (std::int64_t ep = 0; ep < n_episodes; ++ep) {
        EnvState st = env_init(derive_seed(seed, 2 * static_cast<std::uint64_t>(ep)), cfg);
        policy.reset(derive_seed(seed, 2 * static_cast<std::uint64_t>(ep) + 1));
        const float init_dist = dist(st.block, st.target);

        std::vector<float> window(2 * kObsDim);
        env_observe(st, window.data());
        env_observe(st, window.data() + kObsDim);

        bool success = false;
        while (st.step_count < cfg.max_steps && !success) {
            const std::vector<float> plan = policy.plan(window);
            const std::int64_t n_exec =
                std::min<std::int64_t>(exec_steps, static_cast<std::int64_t>(plan.size()) / 2);
            for (std::int64_t j = 0; j < n_exec; ++j) {
                const std::array<float, 2> a{plan[static_cast<std::size_t>(2 * j)],
                                             plan[static_cast<std::size_t>(2 * j + 1)]};
                st = env_step(st, a, cfg);
                std::copy(window.begin() + kObsDim, window.end(), window.begin());
                env_observe(st, window.data() + kObsDim);
                if (env_success(st, cfg)) {
                    success = true;
                    break;
                }
                if (st.step_count >= cfg.max_steps) break;
            }
        }
        const float final_dist = dist(st.block, st.target);
        success_sum += success ? 1.0 : 0.0;
        steps_sum += static_cast<double>(st.step_count);
        const double cov = init_dist > 0.0f
                               ? std::min(1.0, std::max(0.0, 1.0 - static_cast<double>(final_dist) /
                                                                       init_dist))
                               : 1.0;
        coverage_sum += cov;
    }
    m.success_rate = success_sum / static_cast<double>(n_episodes);
    m.mean_steps = steps_sum / static_cast<double>(n_episodes);
    m.coverage = coverage_sum / static_cast<double>(n_episodes);
    return m;
}

std::string eval_metrics_csv(const EvalMetrics& m) {
    std::ostringstream os;
    os << "n_episodes,seed,success_rate,mean_steps,coverage\n";
    os << m.episodes << "," << m.seed << "," << m.success_rate << "," << m.mean_steps << ","
       << m.coverage << "\n";
    return os.str();
}

}  // namespace sdp
