#include "sdp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace sdp {

namespace {

struct Field {
    std::string key;
    std::string desc;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("bad integer for " + key + ": '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("bad unsigned integer for " + key + ": '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("bad boolean for " + key + ": '" + v + "' (use on/off)");
}

std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<std::int64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_int(key, item));
    }
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

std::string int_list_str(const std::vector<std::int64_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

std::string num_str(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

#define SDP_FIELD_INT(key, member, desc)                                          \
    {key, desc, [](RunConfig& c, const std::string& v) { c.member = parse_int(key, v); }, \
     [](const RunConfig& c) { return std::to_string(c.member); }}
#define SDP_FIELD_U64(key, member, desc)                                          \
    {key, desc, [](RunConfig& c, const std::string& v) { c.member = parse_u64(key, v); }, \
     [](const RunConfig& c) { return std::to_string(c.member); }}
#define SDP_FIELD_DBL(key, member, desc)                                          \
    {key, desc,                                                                   \
     [](RunConfig& c, const std::string& v) { c.member = parse_double(key, v); }, \
     [](const RunConfig& c) { return num_str(c.member); }}
#define SDP_FIELD_BOOL(key, member, desc)                                         \
    {key, desc,                                                                   \
     [](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); },   \
     [](const RunConfig& c) { return c.member ? "on" : "off"; }}
#define SDP_FIELD_STR(key, member, desc)                                          \
    {key, desc, [](RunConfig& c, const std::string& v) { c.member = v; },         \
     [](const RunConfig& c) { return c.member; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        SDP_FIELD_STR("data.path", data_path, "dataset file (SDPD format)"),
        SDP_FIELD_INT("data.n_traj", data_n_traj, "trajectories to generate"),
        SDP_FIELD_U64("data.seed", data_seed, "dataset generation seed"),
        {"model.widths", "level channel widths, comma separated",
         [](RunConfig& c, const std::string& v) { c.widths = parse_int_list("model.widths", v); },
         [](const RunConfig& c) { return int_list_str(c.widths); }},
        SDP_FIELD_INT("model.horizon", horizon, "action-sequence length H"),
        SDP_FIELD_INT("model.kernel", kernel, "conv kernel size (odd)"),
        SDP_FIELD_INT("model.t_s", t_s, "SNN timesteps T_S"),
        SDP_FIELD_DBL("model.tau", tau, "membrane decay constant"),
        SDP_FIELD_DBL("model.m_init", m_init, "initial raw threshold parameter m"),
        SDP_FIELD_INT("model.cond_feat", cond_feat, "conditioning features per branch"),
        SDP_FIELD_INT("model.time_embed_dim", time_embed_dim, "sinusoidal embedding size"),
        SDP_FIELD_INT("model.obs_frames", obs_frames, "observation frames in the window"),
        SDP_FIELD_BOOL("model.lcmt", lcmt,
                       "learn channel-wise thresholds (off = freeze at theta 0.5)"),
        SDP_FIELD_INT("diffusion.t_d", t_d, "diffusion steps T_D"),
        SDP_FIELD_STR("diffusion.schedule", schedule, "beta schedule: linear | cosine"),
        SDP_FIELD_INT("train.epochs", epochs, "training epochs"),
        SDP_FIELD_INT("train.batch_size", batch_size, "minibatch size"),
        SDP_FIELD_DBL("train.lr", lr, "Adam step size"),
        SDP_FIELD_DBL("train.beta1", beta1, "Adam first-moment decay"),
        SDP_FIELD_DBL("train.beta2", beta2, "Adam second-moment decay"),
        SDP_FIELD_U64("train.seed", train_seed, "training seed (init, shuffle, noise)"),
        SDP_FIELD_INT("train.ckpt_every", ckpt_every, "checkpoint cadence in epochs"),
        SDP_FIELD_STR("train.out_dir", out_dir, "run output directory"),
        SDP_FIELD_INT("train.batches_per_epoch", batches_per_epoch,
                      "minibatches per epoch (0 = full pass)"),
        SDP_FIELD_INT("train.probe_every", probe_every, "action-MSE probe cadence (0 = off)"),
        SDP_FIELD_INT("train.probe_size", probe_size, "action-MSE probe windows"),
        SDP_FIELD_INT("train.eval_episodes_during", eval_episodes_during,
                      "closed-loop episodes at checkpoint epochs (0 = off)"),
        SDP_FIELD_STR("train.resume", resume, "checkpoint to resume from"),
        SDP_FIELD_BOOL("train.checks", checks, "runtime invariant scans"),
        SDP_FIELD_INT("eval.episodes", eval_episodes, "closed-loop evaluation episodes"),
        SDP_FIELD_U64("eval.seed", eval_seed, "evaluation master seed"),
        SDP_FIELD_INT("eval.exec_steps", exec_steps, "actions executed per replan"),
        SDP_FIELD_INT("eval.max_steps", max_steps, "episode step cap"),
        SDP_FIELD_INT("profile.batch", profile_batch, "probe batch for profiling/stats"),
        SDP_FIELD_U64("profile.seed", profile_seed, "probe batch seed"),
        SDP_FIELD_BOOL("log.svg", svg, "emit loss-curve SVG after training"),
        SDP_FIELD_STR("log.kernels", kernels, "kernel variant: auto | scalar | avx2"),
    };
    return f;
}

#undef SDP_FIELD_INT
#undef SDP_FIELD_U64
#undef SDP_FIELD_DBL
#undef SDP_FIELD_BOOL
#undef SDP_FIELD_STR

const Field& find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return f;
    }
    throw ConfigError("unknown config key: '" + key + "'");
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

UNetConfig RunConfig::unet_config() const {
    UNetConfig u;
    u.widths = widths;
    u.horizon = horizon;
    u.action_dim = kActDim;
    u.obs_dim = obs_frames * kObsDim;
    u.t_s = t_s;
    u.kernel = kernel;
    u.time_embed_dim = time_embed_dim;
    u.cond_feat = cond_feat;
    u.tau = tau;
    u.m_init = m_init;
    return u;
}

EnvConfig RunConfig::env_config() const {
    EnvConfig e;
    e.max_steps = max_steps;
    return e;
}

std::uint64_t RunConfig::model_digest() const {
    std::ostringstream os;
    os << "sdp-digest-v1|widths=" << int_list_str(widths) << "|horizon=" << horizon
       << "|kernel=" << kernel << "|t_s=" << t_s << "|tau=" << tau << "|m_init=" << m_init
       << "|cond_feat=" << cond_feat << "|time_embed_dim=" << time_embed_dim
       << "|obs_frames=" << obs_frames << "|lcmt=" << (lcmt ? 1 : 0) << "|t_d=" << t_d
       << "|schedule=" << schedule;
    return fnv1a64(os.str());
}

void RunConfig::validate(std::ostream& notices) const {
    unet_config().validate();
    if (t_s != 1 && t_s != 2 && t_s != 4 && t_s != 8) {
        notices << "notice: model.t_s=" << t_s << " is outside the usual sweep {1,2,4,8}\n";
    }
    if (t_d < 1) throw ConfigError("diffusion.t_d must be >= 1");
    if (schedule != "linear" && schedule != "cosine") {
        throw ConfigError("diffusion.schedule must be linear or cosine");
    }
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("train.lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("Adam moment decays must lie in [0,1)");
    }
    if (ckpt_every < 1) throw ConfigError("train.ckpt_every must be >= 1");
    if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
    if (exec_steps < 1 || exec_steps > horizon) {
        throw ConfigError("eval.exec_steps must be in [1, horizon]");
    }
    if (max_steps < 1) throw ConfigError("eval.max_steps must be >= 1");
    if (profile_batch < 1) throw ConfigError("profile.batch must be >= 1");
    if (data_n_traj < 1) throw ConfigError("data.n_traj must be >= 1");
    if (obs_frames < 1) throw ConfigError("model.obs_frames must be >= 1");
    if (kernels != "auto" && kernels != "scalar" && kernels != "avx2") {
        throw ConfigError("log.kernels must be auto, scalar or avx2");
    }
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config: " + path);
        std::string line;
        std::int64_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  " is not key = value: '" + line + "'");
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            find_field(key).set(cfg, value);
        }
    }
    for (const auto& kv : overrides) apply_override(cfg, kv);
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& key_value) {
    const auto eq = key_value.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("--set expects key=value, got '" + key_value + "'");
    }
    const std::string key = trim(key_value.substr(0, eq));
    const std::string value = trim(key_value.substr(eq + 1));
    find_field(key).set(cfg, value);
}

std::string config_canonical(const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& f : fields()) os << f.key << " = " << f.get(cfg) << "\n";
    return os.str();
}

std::string config_key_help() {
    std::ostringstream os;
    os << "config keys (file: 'key = value' lines, '#' comments; override with --set):\n";
    for (const auto& f : fields()) {
        os << "  " << f.key;
        for (std::size_t i = f.key.size(); i < 30; ++i) os << ' ';
        os << f.desc << "\n";
    }
    return os.str();
}

}  // namespace sdp
