#include "sdp/checkpoint.hpp"

#include <cmath>

#include "binio.hpp"

namespace sdp {

void AdamState::init_like(std::vector<ParamRefT<float>>& params) {
    m.clear();
    v.clear();
    for (auto& p : params) {
        m.emplace_back(p.value->shape);
        v.emplace_back(p.value->shape);
    }
    step = 0;
}

void adam_step(std::vector<ParamRefT<float>>& params, AdamState& st, double lr, double beta1,
               double beta2, bool skip_threshold_params, double eps) {
    if (st.m.size() != params.size() || st.v.size() != params.size()) {
        throw NumericError("adam state does not match the parameter registry");
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const bool is_m_param =
            p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".m") == 0;
        if (skip_threshold_params && is_m_param) continue;
        float* w = p.value->ptr();
        const float* g = p.grad->ptr();
        float* mom = st.m[i].ptr();
        float* vel = st.v[i].ptr();
        const std::int64_t n = p.value->numel();
        for (std::int64_t j = 0; j < n; ++j) {
            const double gj = g[j];
            const double mj = beta1 * mom[j] + (1.0 - beta1) * gj;
            const double vj = beta2 * vel[j] + (1.0 - beta2) * gj * gj;
            mom[j] = static_cast<float>(mj);
            vel[j] = static_cast<float>(vj);
            w[j] = static_cast<float>(w[j] -
                                      lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
        }
    }
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_header(std::ostream& os, const CheckpointMeta& meta, std::uint64_t adam_step,
                  std::uint32_t n_params) {
    os.write("SDPC", 4);
    binio::put_u32(os, kCheckpointVersion);
    binio::put_u64(os, meta.config_digest);
    binio::put_u64(os, static_cast<std::uint64_t>(meta.epoch));
    binio::put_u64(os, adam_step);
    binio::put_f32(os, meta.act_min[0]);
    binio::put_f32(os, meta.act_min[1]);
    binio::put_f32(os, meta.act_max[0]);
    binio::put_f32(os, meta.act_max[1]);
    binio::put_u32(os, n_params);
}

struct Header {
    CheckpointMeta meta;
    std::uint64_t adam_step = 0;
    std::uint32_t n_params = 0;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "SDPC") throw IoError("bad checkpoint magic: " + path);
    const std::uint32_t version = binio::get_u32(is);
    if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version");
    Header h;
    h.meta.config_digest = binio::get_u64(is);
    h.meta.epoch = static_cast<std::int64_t>(binio::get_u64(is));
    h.adam_step = binio::get_u64(is);
    h.meta.act_min[0] = binio::get_f32(is);
    h.meta.act_min[1] = binio::get_f32(is);
    h.meta.act_max[0] = binio::get_f32(is);
    h.meta.act_max[1] = binio::get_f32(is);
    h.n_params = binio::get_u32(is);
    return h;
}

}  // namespace

void save_checkpoint(const std::string& path, SpikingUNetT<float>& net, const AdamState& opt,
                     const CheckpointMeta& meta) {
    auto params = net.params();
    if (opt.m.size() != params.size()) {
        throw NumericError("optimizer state does not match the network");
    }
    binio::AtomicFile file(path);
    std::ostream& os = file.stream();
    write_header(os, meta, static_cast<std::uint64_t>(opt.step),
                 static_cast<std::uint32_t>(params.size()));
    for (auto& p : params) {
        binio::put_string(os, p.name);
        binio::put_u32(os, static_cast<std::uint32_t>(p.value->rank()));
        for (auto d : p.value->shape) binio::put_u64(os, static_cast<std::uint64_t>(d));
        binio::put_f32_array(os, p.value->ptr(), p.value->data.size());
    }
    binio::put_u8(os, 1);  // optimizer state present
    for (std::size_t i = 0; i < params.size(); ++i) {
        binio::put_f32_array(os, opt.m[i].ptr(), opt.m[i].data.size());
        binio::put_f32_array(os, opt.v[i].ptr(), opt.v[i].data.size());
    }
    file.commit();
}

CheckpointMeta load_checkpoint(const std::string& path, SpikingUNetT<float>& net,
                               AdamState* opt, std::uint64_t expected_digest,
                               bool check_digest) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    const Header h = read_header(is, path);
    if (check_digest && h.meta.config_digest != expected_digest) {
        throw ConfigError("checkpoint config digest mismatch for " + path);
    }
    auto params = net.params();
    if (h.n_params != params.size()) throw IoError("checkpoint parameter count mismatch");
    for (auto& p : params) {
        const std::string name = binio::get_string(is);
        if (name != p.name) throw IoError("checkpoint parameter order mismatch at " + name);
        const std::uint32_t rank = binio::get_u32(is);
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::int64_t>(binio::get_u64(is));
        if (shape != p.value->shape) throw IoError("checkpoint shape mismatch at " + name);
        binio::get_f32_array(is, p.value->ptr(), p.value->data.size());
    }
    const bool has_opt = binio::get_u8(is) != 0;
    if (opt) {
        opt->init_like(params);
        opt->step = static_cast<std::int64_t>(h.adam_step);
        if (has_opt) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                binio::get_f32_array(is, opt->m[i].ptr(), opt->m[i].data.size());
                binio::get_f32_array(is, opt->v[i].ptr(), opt->v[i].data.size());
            }
        }
    }
    return h.meta;
}

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    return read_header(is, path).meta;
}

}  // namespace sdp
