#include "sdp/unet.hpp"

#include <algorithm>
#include <cmath>

#include "sdp/kernels/kernels.hpp"

namespace sdp {

void UNetConfig::validate() const {
    if (widths.empty()) throw ConfigError("unet: widths must be non-empty");
    for (auto w : widths) {
        if (w < 1) throw ConfigError("unet: widths must be positive");
    }
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("unet: kernel must be odd");
    if (t_s < 1) throw ConfigError("unet: t_s must be >= 1");
    if (action_dim < 1 || obs_dim < 1) throw ConfigError("unet: bad io dims");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
        throw ConfigError("unet: time_embed_dim must be even and >= 2");
    }
    if (cond_feat < 1) throw ConfigError("unet: cond_feat must be positive");
    std::int64_t need = 1;
    for (std::int64_t i = 1; i < levels(); ++i) need *= 2;
    if (horizon < need || horizon % need != 0) {
        throw ConfigError("unet: horizon must be divisible by 2^(levels-1)");
    }
    if (tau < 0.0 || tau > 1.0) throw ConfigError("unet: tau must be in [0,1]");
}

namespace {

std::int64_t linear_count(std::int64_t d_in, std::int64_t d_out) {
    return d_out * d_in + d_out;
}

std::int64_t conv_count(std::int64_t c_in, std::int64_t c_out, std::int64_t k) {
    return c_out * c_in * k + c_out;
}

std::int64_t block_count(std::int64_t w, std::int64_t cond_dim, std::int64_t k) {
    return 2 * conv_count(w, w, k) + conv_count(w, w, 1) + linear_count(cond_dim, w) + 2 * w;
}

}  // namespace

std::int64_t unet_parameter_count(const UNetConfig& cfg) {
    cfg.validate();
    const std::int64_t n = cfg.levels();
    std::int64_t total = 0;
    total += linear_count(cfg.time_embed_dim, cfg.cond_feat);
    total += linear_count(cfg.obs_dim, cfg.cond_feat);
    total += conv_count(cfg.action_dim, cfg.widths[0], cfg.kernel) + cfg.widths[0];
    for (std::int64_t i = 0; i < n; ++i) total += block_count(cfg.widths[i], cfg.cond_dim(), cfg.kernel);
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        total += conv_count(cfg.widths[i], cfg.widths[i + 1], cfg.kernel) + cfg.widths[i + 1];
    }
    total += block_count(cfg.widths[n - 1], cfg.cond_dim(), cfg.kernel);
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        total += conv_count(cfg.widths[i + 1], cfg.widths[i], cfg.kernel) + cfg.widths[i];
    }
    for (std::int64_t i = 0; i + 1 < n; ++i) total += block_count(cfg.widths[i], cfg.cond_dim(), cfg.kernel);
    total += conv_count(cfg.widths[0], cfg.action_dim, 1);
    return total;
}

namespace {

template <class T>
ConvLayerT<T> make_conv(std::int64_t c_in, std::int64_t c_out, std::int64_t k,
                        std::int64_t stride, std::int64_t padding, Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(c_in * k));
    ConvLayerT<T> layer;
    layer.p.weight = TensorT<T>::uniform({c_out, c_in, k}, rng, -bound, bound);
    layer.p.bias = TensorT<T>::uniform({c_out}, rng, -bound, bound);
    layer.p.stride = stride;
    layer.p.padding = padding;
    layer.grad_w = TensorT<T>(layer.p.weight.shape);
    layer.grad_b = TensorT<T>(layer.p.bias.shape);
    return layer;
}

template <class T>
LinearLayerT<T> make_linear(std::int64_t d_in, std::int64_t d_out, Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(d_in));
    LinearLayerT<T> layer;
    layer.p.weight = TensorT<T>::uniform({d_out, d_in}, rng, -bound, bound);
    layer.p.bias = TensorT<T>::uniform({d_out}, rng, -bound, bound);
    layer.grad_w = TensorT<T>(layer.p.weight.shape);
    layer.grad_b = TensorT<T>(layer.p.bias.shape);
    return layer;
}

template <class T>
LifLayerT<T> make_lif(std::int64_t channels, const UNetConfig& cfg) {
    LifLayerT<T> layer;
    layer.p.tau = static_cast<T>(cfg.tau);
    layer.p.m = TensorT<T>::full({channels}, static_cast<T>(cfg.m_init));
    layer.grad_m = TensorT<T>(layer.p.m.shape);
    return layer;
}

template <class T>
SpikingBlockT<T> make_block(std::int64_t width, const UNetConfig& cfg, Rng& rng) {
    SpikingBlockT<T> blk;
    const std::int64_t pad = (cfg.kernel - 1) / 2;
    blk.conv1 = make_conv<T>(width, width, cfg.kernel, 1, pad, rng);
    blk.conv2 = make_conv<T>(width, width, cfg.kernel, 1, pad, rng);
    blk.skip = make_conv<T>(width, width, 1, 1, 0, rng);
    blk.cond = make_linear<T>(cfg.cond_dim(), width, rng);
    blk.lif1 = make_lif<T>(width, cfg);
    blk.lif2 = make_lif<T>(width, cfg);
    return blk;
}

// current[t,b,c,:] += per_bc[b,c]
template <class T>
void add_channel_current(TensorT<T>& current, const TensorT<T>& per_bc) {
    const std::int64_t steps = current.dim(0), batch = current.dim(1);
    const std::int64_t ch = current.dim(2), len = current.dim(3);
    for (std::int64_t t = 0; t < steps; ++t) {
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t c = 0; c < ch; ++c) {
                T* row = current.ptr() + ((t * batch + b) * ch + c) * len;
                const T v = per_bc[per_bc.at(b, c)];
                for (std::int64_t l = 0; l < len; ++l) row[l] += v;
            }
        }
    }
}

// grad_bc[b,c] = sum over (t,l) of grad[t,b,c,l]
template <class T>
TensorT<T> channel_current_grad(const TensorT<T>& grad) {
    const std::int64_t steps = grad.dim(0), batch = grad.dim(1);
    const std::int64_t ch = grad.dim(2), len = grad.dim(3);
    TensorT<T> out({batch, ch});
    for (std::int64_t t = 0; t < steps; ++t) {
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t c = 0; c < ch; ++c) {
                const T* row = grad.ptr() + ((t * batch + b) * ch + c) * len;
                out[out.at(b, c)] += kern::sum_t(row, static_cast<std::size_t>(len));
            }
        }
    }
    return out;
}

template <class T>
TensorT<T> repeat2(const TensorT<T>& x) {
    const std::int64_t steps = x.dim(0), batch = x.dim(1), ch = x.dim(2), len = x.dim(3);
    TensorT<T> out({steps, batch, ch, 2 * len});
    const std::int64_t rows = steps * batch * ch;
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = x.ptr() + r * len;
        T* dst = out.ptr() + r * 2 * len;
        for (std::int64_t l = 0; l < len; ++l) {
            dst[2 * l] = src[l];
            dst[2 * l + 1] = src[l];
        }
    }
    return out;
}

template <class T>
TensorT<T> repeat2_backward(const TensorT<T>& grad, const std::vector<std::int64_t>& in_shape) {
    TensorT<T> out(in_shape);
    const std::int64_t len = in_shape[3];
    const std::int64_t rows = in_shape[0] * in_shape[1] * in_shape[2];
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* src = grad.ptr() + r * 2 * len;
        T* dst = out.ptr() + r * len;
        for (std::int64_t l = 0; l < len; ++l) dst[l] = src[2 * l] + src[2 * l + 1];
    }
    return out;
}

template <class T>
void accum(TensorT<T>& dst, const TensorT<T>& src) {
    kern::add_inplace_t(dst.ptr(), src.ptr(), static_cast<std::size_t>(src.numel()));
}

template <class T>
TensorT<T> block_forward(const SpikingBlockT<T>& blk, const TensorT<T>& s_in,
                         const TensorT<T>& cond_feats, BlockTapeT<T>& tape,
                         FiringMode mode, TensorT<T>* c2_out) {
    TensorT<T> c1 = conv1d_train_forward(s_in, blk.conv1.p, &tape.conv1);
    const TensorT<T> cond_cur = linear_forward(cond_feats, blk.cond.p, &tape.cond);
    add_channel_current(c1, cond_cur);
    tape.c1_shape = c1.shape;
    const TensorT<T> s1 = lif_forward(c1, blk.lif1.p, &tape.lif1, mode);
    TensorT<T> c2 = conv1d_train_forward(s1, blk.conv2.p, &tape.conv2);
    const TensorT<T> res = conv1d_train_forward(s_in, blk.skip.p, &tape.skip);
    accum(c2, res);
    if (c2_out) *c2_out = c2;
    return lif_forward(c2, blk.lif2.p, &tape.lif2, mode);
}

template <class T>
struct BlockBackOut {
    TensorT<T> s_in_grad;
    TensorT<T> cond_grad;  // [B, cond_dim]
};

template <class T>
BlockBackOut<T> block_backward(SpikingBlockT<T>& blk, const TensorT<T>& grad_out,
                               BlockTapeT<T>& tape, const TensorT<T>* extra_grad_c2) {
    LifGradsT<T> lg2 = lif_backward(grad_out, tape.lif2, blk.lif2.p);
    accum(blk.lif2.grad_m, lg2.m);
    TensorT<T> gc2 = std::move(lg2.currents);
    if (extra_grad_c2) accum(gc2, *extra_grad_c2);

    Conv1dGradsT<T> cg2 = conv1d_train_backward(gc2, tape.conv2, blk.conv2.p);
    accum(blk.conv2.grad_w, cg2.weight);
    accum(blk.conv2.grad_b, cg2.bias);
    Conv1dGradsT<T> sg = conv1d_train_backward(gc2, tape.skip, blk.skip.p);
    accum(blk.skip.grad_w, sg.weight);
    accum(blk.skip.grad_b, sg.bias);

    LifGradsT<T> lg1 = lif_backward(cg2.input, tape.lif1, blk.lif1.p);
    accum(blk.lif1.grad_m, lg1.m);

    const TensorT<T> gcond_bc = channel_current_grad(lg1.currents);
    LinearGradsT<T> lcg = linear_backward(gcond_bc, tape.cond, blk.cond.p);
    accum(blk.cond.grad_w, lcg.weight);
    accum(blk.cond.grad_b, lcg.bias);

    Conv1dGradsT<T> cg1 = conv1d_train_backward(lg1.currents, tape.conv1, blk.conv1.p);
    accum(blk.conv1.grad_w, cg1.weight);
    accum(blk.conv1.grad_b, cg1.bias);

    accum(cg1.input, sg.input);
    return {std::move(cg1.input), std::move(lcg.input)};
}

}  // namespace

template <class T>
TensorT<T> timestep_embedding(const std::vector<std::int64_t>& t_d, std::int64_t dim) {
    const std::int64_t batch = static_cast<std::int64_t>(t_d.size());
    const std::int64_t half = dim / 2;
    TensorT<T> out({batch, dim});
    for (std::int64_t b = 0; b < batch; ++b) {
        for (std::int64_t i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                         static_cast<double>(half));
            const double arg = static_cast<double>(t_d[static_cast<std::size_t>(b)]) * freq;
            out[out.at(b, i)] = static_cast<T>(std::sin(arg));
            out[out.at(b, half + i)] = static_cast<T>(std::cos(arg));
        }
    }
    return out;
}

template <class T>
SpikingUNetT<T> build_unet(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const std::int64_t n = cfg.levels();
    const std::int64_t pad = (cfg.kernel - 1) / 2;

    SpikingUNetT<T> net;
    net.cfg = cfg;
    net.time_linear = make_linear<T>(cfg.time_embed_dim, cfg.cond_feat, rng);
    net.obs_linear = make_linear<T>(cfg.obs_dim, cfg.cond_feat, rng);
    net.enc_conv = make_conv<T>(cfg.action_dim, cfg.widths[0], cfg.kernel, 1, pad, rng);
    net.enc_lif = make_lif<T>(cfg.widths[0], cfg);
    for (std::int64_t i = 0; i < n; ++i) {
        net.enc_blocks.push_back(make_block<T>(cfg.widths[i], cfg, rng));
        if (i + 1 < n) {
            DownLayerT<T> down;
            down.conv = make_conv<T>(cfg.widths[i], cfg.widths[i + 1], cfg.kernel, 2, pad, rng);
            down.lif = make_lif<T>(cfg.widths[i + 1], cfg);
            net.downs.push_back(std::move(down));
        }
    }
    net.bottleneck = make_block<T>(cfg.widths[n - 1], cfg, rng);
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        UpLayerT<T> up;
        up.conv = make_conv<T>(cfg.widths[i + 1], cfg.widths[i], cfg.kernel, 1, pad, rng);
        up.lif = make_lif<T>(cfg.widths[i], cfg);
        net.ups.push_back(std::move(up));
        net.dec_blocks.push_back(make_block<T>(cfg.widths[i], cfg, rng));
    }
    // Zero-initialized head: the untrained network predicts zero noise.
    net.dec_conv = make_conv<T>(cfg.widths[0], cfg.action_dim, 1, 1, 0, rng);
    net.dec_conv.p.weight.fill(T(0));
    net.dec_conv.p.bias.fill(T(0));
    return net;
}

namespace {

template <class T>
void push_conv(std::vector<ParamRefT<T>>& out, const std::string& prefix, ConvLayerT<T>& c) {
    out.push_back({prefix + ".w", &c.p.weight, &c.grad_w});
    out.push_back({prefix + ".b", &c.p.bias, &c.grad_b});
}

template <class T>
void push_linear(std::vector<ParamRefT<T>>& out, const std::string& prefix, LinearLayerT<T>& l) {
    out.push_back({prefix + ".w", &l.p.weight, &l.grad_w});
    out.push_back({prefix + ".b", &l.p.bias, &l.grad_b});
}

template <class T>
void push_lif(std::vector<ParamRefT<T>>& out, const std::string& prefix, LifLayerT<T>& l) {
    out.push_back({prefix + ".m", &l.p.m, &l.grad_m});
}

template <class T>
void push_block(std::vector<ParamRefT<T>>& out, const std::string& prefix, SpikingBlockT<T>& b) {
    push_conv(out, prefix + ".conv1", b.conv1);
    push_conv(out, prefix + ".conv2", b.conv2);
    push_conv(out, prefix + ".skip", b.skip);
    push_linear(out, prefix + ".cond", b.cond);
    push_lif(out, prefix + ".lif1", b.lif1);
    push_lif(out, prefix + ".lif2", b.lif2);
}

}  // namespace

template <class T>
std::vector<ParamRefT<T>> SpikingUNetT<T>::params() {
    std::vector<ParamRefT<T>> out;
    push_linear(out, "time_embed", time_linear);
    push_linear(out, "obs_embed", obs_linear);
    push_conv(out, "encode.conv", enc_conv);
    push_lif(out, "encode.lif", enc_lif);
    for (std::size_t i = 0; i < enc_blocks.size(); ++i) {
        push_block(out, "enc" + std::to_string(i), enc_blocks[i]);
        if (i < downs.size()) {
            push_conv(out, "down" + std::to_string(i) + ".conv", downs[i].conv);
            push_lif(out, "down" + std::to_string(i) + ".lif", downs[i].lif);
        }
    }
    push_block(out, "mid", bottleneck);
    for (std::size_t i = 0; i < ups.size(); ++i) {
        push_conv(out, "up" + std::to_string(i) + ".conv", ups[i].conv);
        push_lif(out, "up" + std::to_string(i) + ".lif", ups[i].lif);
        push_block(out, "dec" + std::to_string(i), dec_blocks[i]);
    }
    push_conv(out, "decode.conv", dec_conv);
    return out;
}

template <class T>
void SpikingUNetT<T>::zero_grads() {
    for (auto& p : params()) p.grad->fill(T(0));
}

template <class T>
TensorT<T> unet_forward(const SpikingUNetT<T>& net, const TensorT<T>& x_noisy,
                        const std::vector<std::int64_t>& t_d, const TensorT<T>& obs,
                        UNetTapeT<T>* tape, FiringMode mode) {
    const UNetConfig& cfg = net.cfg;
    if (x_noisy.rank() != 3 || x_noisy.dim(1) != cfg.horizon ||
        x_noisy.dim(2) != cfg.action_dim) {
        throw ShapeError("unet input must be [B,H,D_a], got " + x_noisy.shape_str());
    }
    const std::int64_t batch = x_noisy.dim(0);
    if (static_cast<std::int64_t>(t_d.size()) != batch) {
        throw ShapeError("unet: t_d size must equal batch");
    }
    if (obs.rank() != 2 || obs.dim(0) != batch || obs.dim(1) != cfg.obs_dim) {
        throw ShapeError("unet obs must be [B,obs_dim], got " + obs.shape_str());
    }

    UNetTapeT<T> local;
    UNetTapeT<T>& tp = tape ? *tape : local;
    const std::int64_t n = cfg.levels();
    tp.enc_blocks.assign(static_cast<std::size_t>(n), BlockTapeT<T>{});
    tp.downs.assign(static_cast<std::size_t>(n - 1), DownTapeT<T>{});
    tp.ups.assign(static_cast<std::size_t>(n - 1), UpTapeT<T>{});
    tp.dec_blocks.assign(static_cast<std::size_t>(n - 1), BlockTapeT<T>{});
    tp.x_shape = x_noisy.shape;

    tp.time_emb = timestep_embedding<T>(t_d, cfg.time_embed_dim);
    const TensorT<T> t_feat = linear_forward(tp.time_emb, net.time_linear.p, &tp.time_linear);
    const TensorT<T> o_feat = linear_forward(obs, net.obs_linear.p, &tp.obs_linear);
    TensorT<T> cond_feats({batch, cfg.cond_dim()});
    for (std::int64_t b = 0; b < batch; ++b) {
        std::copy(t_feat.ptr() + b * cfg.cond_feat, t_feat.ptr() + (b + 1) * cfg.cond_feat,
                  cond_feats.ptr() + b * cfg.cond_dim());
        std::copy(o_feat.ptr() + b * cfg.cond_feat, o_feat.ptr() + (b + 1) * cfg.cond_feat,
                  cond_feats.ptr() + b * cfg.cond_dim() + cfg.cond_feat);
    }

    const TensorT<T> x_ch = transpose_last2(x_noisy);  // [B,D_a,H]
    EncoderBlockT<T> enc{net.enc_conv.p, net.enc_lif.p, cfg.t_s};
    TensorT<T> s = encode(x_ch, enc, &tp.enc, mode);

    std::vector<TensorT<T>> skip_currents(static_cast<std::size_t>(n - 1));
    for (std::int64_t i = 0; i < n; ++i) {
        TensorT<T>* c2_out = (i + 1 < n) ? &skip_currents[static_cast<std::size_t>(i)] : nullptr;
        s = block_forward<T>(net.enc_blocks[static_cast<std::size_t>(i)], s, cond_feats,
                          tp.enc_blocks[static_cast<std::size_t>(i)], mode, c2_out);
        if (i + 1 < n) {
            if (s.dim(3) % 2 != 0) throw ShapeError("downsample needs even length");
            const auto& down = net.downs[static_cast<std::size_t>(i)];
            TensorT<T> c = conv1d_train_forward(s, down.conv.p,
                                                &tp.downs[static_cast<std::size_t>(i)].conv);
            s = lif_forward(c, down.lif.p, &tp.downs[static_cast<std::size_t>(i)].lif, mode);
        }
    }
    s = block_forward<T>(net.bottleneck, s, cond_feats, tp.bottleneck, mode, nullptr);
    for (std::int64_t i = n - 2; i >= 0; --i) {
        auto& up_tape = tp.ups[static_cast<std::size_t>(i)];
        up_tape.pre_repeat_shape = s.shape;
        const TensorT<T> rep = repeat2(s);
        TensorT<T> c = conv1d_train_forward(rep, net.ups[static_cast<std::size_t>(i)].conv.p,
                                            &up_tape.conv);
        accum(c, skip_currents[static_cast<std::size_t>(i)]);
        s = lif_forward(c, net.ups[static_cast<std::size_t>(i)].lif.p, &up_tape.lif, mode);
        s = block_forward<T>(net.dec_blocks[static_cast<std::size_t>(i)], s, cond_feats,
                          tp.dec_blocks[static_cast<std::size_t>(i)], mode, nullptr);
    }

    DecoderBlockT<T> dec{net.dec_conv.p};
    const TensorT<T> y_ch = decode(s, dec, &tp.dec, mode == FiringMode::binary);
    tp.valid = true;
    return transpose_last2(y_ch);  // [B,H,D_a]
}

template <class T>
TensorT<T> unet_backward(SpikingUNetT<T>& net, const TensorT<T>& grad_out, UNetTapeT<T>& tape) {
    if (!tape.valid) throw NumericError("unet backward: missing tape");
    const UNetConfig& cfg = net.cfg;
    const std::int64_t n = cfg.levels();
    const std::int64_t batch = tape.x_shape[0];

    const TensorT<T> g_ch = transpose_last2(grad_out);
    DecoderBlockT<T> dec{net.dec_conv.p};
    DecodeGradsT<T> dg = decode_backward(g_ch, tape.dec, dec);
    accum(net.dec_conv.grad_w, dg.conv.weight);
    accum(net.dec_conv.grad_b, dg.conv.bias);
    TensorT<T> gs = std::move(dg.input);

    TensorT<T> cond_grad({batch, cfg.cond_dim()});
    std::vector<TensorT<T>> skip_grads(static_cast<std::size_t>(n - 1));

    for (std::int64_t i = 0; i <= n - 2; ++i) {
        auto& dec_blk = net.dec_blocks[static_cast<std::size_t>(i)];
        BlockBackOut<T> br = block_backward<T>(dec_blk, gs,
                                            tape.dec_blocks[static_cast<std::size_t>(i)], nullptr);
        accum(cond_grad, br.cond_grad);
        auto& up = net.ups[static_cast<std::size_t>(i)];
        auto& up_tape = tape.ups[static_cast<std::size_t>(i)];
        LifGradsT<T> ml = lif_backward(br.s_in_grad, up_tape.lif, up.lif.p);
        accum(up.lif.grad_m, ml.m);
        TensorT<T> gc = std::move(ml.currents);
        Conv1dGradsT<T> cg = conv1d_train_backward(gc, up_tape.conv, up.conv.p);
        accum(up.conv.grad_w, cg.weight);
        accum(up.conv.grad_b, cg.bias);
        gs = repeat2_backward(cg.input, up_tape.pre_repeat_shape);
        skip_grads[static_cast<std::size_t>(i)] = std::move(gc);
    }

    BlockBackOut<T> mb = block_backward<T>(net.bottleneck, gs, tape.bottleneck, nullptr);
    accum(cond_grad, mb.cond_grad);
    gs = std::move(mb.s_in_grad);

    for (std::int64_t i = n - 1; i >= 0; --i) {
        if (i + 1 < n) {
            auto& down = net.downs[static_cast<std::size_t>(i)];
            auto& down_tape = tape.downs[static_cast<std::size_t>(i)];
            LifGradsT<T> dl = lif_backward(gs, down_tape.lif, down.lif.p);
            accum(down.lif.grad_m, dl.m);
            Conv1dGradsT<T> dc = conv1d_train_backward(dl.currents, down_tape.conv, down.conv.p);
            accum(down.conv.grad_w, dc.weight);
            accum(down.conv.grad_b, dc.bias);
            gs = std::move(dc.input);
        }
        const TensorT<T>* extra =
            (i + 1 < n) ? &skip_grads[static_cast<std::size_t>(i)] : nullptr;
        BlockBackOut<T> br = block_backward<T>(net.enc_blocks[static_cast<std::size_t>(i)], gs,
                                            tape.enc_blocks[static_cast<std::size_t>(i)], extra);
        accum(cond_grad, br.cond_grad);
        gs = std::move(br.s_in_grad);
    }

    EncoderBlockT<T> enc{net.enc_conv.p, net.enc_lif.p, cfg.t_s};
    EncodeGradsT<T> eg = encode_backward(gs, tape.enc, enc);
    accum(net.enc_conv.grad_w, eg.conv.weight);
    accum(net.enc_conv.grad_b, eg.conv.bias);
    accum(net.enc_lif.grad_m, eg.lif_m);

    // Split the conditioning gradient into its time/observation halves.
    TensorT<T> g_tfeat({batch, cfg.cond_feat});
    TensorT<T> g_ofeat({batch, cfg.cond_feat});
    for (std::int64_t b = 0; b < batch; ++b) {
        std::copy(cond_grad.ptr() + b * cfg.cond_dim(),
                  cond_grad.ptr() + b * cfg.cond_dim() + cfg.cond_feat,
                  g_tfeat.ptr() + b * cfg.cond_feat);
        std::copy(cond_grad.ptr() + b * cfg.cond_dim() + cfg.cond_feat,
                  cond_grad.ptr() + (b + 1) * cfg.cond_dim(),
                  g_ofeat.ptr() + b * cfg.cond_feat);
    }
    LinearGradsT<T> tl = linear_backward(g_tfeat, tape.time_linear, net.time_linear.p);
    accum(net.time_linear.grad_w, tl.weight);
    accum(net.time_linear.grad_b, tl.bias);
    LinearGradsT<T> ol = linear_backward(g_ofeat, tape.obs_linear, net.obs_linear.p);
    accum(net.obs_linear.grad_w, ol.weight);
    accum(net.obs_linear.grad_b, ol.bias);

    tape.valid = false;
    return transpose_last2(eg.input);  // back to [B,H,D_a]
}

template <class T>
T unet_min_kink_distance(const SpikingUNetT<T>& net, const UNetTapeT<T>& tape) {
    T best = std::numeric_limits<T>::max();
    best = std::min(best, min_kink_distance(tape.enc.lif, net.enc_lif.p));
    auto visit_block = [&best](const SpikingBlockT<T>& b, const BlockTapeT<T>& t) {
        best = std::min(best, min_kink_distance(t.lif1, b.lif1.p));
        best = std::min(best, min_kink_distance(t.lif2, b.lif2.p));
    };
    for (std::size_t i = 0; i < net.enc_blocks.size(); ++i) {
        visit_block(net.enc_blocks[i], tape.enc_blocks[i]);
        if (i < net.downs.size()) {
            best = std::min(best, min_kink_distance(tape.downs[i].lif, net.downs[i].lif.p));
        }
    }
    visit_block(net.bottleneck, tape.bottleneck);
    for (std::size_t i = 0; i < net.ups.size(); ++i) {
        best = std::min(best, min_kink_distance(tape.ups[i].lif, net.ups[i].lif.p));
        visit_block(net.dec_blocks[i], tape.dec_blocks[i]);
    }
    return best;
}

#define SDP_INSTANTIATE_UNET(T)                                                              \
    template struct SpikingUNetT<T>;                                                         \
    template SpikingUNetT<T> build_unet<T>(const UNetConfig&, std::uint64_t);                \
    template TensorT<T> unet_forward<T>(const SpikingUNetT<T>&, const TensorT<T>&,           \
                                        const std::vector<std::int64_t>&, const TensorT<T>&, \
                                        UNetTapeT<T>*, FiringMode);                          \
    template TensorT<T> unet_backward<T>(SpikingUNetT<T>&, const TensorT<T>&,                \
                                         UNetTapeT<T>&);                                     \
    template TensorT<T> timestep_embedding<T>(const std::vector<std::int64_t>&,              \
                                              std::int64_t);                                 \
    template T unet_min_kink_distance<T>(const SpikingUNetT<T>&, const UNetTapeT<T>&);

SDP_INSTANTIATE_UNET(float)
SDP_INSTANTIATE_UNET(double)

#undef SDP_INSTANTIATE_UNET

}  // namespace sdp
