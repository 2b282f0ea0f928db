#pragma once

#include <string>
#include <vector>

#include "sdp/codec.hpp"
#include "sdp/lif.hpp"
#include "sdp/ops.hpp"

namespace sdp {

// Denoiser architecture. All spike-carrying edges hold exact {0,1} values;
// every residual or skip summation happens on pre-LIF conv-output currents,
// so no ternary spike state can ever form.
//
// Layout for widths [W0..W_{n-1}], horizon H:
//   encode (conv D_a->W0, LIF)                              L = H
//   for each level i: SpikingBlock at W_i; store the block's
//     pre-LIF2 current as the U-skip; downsample (stride-2
//     conv W_i->W_{i+1}, LIF) between levels                L halves
//   bottleneck SpikingBlock at W_{n-1}
//   for each level i (coarse to fine): nearest-repeat + conv
//     W_{i+1}->W_i, sum the stored skip current, LIF; then a
//     SpikingBlock at W_i                                   L doubles
//   decode (per-timestep 1x1 conv W0->D_a, mean over T_S)
//
// Conditioning (diffusion step + observation) enters as an additive
// per-channel current after conv1 of every block, computed by a per-block
// linear map from the concatenated embeddings.
struct UNetConfig {
    std::vector<std::int64_t> widths{64, 128, 256};
    std::int64_t horizon = 16;        // H, action-sequence length
    std::int64_t action_dim = 2;      // D_a
    std::int64_t obs_dim = 12;        // flattened observation window
    std::int64_t t_s = 4;             // SNN timesteps
    std::int64_t kernel = 3;
    std::int64_t time_embed_dim = 64; // sinusoidal embedding size
    std::int64_t cond_feat = 32;      // per-branch feature width
    double tau = 0.5;
    double m_init = 0.7;

    std::int64_t levels() const { return static_cast<std::int64_t>(widths.size()); }
    std::int64_t cond_dim() const { return 2 * cond_feat; }
    void validate() const;
};

// Closed-form parameter count for a config (tested against the registry).
std::int64_t unet_parameter_count(const UNetConfig& cfg);

template <class T>
struct ParamRefT {
    std::string name;
    TensorT<T>* value;
    TensorT<T>* grad;
};

template <class T>
struct ConvLayerT {
    ConvParamsT<T> p;
    TensorT<T> grad_w, grad_b;
};

template <class T>
struct LinearLayerT {
    LinearParamsT<T> p;
    TensorT<T> grad_w, grad_b;
};

template <class T>
struct LifLayerT {
    LifParamsT<T> p;
    TensorT<T> grad_m;
};

// conv -> (+cond) -> LIF -> conv -> (+ 1x1 conv of the block input) -> LIF.
// Both inputs of the residual sum are conv outputs (continuous currents).
template <class T>
struct SpikingBlockT {
    ConvLayerT<T> conv1, conv2, skip;
    LinearLayerT<T> cond;
    LifLayerT<T> lif1, lif2;
};

template <class T>
struct BlockTapeT {
    Conv1dTapeT<T> conv1, conv2, skip;
    LinearTapeT<T> cond;
    LifTapeT<T> lif1, lif2;
    std::vector<std::int64_t> c1_shape;
};

template <class T>
struct DownLayerT {
    ConvLayerT<T> conv;  // stride 2
    LifLayerT<T> lif;
};

template <class T>
struct UpLayerT {
    ConvLayerT<T> conv;  // after nearest-neighbor repeat
    LifLayerT<T> lif;    // fires on upsampled + skip currents
};

template <class T>
struct DownTapeT {
    Conv1dTapeT<T> conv;
    LifTapeT<T> lif;
};

template <class T>
struct UpTapeT {
    Conv1dTapeT<T> conv;
    LifTapeT<T> lif;
    std::vector<std::int64_t> pre_repeat_shape;
};

template <class T>
struct UNetTapeT {
    LinearTapeT<T> time_linear, obs_linear;
    TensorT<T> time_emb;  // sinusoid output fed to time_linear
    EncodeTapeT<T> enc;
    std::vector<BlockTapeT<T>> enc_blocks;
    std::vector<DownTapeT<T>> downs;
    BlockTapeT<T> bottleneck;
    std::vector<UpTapeT<T>> ups;
    std::vector<BlockTapeT<T>> dec_blocks;
    DecodeTapeT<T> dec;
    std::vector<std::int64_t> x_shape;
    bool valid = false;
};

template <class T>
struct SpikingUNetT {
    UNetConfig cfg;
    LinearLayerT<T> time_linear;  // time_embed_dim -> cond_feat
    LinearLayerT<T> obs_linear;   // obs_dim -> cond_feat
    ConvLayerT<T> enc_conv;
    LifLayerT<T> enc_lif;
    std::vector<SpikingBlockT<T>> enc_blocks;
    std::vector<DownLayerT<T>> downs;
    SpikingBlockT<T> bottleneck;
    std::vector<UpLayerT<T>> ups;
    std::vector<SpikingBlockT<T>> dec_blocks;
    ConvLayerT<T> dec_conv;  // 1x1, zero-initialized

    // Stable registry order; checkpoints and the optimizer rely on it.
    std::vector<ParamRefT<T>> params();
    void zero_grads();
};

// Deterministic construction: Kaiming-uniform (bound 1/sqrt(fan_in)) convs
// and linears, zero-initialized final decoder conv, m = m_init everywhere.
template <class T>
SpikingUNetT<T> build_unet(const UNetConfig& cfg, std::uint64_t seed);

// x_noisy: [B,H,D_a]; t_d: per-sample diffusion step; obs: [B,obs_dim].
// Output shape equals input shape.
template <class T>
TensorT<T> unet_forward(const SpikingUNetT<T>& net, const TensorT<T>& x_noisy,
                        const std::vector<std::int64_t>& t_d, const TensorT<T>& obs,
                        UNetTapeT<T>* tape = nullptr, FiringMode mode = FiringMode::binary);

// Populates every parameter's grad tensor (accumulating; call zero_grads
// first). Returns the gradient wrt x_noisy.
template <class T>
TensorT<T> unet_backward(SpikingUNetT<T>& net, const TensorT<T>& grad_out,
                         UNetTapeT<T>& tape);

// Sinusoidal position features of an integer step (no parameters).
template <class T>
TensorT<T> timestep_embedding(const std::vector<std::int64_t>& t_d, std::int64_t dim);

// Smallest |u - theta| distance to the surrogate kinks {0, 0.5} across all
// LIF tapes of a forward pass.
template <class T>
T unet_min_kink_distance(const SpikingUNetT<T>& net, const UNetTapeT<T>& tape);

}  // namespace sdp
