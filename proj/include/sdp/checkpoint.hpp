#pragma once

#include <array>
#include <string>
#include <vector>

#include "sdp/tensor.hpp"
#include "sdp/unet.hpp"

namespace sdp {

// Adam moments aligned with the parameter registry order.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;

    void init_like(std::vector<ParamRefT<float>>& params);
};

void adam_step(std::vector<ParamRefT<float>>& params, AdamState& st, double lr, double beta1,
               double beta2, bool skip_threshold_params, double eps = 1e-8);

struct CheckpointMeta {
    std::uint64_t config_digest = 0;
    std::int64_t epoch = 0;
    std::array<float, 2> act_min{};  // dataset action stats carried along so
    std::array<float, 2> act_max{};  // evaluation needs no dataset file
};

// Binary "SDPC" container: named little-endian f32 parameter blobs plus
// optimizer state; load(save(x)) reproduces training bit-exactly.
void save_checkpoint(const std::string& path, SpikingUNetT<float>& net, const AdamState& opt,
                     const CheckpointMeta& meta);

// check_digest: fail on config digest mismatch (eval contract).
CheckpointMeta load_checkpoint(const std::string& path, SpikingUNetT<float>& net,
                               AdamState* opt, std::uint64_t expected_digest,
                               bool check_digest);

// Peek at the stored epoch/digest without a network.
CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace sdp
