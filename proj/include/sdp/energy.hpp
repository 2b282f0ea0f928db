#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdp/unet.hpp"

namespace sdp {

// Per-op energy constants as printed in the source material (uJ per op on
// 45 nm hardware; the conventional literature value is pJ — the reduction
// ratio, which is what the report is for, is unit-invariant).
struct EnergyConstants {
    double e_ac = 0.9;
    double e_mac = 4.6;
};

struct LayerEnergy {
    std::string name;
    std::string kind;          // "conv" | "linear"
    bool spike_input = false;  // spike-input layers earn AC pricing
    std::int64_t aops = 0;     // dense-equivalent MACs per sample
    std::optional<double> psi;            // firing rate of the input train
    double sops = 0.0;                    // T_S * psi * aops
    std::optional<double> sops_measured;  // instrumented accumulate count
    double e_snn = 0.0;
    double e_ann = 0.0;
};

struct EnergyReport {
    std::vector<LayerEnergy> layers;
    std::int64_t t_s = 1;
    EnergyConstants constants;

    std::int64_t total_aops() const;
    double total_sops() const;
    double total_e_snn() const;
    double total_e_ann() const;
    // 100 * (1 - E_SNN / E_ANN); throws on zero AOPs.
    double reduction_percent() const;          // whole network
    double reduction_percent_spiking() const;  // spike-priced layers only
};

// T_S * psi implied by a reported reduction percentage.
double implied_tspsi(double reduction_percent, const EnergyConstants& c = {});

// Closed-form per-layer AOPs for one sample (B = 1); names match the
// parameter registry prefixes.
std::vector<LayerEnergy> count_aops(const UNetConfig& cfg);

// Fill sops / e_snn / e_ann per layer from aops+psi and the constants.
EnergyReport estimate_energy(std::vector<LayerEnergy> layers, std::int64_t t_s,
                             const EnergyConstants& constants = {});

// Run one forward pass on a probe batch, measure per-layer firing rates on
// the actual input trains, and count accumulates exactly (per sample).
template <class T>
EnergyReport measure_energy(const SpikingUNetT<T>& net, const TensorT<T>& x_noisy,
                            const std::vector<std::int64_t>& t_d, const TensorT<T>& obs,
                            const EnergyConstants& constants = {});

std::string energy_csv(const EnergyReport& r);
std::string energy_table(const EnergyReport& r);

}  // namespace sdp
