#include "sdp/energy.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "sdp/kernels/kernels.hpp"

namespace sdp {

std::int64_t EnergyReport::total_aops() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.aops;
    return n;
}

double EnergyReport::total_sops() const {
    double n = 0;
    for (const auto& l : layers) n += l.sops;
    return n;
}

double EnergyReport::total_e_snn() const {
    double n = 0;
    for (const auto& l : layers) n += l.e_snn;
    return n;
}

double EnergyReport::total_e_ann() const {
    double n = 0;
    for (const auto& l : layers) n += l.e_ann;
    return n;
}

double EnergyReport::reduction_percent() const {
    const double ann = total_e_ann();
    if (ann <= 0.0) throw NumericError("energy reduction undefined: zero AOPs total");
    return 100.0 * (1.0 - total_e_snn() / ann);
}

double EnergyReport::reduction_percent_spiking() const {
    double snn = 0.0, ann = 0.0;
    for (const auto& l : layers) {
        if (l.spike_input) {
            snn += l.e_snn;
            ann += l.e_ann;
        }
    }
    if (ann <= 0.0) throw NumericError("energy reduction undefined: zero spiking AOPs");
    return 100.0 * (1.0 - snn / ann);
}

double implied_tspsi(double reduction_percent, const EnergyConstants& c) {
    return (1.0 - reduction_percent / 100.0) * c.e_mac / c.e_ac;
}

namespace {

LayerEnergy conv_layer(const std::string& name, std::int64_t c_in, std::int64_t c_out,
                       std::int64_t k, std::int64_t l_out, bool spike) {
    LayerEnergy l;
    l.name = name;
    l.kind = "conv";
    l.spike_input = spike;
    l.aops = l_out * c_out * c_in * k;
    return l;
}

LayerEnergy linear_layer(const std::string& name, std::int64_t d_in, std::int64_t d_out) {
    LayerEnergy l;
    l.name = name;
    l.kind = "linear";
    l.spike_input = false;  // embeddings are continuous-valued
    l.aops = d_in * d_out;
    return l;
}

}  // namespace

std::vector<LayerEnergy> count_aops(const UNetConfig& cfg) {
    cfg.validate();
    const std::int64_t n = cfg.levels();
    const std::int64_t k = cfg.kernel;
    std::vector<LayerEnergy> out;
    out.push_back(linear_layer("time_embed", cfg.time_embed_dim, cfg.cond_feat));
    out.push_back(linear_layer("obs_embed", cfg.obs_dim, cfg.cond_feat));
    // the encoder conv consumes the continuous static input, so it is
    // MAC-priced in both models
    out.push_back(conv_layer("encode.conv", cfg.action_dim, cfg.widths[0], k, cfg.horizon, false));

    auto level_len = [&](std::int64_t i) { return cfg.horizon >> i; };
    auto add_block = [&](const std::string& prefix, std::int64_t w, std::int64_t len) {
        out.push_back(conv_layer(prefix + ".conv1", w, w, k, len, true));
        out.push_back(conv_layer(prefix + ".conv2", w, w, k, len, true));
        out.push_back(conv_layer(prefix + ".skip", w, w, 1, len, true));
        out.push_back(linear_layer(prefix + ".cond", cfg.cond_dim(), w));
    };

    for (std::int64_t i = 0; i < n; ++i) {
        add_block("enc" + std::to_string(i), cfg.widths[i], level_len(i));
        if (i + 1 < n) {
            out.push_back(conv_layer("down" + std::to_string(i) + ".conv", cfg.widths[i],
                                     cfg.widths[i + 1], k, level_len(i + 1), true));
        }
    }
    add_block("mid", cfg.widths[n - 1], level_len(n - 1));
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        out.push_back(conv_layer("up" + std::to_string(i) + ".conv", cfg.widths[i + 1],
                                 cfg.widths[i], k, level_len(i), true));
        add_block("dec" + std::to_string(i), cfg.widths[i], level_len(i));
    }
    out.push_back(conv_layer("decode.conv", cfg.widths[0], cfg.action_dim, 1, cfg.horizon, true));
    return out;
}

EnergyReport estimate_energy(std::vector<LayerEnergy> layers, std::int64_t t_s,
                             const EnergyConstants& constants) {
    if (t_s < 1) throw ConfigError("estimate_energy: T_S must be >= 1");
    EnergyReport r;
    r.t_s = t_s;
    r.constants = constants;
    for (auto& l : layers) {
        if (l.aops < 0) throw NumericError("estimate_energy: negative AOPs");
        l.e_ann = constants.e_mac * static_cast<double>(l.aops);
        if (l.spike_input) {
            const double psi = l.psi.value_or(0.0);
            if (psi < 0.0) throw NumericError("estimate_energy: negative firing rate");
            l.sops = static_cast<double>(t_s) * psi * static_cast<double>(l.aops);
            l.e_snn = constants.e_ac * l.sops;
        } else {
            l.sops = 0.0;
            l.e_snn = l.e_ann;  // continuous inputs cannot be accumulate-only
        }
    }
    r.layers = std::move(layers);
    return r;
}

namespace {

// One accumulate per one-valued tap actually read by the conv (padding taps
// read zeros and cost nothing); returns the per-sample count.
template <class T>
double instrumented_conv_sops(const TensorT<T>& input, std::int64_t c_out, std::int64_t k,
                              std::int64_t stride, std::int64_t padding) {
    const std::int64_t steps = input.dim(0);
    const std::int64_t batch = input.dim(1);
    const std::int64_t c_in = input.dim(2);
    const std::int64_t len = input.dim(3);
    const std::int64_t out_len = conv1d_out_len(len, k, stride, padding);
    std::int64_t ones_taps = 0;
    for (std::int64_t t = 0; t < steps; ++t) {
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t ci = 0; ci < c_in; ++ci) {
                const T* row = input.ptr() + ((t * batch + b) * c_in + ci) * len;
                for (std::int64_t lo = 0; lo < out_len; ++lo) {
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const std::int64_t li = lo * stride + kk - padding;
                        if (li >= 0 && li < len && row[li] == T(1)) ++ones_taps;
                    }
                }
            }
        }
    }
    return static_cast<double>(ones_taps) * static_cast<double>(c_out) /
           static_cast<double>(batch);
}

template <class T>
std::optional<double> train_psi(const TensorT<T>& input) {
    const std::size_t n = static_cast<std::size_t>(input.numel());
    if (n == 0) throw NumericError("firing rate of an empty batch");
    return static_cast<double>(kern::count_ones_t(input.ptr(), n)) / static_cast<double>(n);
}

}  // namespace

template <class T>
EnergyReport measure_energy(const SpikingUNetT<T>& net, const TensorT<T>& x_noisy,
                            const std::vector<std::int64_t>& t_d, const TensorT<T>& obs,
                            const EnergyConstants& constants) {
    UNetTapeT<T> tape;
    (void)unet_forward(net, x_noisy, t_d, obs, &tape);

    std::vector<LayerEnergy> layers = count_aops(net.cfg);
    std::map<std::string, LayerEnergy*> by_name;
    for (auto& l : layers) by_name[l.name] = &l;

    auto fill_conv = [&](const std::string& name, const Conv1dTapeT<T>& conv_tape,
                         const ConvParamsT<T>& p) {
        LayerEnergy* l = by_name.at(name);
        if (!l->spike_input) return;
        l->psi = train_psi(conv_tape.input);
        l->sops_measured = instrumented_conv_sops(conv_tape.input, p.c_out(), p.kernel(),
                                                  p.stride, p.padding);
    };
    auto fill_block = [&](const std::string& prefix, const SpikingBlockT<T>& blk,
                          const BlockTapeT<T>& bt) {
        fill_conv(prefix + ".conv1", bt.conv1, blk.conv1.p);
        fill_conv(prefix + ".conv2", bt.conv2, blk.conv2.p);
        fill_conv(prefix + ".skip", bt.skip, blk.skip.p);
    };

    for (std::size_t i = 0; i < net.enc_blocks.size(); ++i) {
        fill_block("enc" + std::to_string(i), net.enc_blocks[i], tape.enc_blocks[i]);
        if (i < net.downs.size()) {
            fill_conv("down" + std::to_string(i) + ".conv", tape.downs[i].conv,
                      net.downs[i].conv.p);
        }
    }
    fill_block("mid", net.bottleneck, tape.bottleneck);
    for (std::size_t i = 0; i < net.ups.size(); ++i) {
        fill_conv("up" + std::to_string(i) + ".conv", tape.ups[i].conv, net.ups[i].conv.p);
        fill_block("dec" + std::to_string(i), net.dec_blocks[i], tape.dec_blocks[i]);
    }
    fill_conv("decode.conv", tape.dec.conv, net.dec_conv.p);

    return estimate_energy(std::move(layers), net.cfg.t_s, constants);
}

template EnergyReport measure_energy<float>(const SpikingUNetT<float>&, const TensorT<float>&,
                                            const std::vector<std::int64_t>&,
                                            const TensorT<float>&, const EnergyConstants&);
template EnergyReport measure_energy<double>(const SpikingUNetT<double>&,
                                             const TensorT<double>&,
                                             const std::vector<std::int64_t>&,
                                             const TensorT<double>&, const EnergyConstants&);

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

std::string energy_csv(const EnergyReport& r) {
    std::ostringstream os;
    os << "layer,kind,input,aops,psi,sops,sops_measured,e_snn,e_ann\n";
    for (const auto& l : r.layers) {
        os << l.name << "," << l.kind << "," << (l.spike_input ? "spike" : "continuous") << ","
           << l.aops << ",";
        if (l.psi) os << fmt(*l.psi);
        os << "," << fmt(l.sops) << ",";
        if (l.sops_measured) os << fmt(*l.sops_measured);
        os << "," << fmt(l.e_snn) << "," << fmt(l.e_ann) << "\n";
    }
    os << "TOTAL,,," << r.total_aops() << ",," << fmt(r.total_sops()) << ",,"
       << fmt(r.total_e_snn()) << "," << fmt(r.total_e_ann()) << "\n";
    // diagnostic rows: metric name, value, rest empty
    os << "REDUCTION_ALL_PERCENT," << fmt(r.reduction_percent()) << ",,,,,,,\n";
    os << "REDUCTION_SPIKING_PERCENT," << fmt(r.reduction_percent_spiking()) << ",,,,,,,\n";
    os << "IMPLIED_TSPSI_AT_94_3_PERCENT," << fmt(implied_tspsi(94.3, r.constants))
       << ",,,,,,,\n";
    os << "IMPLIED_PSI_AT_94_3_PERCENT_TS" << r.t_s << ","
       << fmt(implied_tspsi(94.3, r.constants) / static_cast<double>(r.t_s)) << ",,,,,,,\n";
    return os.str();
}

std::string energy_table(const EnergyReport& r) {
    std::ostringstream os;
    os << "energy model: E_SNN = E_AC*SOPs, E_ANN = E_MAC*AOPs, SOPs = T_S*psi*AOPs\n";
    os << "constants: E_AC = " << r.constants.e_ac << ", E_MAC = " << r.constants.e_mac
       << " energy-units/op (units as printed in the source; ratios are unit-invariant)\n";
    os << "T_S = " << r.t_s << "\n\n";
    os << std::left << std::setw(16) << "layer" << std::setw(8) << "kind" << std::setw(12)
       << "input" << std::right << std::setw(12) << "aops" << std::setw(10) << "psi"
       << std::setw(14) << "sops" << std::setw(14) << "e_snn" << std::setw(14) << "e_ann"
       << "\n";
    for (const auto& l : r.layers) {
        os << std::left << std::setw(16) << l.name << std::setw(8) << l.kind << std::setw(12)
           << (l.spike_input ? "spike" : "continuous") << std::right << std::setw(12) << l.aops;
        if (l.psi) {
            os << std::setw(10) << std::fixed << std::setprecision(4) << *l.psi;
        } else {
            os << std::setw(10) << "-";
        }
        os << std::setw(14) << std::setprecision(1) << l.sops << std::setw(14) << l.e_snn
           << std::setw(14) << l.e_ann << std::defaultfloat << "\n";
    }
    os << "\n";
    os << "total aops: " << r.total_aops() << "   total sops: " << fmt(r.total_sops()) << "\n";
    os << "dynamic energy reduction (whole net):     " << std::fixed << std::setprecision(2)
       << r.reduction_percent() << "%\n";
    os << "dynamic energy reduction (spiking only):  " << r.reduction_percent_spiking()
       << "%\n";
    os << std::defaultfloat;
    os << "reported 94.3% reduction implies T_S*psi = " << std::setprecision(4)
       << implied_tspsi(94.3, r.constants) << " (psi = "
       << implied_tspsi(94.3, r.constants) / static_cast<double>(r.t_s) << " at T_S = " << r.t_s
       << ")\n";
    return os.str();
}

}  // namespace sdp
