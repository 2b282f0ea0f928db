// Command-line front end: dataset generation, training, closed-loop
// evaluation, energy profiling and channel statistics.

#include <CLI11.hpp>
#include <iostream>

#include "sdp/train.hpp"

namespace {

// exit codes: 0 ok, 2 config, 3 io, 4 numeric, 1 other
constexpr int kOkExit = 0;
constexpr int kOtherExit = 1;
constexpr int kConfigExit = 2;
constexpr int kIoExit = 3;
constexpr int kNumericExit = 4;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sdp: spiking diffusion policy trainer and tools"};
    app.require_subcommand(1);
    app.footer(sdp::config_key_help());

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key-value config file");
    app.add_option("--set", overrides, "override a config key (key=value), repeatable");

    auto* gen = app.add_subcommand("gen-data", "generate an expert demonstration dataset");
    auto* train = app.add_subcommand("train", "train the denoiser");
    auto* eval = app.add_subcommand("eval", "closed-loop evaluation of checkpoints");
    auto* profile = app.add_subcommand("profile", "energy report for a checkpoint");
    auto* stats = app.add_subcommand("stats", "per-channel firing statistics");

    std::vector<std::string> eval_ckpts;
    eval->add_option("--checkpoint", eval_ckpts, "checkpoint file(s); best is selected")
        ->required();
    std::string profile_ckpt, stats_ckpt;
    profile->add_option("--checkpoint", profile_ckpt, "checkpoint file")->required();
    stats->add_option("--checkpoint", stats_ckpt, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const sdp::RunConfig cfg = sdp::load_config(config_path, overrides);
        cfg.validate(std::cerr);
        if (gen->parsed()) {
            return sdp::gen_data_run(cfg, std::cout);
        }
        if (train->parsed()) {
            const auto out = sdp::train_run(cfg, std::cout);
            std::cout << "final checkpoint: " << out.final_checkpoint << "\n";
            return kOkExit;
        }
        if (eval->parsed()) {
            const auto out = sdp::eval_run(cfg, eval_ckpts, std::cout);
            const auto& best = out.rows[out.best_index];
            std::cout << "best checkpoint: " << best.checkpoint << " (epoch " << best.epoch
                      << ", success " << best.metrics.success_rate << ")\n";
            return kOkExit;
        }
        if (profile->parsed()) {
            (void)sdp::profile_run(cfg, profile_ckpt, std::cout);
            std::cout << "energy report written to " << cfg.out_dir << "/energy.csv\n";
            return kOkExit;
        }
        if (stats->parsed()) {
            (void)sdp::stats_run(cfg, stats_ckpt, std::cout);
            return kOkExit;
        }
    } catch (const sdp::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigExit;
    } catch (const sdp::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoExit;
    } catch (const sdp::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNumericExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOtherExit;
    }
    return kOtherExit;
}
