// probcast: config-driven pipeline for converting deterministic GRU
// forecasters into conditional-GAN probabilistic forecasters and scoring
// them with empirical CRPS.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "probcast/manifest.hpp"
#include "probcast/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
};

probcast::ExperimentConfig load_config(const CommonFlags& flags, nlohmann::json& snapshot) {
    snapshot = probcast::load_config_json(flags.config_path, flags.overrides);
    auto cfg = probcast::parse_experiment_config(snapshot);
    if (flags.seed)
        cfg.seed = *flags.seed;
    if (!flags.out.empty())
        cfg.out_dir = flags.out;
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
    auto* opt = cmd->add_option("--config", flags.config_path, "experiment config file (JSON)");
    if (config_required)
        opt->required();
    cmd->add_option("--set", flags.overrides,
                    "override a config field: --set dotted.path=value (repeatable)");
    cmd->add_option("--seed", flags.seed, "override the experiment seed");
    cmd->add_option("--out", flags.out, "override the output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ProbCast: probabilistic multivariate time-series forecasting "
                 "via conditional-GAN conversion of deterministic GRU forecasters"};
    app.require_subcommand(1);

    CommonFlags train_flags;
    auto* train_det = app.add_subcommand(
        "train-det", "ingest, split, scale, window, then fit (or GA-search) the "
                     "deterministic forecaster; writes checkpoint + test-MAE report");
    add_common(train_det, train_flags);

    CommonFlags gan_flags;
    std::string det_checkpoint;
    auto* gan = app.add_subcommand(
        "gan", "convert a deterministic checkpoint into a generator, pick a "
               "discriminator, adversarially train, report CRPS* side by side");
    add_common(gan, gan_flags);
    gan->add_option("--det-checkpoint", det_checkpoint,
                    "deterministic checkpoint file or its run directory")
        ->required();

    std::string fc_checkpoint, fc_input, fc_output, fc_scaler, fc_truth_out;
    probcast::ForecastOptions fc_opts;
    std::uint64_t fc_seed = 0;
    auto* forecast = app.add_subcommand(
        "forecast", "draw n sampled forecasts per window of a source series "
                    "(original units, CSV with one header line)");
    forecast->add_option("--checkpoint", fc_checkpoint, "generator checkpoint")->required();
    forecast->add_option("--input", fc_input, "window source CSV")->required();
    forecast->add_option("--out", fc_output, "output sample file")->required();
    forecast->add_option("-n,--samples", fc_opts.samples, "draws per window (default 200)");
    forecast->add_option("--seed", fc_seed, "sampling seed");
    forecast->add_flag("--has-header", fc_opts.has_header, "source CSV has a header row");
    forecast->add_option("--scaler", fc_scaler,
                         "scaler file (default: scaler.json next to the checkpoint)");
    forecast->add_option("--truth-out", fc_truth_out,
                         "also write the aligned ground-truth rows to this file");

    std::string pl_samples, pl_truth, pl_out;
    std::vector<Eigen::Index> pl_features;
    Eigen::Index pl_n = 0;
    auto* plot = app.add_subcommand(
        "plot", "fan chart (10/50/90% bands + truth) per selected feature, SVG");
    plot->add_option("--samples", pl_samples, "sample file from `forecast`")->required();
    plot->add_option("--truth", pl_truth, "ground-truth CSV")->required();
    plot->add_option("--out", pl_out, "output image path (.svg)")->required();
    plot->add_option("--feature", pl_features, "feature indices (default: 0)");
    plot->add_option("--samples-per-window", pl_n, "override sample-count inference");

    CommonFlags ev_flags;
    std::string ev_checkpoint, ev_out;
    Eigen::Index ev_samples = 200;
    auto* evaluate = app.add_subcommand(
        "evaluate", "score a checkpoint on the configured dataset's test split");
    add_common(evaluate, ev_flags);
    evaluate->add_option("--checkpoint", ev_checkpoint, "deterministic or generator checkpoint")
        ->required();
    evaluate->add_option("-n,--samples", ev_samples, "draws per window for generators");
    evaluate->add_option("--metrics-out", ev_out, "output metrics file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(train_det)) {
            nlohmann::json snapshot;
            auto cfg = load_config(train_flags, snapshot);
            const auto dir = probcast::cmd_train_det(cfg, snapshot);
            std::cout << "run directory: " << dir << "\n";
        } else if (app.got_subcommand(gan)) {
            nlohmann::json snapshot;
            auto cfg = load_config(gan_flags, snapshot);
            const auto dir = probcast::cmd_gan(cfg, det_checkpoint, snapshot);
            std::cout << "run directory: " << dir << "\n";
        } else if (app.got_subcommand(forecast)) {
            fc_opts.seed = fc_seed;
            fc_opts.scaler_path = fc_scaler;
            fc_opts.truth_out = fc_truth_out;
            const auto blocks = probcast::cmd_forecast(fc_checkpoint, fc_input, fc_output, fc_opts);
            std::cout << "wrote " << blocks << " window blocks x " << fc_opts.samples
                      << " samples to " << fc_output << "\n";
        } else if (app.got_subcommand(plot)) {
            probcast::PlotOptions opts;
            opts.features = pl_features;
            opts.samples_per_window = pl_n;
            const auto files = probcast::cmd_plot(pl_samples, pl_truth, pl_out, opts);
            for (const auto& f : files)
                std::cout << "wrote " << f << "\n";
        } else if (app.got_subcommand(evaluate)) {
            nlohmann::json snapshot;
            auto cfg = load_config(ev_flags, snapshot);
            const auto path = probcast::cmd_evaluate(cfg, ev_checkpoint, ev_samples, ev_out);
            std::cout << "wrote " << path << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
