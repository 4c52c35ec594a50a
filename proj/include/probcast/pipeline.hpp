#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "probcast/checkpoint.hpp"
#include "probcast/config.hpp"
#include "probcast/evaluation.hpp"
#include "probcast/manifest.hpp"
#include "probcast/plot.hpp"
#include "probcast/search.hpp"
#include "probcast/training.hpp"

namespace probcast {

// Run-directory layout produced by the pipeline commands.
namespace artifact {
inline constexpr const char* kDetCheckpoint = "checkpoint_deterministic.json";
inline constexpr const char* kGenCheckpoint = "checkpoint_generator.json";
inline constexpr const char* kDiscCheckpoint = "checkpoint_discriminator.json";
inline constexpr const char* kScaler = "scaler.json";
inline constexpr const char* kDetTrainReport = "train_report_deterministic.json";
inline constexpr const char* kGanTrainReport = "train_report_gan.json";
inline constexpr const char* kDetMetrics = "metrics_deterministic.json";
inline constexpr const char* kGanMetrics = "metrics_gan.json";
inline constexpr const char* kDetGaHistory = "ga_history_deterministic.json";
inline constexpr const char* kDiscGaHistory = "ga_history_discriminator.json";
} // namespace artifact

struct PreparedData {
    ScalerState scaler;
    TimeSeriesFrame train_scaled, valid_scaled, test_scaled;
    std::vector<std::string> feature_names;
    Eigen::Index feature_count = 0;
};

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
    auto frame = load_csv(cfg.dataset.path, cfg.dataset.has_header);
    frame.sample_rate = cfg.dataset.sample_rate;
    auto splits = chronological_split(frame, cfg.split);
    PreparedData d;
    d.scaler = fit_scaler(splits.train);
    d.train_scaled = apply_scaler(splits.train, d.scaler);
    d.valid_scaled = apply_scaler(splits.valid, d.scaler);
    d.test_scaled = apply_scaler(splits.test, d.scaler);
    d.feature_names = frame.feature_names;
    d.feature_count = frame.features();
    return d;
}

// Step 1 of the conversion pipeline: fit (or search, then fit) the point
// forecaster; writes checkpoint, scaler, train report and test-MAE metrics.
inline std::string cmd_train_det(const ExperimentConfig& cfg,
                                 const nlohmann::json& config_snapshot = nlohmann::json::object()) {
    validate_config(cfg, /*need_det_phase=*/true, /*need_gan_phase=*/false);
    const std::filesystem::path out_dir(cfg.out_dir);
    DirLock lock(out_dir);
    RunManifest manifest(out_dir, "train-det", config_snapshot);

    auto data = prepare_data(cfg);

    ExplicitDetSpec chosen;
    if (cfg.det.spec) {
        chosen = *cfg.det.spec;
    } else {
        DeterministicFitnessContext ctx;
        ctx.train = &data.train_scaled;
        ctx.valid = &data.valid_scaled;
        ctx.train_cfg = cfg.det.search_train;
        ctx.max_train_windows = cfg.det.max_search_windows;
        GAConfig ga = cfg.det.ga;
        ga.seed = mix_seed(cfg.seed, 0xDE7ull, 0x6Aull);
        const auto& space = *cfg.det.search;
        auto result = ga_search(
            space,
            [&](const std::vector<int>& genome, std::uint64_t seed) {
                return fitness_deterministic(genome, space, ctx, seed);
            },
            ga);
        save_search_history((out_dir / artifact::kDetGaHistory).string(), result.history);
        manifest.add_artifact("ga_history", (out_dir / artifact::kDetGaHistory).string());
        if (result.budget_exhausted)
            std::cerr << "warning: GA fitness budget exhausted, using best-so-far genome\n";
        chosen.window_size = result.best.genome[space.index_of("window_size")];
        chosen.gru_layers = result.best.genome[space.index_of("gru_layers")];
        chosen.gru_cells = result.best.genome[space.index_of("gru_cells")];
    }

    auto spec = make_deterministic_spec(chosen.window_size, chosen.gru_layers, chosen.gru_cells,
                                        data.feature_count, chosen.dense_hidden);
    const std::uint64_t init_seed = mix_seed(cfg.seed, 0xDE71ull);
    DeterministicModel model(spec, init_seed);

    auto train_ws = make_windows(data.train_scaled, spec.window_size);
    auto valid_ws = make_windows(data.valid_scaled, spec.window_size);
    auto test_ws = make_windows(data.test_scaled, spec.window_size);

    TrainConfig tcfg = cfg.det.train;
    tcfg.seed = mix_seed(cfg.seed, 0xDE72ull);
    auto report = train_deterministic(model, train_ws, valid_ws, tcfg);

    save_checkpoint((out_dir / artifact::kDetCheckpoint).string(), model, init_seed);
    save_scaler((out_dir / artifact::kScaler).string(), data.scaler, data.feature_names);
    save_train_report((out_dir / artifact::kDetTrainReport).string(), report);
    auto metrics = evaluate_point(model, test_ws, &data.scaler);
    save_metrics((out_dir / artifact::kDetMetrics).string(), metrics_to_json(metrics));

    manifest.add_artifact("checkpoint", (out_dir / artifact::kDetCheckpoint).string());
    manifest.add_artifact("scaler", (out_dir / artifact::kScaler).string());
    manifest.add_artifact("train_report", (out_dir / artifact::kDetTrainReport).string());
    manifest.add_artifact("metrics", (out_dir / artifact::kDetMetrics).string());
    manifest.finalize();
    return out_dir.string();
}

namespace detail {

inline std::string resolve_det_checkpoint(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path))
        return (fs::path(path) / artifact::kDetCheckpoint).string();
    return path;
}

} // namespace detail

// Steps 2-3: convert the checkpointed point forecaster into a generator,
// search (or take) a discriminator, adversarially train, and report CRPS* for
// both the ProbCast and its deterministic predecessor side by side.
inline std::string cmd_gan(const ExperimentConfig& cfg, const std::string& det_checkpoint,
                           const nlohmann::json& config_snapshot = nlohmann::json::object()) {
    validate_config(cfg, /*need_det_phase=*/false, /*need_gan_phase=*/true);
    auto det = load_deterministic_checkpoint(detail::resolve_det_checkpoint(det_checkpoint));

    const std::filesystem::path out_dir(cfg.out_dir);
    DirLock lock(out_dir);
    RunManifest manifest(out_dir, "gan", config_snapshot);

    auto data = prepare_data(cfg);
    if (data.feature_count != det.model.spec().feature_count)
        throw CheckpointMismatch("checkpoint mismatch: dataset has " +
                                 std::to_string(data.feature_count) + " features, checkpoint " +
                                 std::to_string(det.model.spec().feature_count));

    const Eigen::Index w = det.model.spec().window_size;
    const Eigen::Index cells = det.model.spec().gru_cells;
    auto train_ws = make_windows(data.train_scaled, w);
    auto valid_ws = make_windows(data.valid_scaled, w);
    auto test_ws = make_windows(data.test_scaled, w);

    GeneratorBuildOptions opts;
    opts.copy_gru_weights = cfg.gan.copy_gru_weights;
    if (cfg.gan.mlp_extension_hidden > 0)
        opts.mlp_extension_widths = {cfg.gan.mlp_extension_hidden, data.feature_count};
    const Eigen::Index noise = cfg.gan.noise_size > 0 ? cfg.gan.noise_size : cells;
    const std::uint64_t gen_seed = mix_seed(cfg.seed, 0x6E3ull);
    auto gen = build_generator_from_deterministic(det.model, noise, gen_seed, opts);

    ExplicitDiscSpec dchosen;
    if (cfg.gan.disc_spec) {
        dchosen = *cfg.gan.disc_spec;
    } else {
        DiscriminatorFitnessContext ctx;
        ctx.train = &data.train_scaled;
        ctx.valid = &data.valid_scaled;
        ctx.generator_spec = gen.spec();
        ctx.warm_start = cfg.gan.copy_gru_weights ? &det.model : nullptr;
        ctx.train_cfg = cfg.gan.search_train;
        ctx.max_train_windows = cfg.gan.max_search_windows;
        GAConfig ga = cfg.gan.ga;
        ga.seed = mix_seed(cfg.seed, 0xD15Cull, 0x6Aull);
        const auto& space = *cfg.gan.disc_search;
        auto result = ga_search(
            space,
            [&](const std::vector<int>& genome, std::uint64_t seed) {
                return fitness_discriminator(genome, space, ctx, seed);
            },
            ga);
        save_search_history((out_dir / artifact::kDiscGaHistory).string(), result.history);
        manifest.add_artifact("ga_history", (out_dir / artifact::kDiscGaHistory).string());
        if (result.budget_exhausted)
            std::cerr << "warning: GA fitness budget exhausted, using best-so-far genome\n";
        dchosen.gru_layers = result.best.genome[space.index_of("disc_gru_layers")];
        dchosen.gru_cells = result.best.genome[space.index_of("disc_gru_cells")];
    }

    auto dspec = make_discriminator_spec(w, dchosen.gru_layers, dchosen.gru_cells,
                                         data.feature_count, dchosen.dense_hidden);
    const std::uint64_t disc_seed = mix_seed(cfg.seed, 0xD15C1ull);
    DiscriminatorModel disc(dspec, disc_seed);

    TrainConfig gcfg = cfg.gan.train;
    gcfg.seed = mix_seed(cfg.seed, 0x6A72ull);
    auto report = train_gan(gen, disc, train_ws, valid_ws, gcfg);

    save_checkpoint((out_dir / artifact::kGenCheckpoint).string(), gen, gen_seed);
    save_checkpoint((out_dir / artifact::kDiscCheckpoint).string(), disc, disc_seed);
    save_scaler((out_dir / artifact::kScaler).string(), data.scaler, data.feature_names);
    save_train_report((out_dir / artifact::kGanTrainReport).string(), report);

    auto probcast_metrics =
        evaluate_probabilistic(gen, test_ws, gcfg.eval_samples_per_window,
                               mix_seed(cfg.seed, 0xE7A1ull), &data.scaler, gcfg.crps_pairing);
    auto det_metrics = evaluate_point(det.model, test_ws, &data.scaler);
    nlohmann::ordered_json side_by_side;
    side_by_side["probcast"] = metrics_to_json(probcast_metrics);
    side_by_side["deterministic"] = metrics_to_json(det_metrics);
    save_metrics((out_dir / artifact::kGanMetrics).string(), side_by_side);

    manifest.add_artifact("generator_checkpoint", (out_dir / artifact::kGenCheckpoint).string());
    manifest.add_artifact("discriminator_checkpoint",
                          (out_dir / artifact::kDiscCheckpoint).string());
    manifest.add_artifact("scaler", (out_dir / artifact::kScaler).string());
    manifest.add_artifact("train_report", (out_dir / artifact::kGanTrainReport).string());
    manifest.add_artifact("metrics", (out_dir / artifact::kGanMetrics).string());
    manifest.finalize();
    return out_dir.string();
}

struct ForecastOptions {
    Eigen::Index samples = 200;
    std::uint64_t seed = 0;
    bool has_header = false;
    std::string scaler_path;   // empty = sibling scaler.json of the checkpoint
    std::string truth_out;     // empty = skip
};

// Draws `samples` forecasts per complete window position of the source
// series (original units). A source with exactly w rows yields one window.
inline Eigen::Index cmd_forecast(const std::string& gen_checkpoint, const std::string& source_csv,
                                 const std::string& out_path, const ForecastOptions& opts) {
    namespace fs = std::filesystem;
    auto gen = load_generator_checkpoint(gen_checkpoint);
    const Eigen::Index w = gen.model.spec().base.window_size;
    const Eigen::Index f = gen.model.spec().base.feature_count;

    std::string scaler_path = opts.scaler_path;
    if (scaler_path.empty())
        scaler_path = (fs::path(gen_checkpoint).parent_path() / artifact::kScaler).string();
    auto scaler = load_scaler(scaler_path);
    if (scaler.per_feature_mean.size() != f)
        throw ShapeMismatch("scaler width does not match the checkpoint feature count");

    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < f; ++c)
        header.push_back("feature_" + std::to_string(c));

    TimeSeriesFrame source;
    try {
        source = load_csv(source_csv, opts.has_header);
    } catch (const EmptyInput&) {
        std::cerr << "warning: window source is empty, writing an empty sample file\n";
        write_csv(out_path, Matrix(0, f), header);
        return 0;
    }
    if (source.features() != f)
        throw ShapeMismatch("window source has " + std::to_string(source.features()) +
                            " features, checkpoint expects " + std::to_string(f));
    if (source.feature_names.size() == static_cast<std::size_t>(f) && opts.has_header)
        header = source.feature_names;
    if (source.rows() < w) {
        std::cerr << "warning: window source has " << source.rows() << " rows, need at least "
                  << w << "; writing an empty sample file\n";
        write_csv(out_path, Matrix(0, f), header);
        return 0;
    }

    auto scaled = apply_scaler(source, scaler);
    const Eigen::Index blocks = source.rows() - w + 1;
    Matrix all(blocks * opts.samples, f);
    for (Eigen::Index i = 0; i < blocks; ++i) {
        Matrix draws = sample_forecasts(gen.model, scaled.values.middleRows(i, w), opts.samples,
                                        mix_seed(opts.seed, static_cast<std::uint64_t>(i)));
        all.middleRows(i * opts.samples, opts.samples) = invert_scaler_rows(draws, scaler);
    }
    write_csv(out_path, all, header);

    if (!opts.truth_out.empty()) {
        const Eigen::Index targets = source.rows() - w; // aligned targets for the first blocks
        write_csv(opts.truth_out, source.values.bottomRows(targets), header);
    }
    return blocks;
}

struct PlotOptions {
    std::vector<Eigen::Index> features; // empty = feature 0
    Eigen::Index samples_per_window = 0; // 0 = infer from the truth file
    bool has_header = true;
};

// One SVG per selected feature; multi-feature selections suffix the path.
inline std::vector<std::string> cmd_plot(const std::string& samples_csv,
                                         const std::string& truth_csv,
                                         const std::string& out_path, const PlotOptions& opts) {
    auto samples = load_csv(samples_csv, opts.has_header);
    auto truth = load_csv(truth_csv, opts.has_header);
    if (samples.features() != truth.features())
        throw ParseError("sample and ground-truth files disagree on feature count");

    Eigen::Index n = opts.samples_per_window;
    if (n < 1) {
        const Eigen::Index rows = samples.rows(), r = truth.rows();
        if (r > 0 && rows % r == 0)
            n = rows / r;
        else if (rows % (r + 1) == 0)
            n = rows / (r + 1);
        else
            throw ParseError("cannot infer samples-per-window; pass it explicitly");
    }

    std::vector<Eigen::Index> features = opts.features;
    if (features.empty())
        features = {0};

    namespace fs = std::filesystem;
    std::vector<std::string> written;
    for (Eigen::Index feat : features) {
        auto data = fan_chart_data(samples.values, n, truth.values, feat);
        std::string path = out_path;
        if (features.size() > 1) {
            fs::path p(out_path);
            const std::string ext = p.extension().string();
            path = (p.parent_path() / (p.stem().string() + "_f" + std::to_string(feat) + ext))
                       .string();
        }
        const std::string name = feat < static_cast<Eigen::Index>(samples.feature_names.size())
                                     ? samples.feature_names[static_cast<std::size_t>(feat)]
                                     : ("feature_" + std::to_string(feat));
        write_fan_chart_svg(path, data, "forecast quantiles: " + name);
        written.push_back(path);
    }
    return written;
}

// Scores an existing checkpoint (deterministic or generator) on the test
// split of the configured dataset, in original units.
inline std::string cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint,
                                Eigen::Index n_samples, const std::string& out_file) {
    cfg.split.validate();
    if (!std::filesystem::exists(cfg.dataset.path))
        throw IoError("dataset not found: " + cfg.dataset.path);

    auto data = prepare_data(cfg);
    const std::string kind = peek_checkpoint_kind(checkpoint);
    nlohmann::ordered_json out;
    if (kind == "deterministic") {
        auto det = load_deterministic_checkpoint(checkpoint);
        auto test_ws = make_windows(data.test_scaled, det.model.spec().window_size);
        out = metrics_to_json(evaluate_point(det.model, test_ws, &data.scaler));
    } else if (kind == "generator") {
        auto gen = load_generator_checkpoint(checkpoint);
        auto test_ws = make_windows(data.test_scaled, gen.model.spec().base.window_size);
        out = metrics_to_json(evaluate_probabilistic(gen.model, test_ws, n_samples,
                                                     mix_seed(cfg.seed, 0xE7A1ull),
                                                     &data.scaler));
    } else {
        throw CheckpointMismatch("checkpoint mismatch: cannot evaluate kind '" + kind + "'");
    }
    save_metrics(out_file, out);
    return out_file;
}

} // namespace probcast
