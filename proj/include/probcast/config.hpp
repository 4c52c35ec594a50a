#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probcast/dataset.hpp"
#include "probcast/errors.hpp"
#include "probcast/search.hpp"
#include "probcast/training.hpp"

namespace probcast {

// Experiment configuration: a single structured file drives the whole
// pipeline; every field can be overridden with --set dotted.path=value.

struct DatasetConfig {
    std::string path;
    bool has_header = false;
    std::string sample_rate = "unknown";
};

struct ExplicitDetSpec {
    Eigen::Index window_size = 0;
    Eigen::Index gru_layers = 1;
    Eigen::Index gru_cells = 0;
    Eigen::Index dense_hidden = 0; // 0 = default (= cells)
};

struct ExplicitDiscSpec {
    Eigen::Index gru_layers = 1;
    Eigen::Index gru_cells = 0;
    Eigen::Index dense_hidden = 0;
};

struct DetPhaseConfig {
    std::optional<ExplicitDetSpec> spec;
    std::optional<SearchSpace> search; // genes: window_size, gru_layers, gru_cells
    TrainConfig train;
    TrainConfig search_train; // reduced budget used inside fitness evaluations
    GAConfig ga;
    Eigen::Index max_search_windows = 0;
};

struct GanPhaseConfig {
    Eigen::Index noise_size = 0;          // 0 = default to gru_cells
    Eigen::Index mlp_extension_hidden = 0; // 0 = default to 2*gru_cells
    bool copy_gru_weights = true;
    std::optional<ExplicitDiscSpec> disc_spec;
    std::optional<SearchSpace> disc_search; // genes: disc_gru_layers, disc_gru_cells
    TrainConfig train;
    TrainConfig search_train;
    GAConfig ga;
    Eigen::Index max_search_windows = 0;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir;
    DatasetConfig dataset;
    SplitSpec split;
    DetPhaseConfig det;
    GanPhaseConfig gan;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object())
        throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const std::exception&) {
        throw ConfigError("bad value for '" + key + "'");
    }
}

inline TrainConfig parse_train(const nlohmann::json& j, const TrainConfig& defaults,
                               const std::string& where) {
    check_keys(j,
               {"batch_size", "max_epochs", "learning_rate", "lr_generator", "lr_discriminator",
                "disc_steps_per_gen_step", "patience", "eval_samples_per_window", "adam_beta1",
                "adam_beta2", "saturating_generator_loss", "crps_full_pairwise"},
               where);
    TrainConfig cfg = defaults;
    cfg.batch_size = get_or<Eigen::Index>(j, "batch_size", cfg.batch_size);
    cfg.max_epochs = get_or<Eigen::Index>(j, "max_epochs", cfg.max_epochs);
    cfg.lr_deterministic = get_or<double>(j, "learning_rate", cfg.lr_deterministic);
    cfg.lr_generator = get_or<double>(j, "lr_generator", cfg.lr_generator);
    cfg.lr_discriminator = get_or<double>(j, "lr_discriminator", cfg.lr_discriminator);
    cfg.disc_steps_per_gen_step =
        get_or<Eigen::Index>(j, "disc_steps_per_gen_step", cfg.disc_steps_per_gen_step);
    cfg.patience = get_or<Eigen::Index>(j, "patience", cfg.patience);
    cfg.eval_samples_per_window =
        get_or<Eigen::Index>(j, "eval_samples_per_window", cfg.eval_samples_per_window);
    cfg.adam_beta1 = get_or<double>(j, "adam_beta1", cfg.adam_beta1);
    cfg.adam_beta2 = get_or<double>(j, "adam_beta2", cfg.adam_beta2);
    cfg.saturating_generator_loss =
        get_or<bool>(j, "saturating_generator_loss", cfg.saturating_generator_loss);
    if (get_or<bool>(j, "crps_full_pairwise", defaults.crps_pairing == CrpsPairing::FullPairwise))
        cfg.crps_pairing = CrpsPairing::FullPairwise;
    return cfg;
}

inline GAConfig parse_ga(const nlohmann::json& j, const std::string& where) {
    check_keys(j,
               {"population_size", "generations", "tournament_size", "crossover_rate",
                "mutation_rate", "elitism_count", "fitness_budget"},
               where);
    GAConfig cfg;
    cfg.population_size = get_or<int>(j, "population_size", cfg.population_size);
    cfg.generations = get_or<int>(j, "generations", cfg.generations);
    cfg.tournament_size = get_or<int>(j, "tournament_size", cfg.tournament_size);
    cfg.crossover_rate = get_or<double>(j, "crossover_rate", cfg.crossover_rate);
    cfg.mutation_rate = get_or<double>(j, "mutation_rate", cfg.mutation_rate);
    cfg.elitism_count = get_or<int>(j, "elitism_count", cfg.elitism_count);
    if (j.contains("fitness_budget") && !j.at("fitness_budget").is_null())
        cfg.fitness_budget = j.at("fitness_budget").get<std::int64_t>();
    return cfg;
}

inline GeneRange parse_range(const nlohmann::json& j, const std::string& name,
                             const std::string& where) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(where + "." + name + ": expected [lo, hi]");
    return GeneRange{name, j.at(0).get<int>(), j.at(1).get<int>()};
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    detail::check_keys(j, {"seed", "out_dir", "dataset", "split", "deterministic", "gan"},
                       "config");
    ExperimentConfig cfg;
    cfg.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    cfg.out_dir = detail::get_or<std::string>(j, "out_dir", "");

    if (!j.contains("dataset"))
        throw ConfigError("config: missing 'dataset'");
    const auto& jd = j.at("dataset");
    detail::check_keys(jd, {"path", "has_header", "sample_rate"}, "dataset");
    cfg.dataset.path = detail::get_or<std::string>(jd, "path", "");
    cfg.dataset.has_header = detail::get_or<bool>(jd, "has_header", false);
    cfg.dataset.sample_rate = detail::get_or<std::string>(jd, "sample_rate", "unknown");

    if (j.contains("split")) {
        const auto& js = j.at("split");
        detail::check_keys(js, {"train", "valid", "test"}, "split");
        cfg.split.train_frac = detail::get_or<double>(js, "train", 0.75);
        cfg.split.valid_frac = detail::get_or<double>(js, "valid", 0.05);
        cfg.split.test_frac = detail::get_or<double>(js, "test", 0.20);
    }

    // deterministic phase
    {
        cfg.det.train.adam_beta1 = 0.9;
        cfg.det.search_train.max_epochs = 30;
        cfg.det.search_train.patience = 10;
        if (j.contains("deterministic")) {
            const auto& jp = j.at("deterministic");
            detail::check_keys(jp, {"spec", "search", "train", "search_train", "ga",
                                    "max_search_windows"},
                               "deterministic");
            if (jp.contains("spec")) {
                const auto& sp = jp.at("spec");
                detail::check_keys(sp, {"window_size", "gru_layers", "gru_cells", "dense_hidden"},
                                   "deterministic.spec");
                ExplicitDetSpec es;
                es.window_size = detail::get_or<Eigen::Index>(sp, "window_size", 0);
                es.gru_layers = detail::get_or<Eigen::Index>(sp, "gru_layers", 1);
                es.gru_cells = detail::get_or<Eigen::Index>(sp, "gru_cells", 0);
                es.dense_hidden = detail::get_or<Eigen::Index>(sp, "dense_hidden", 0);
                cfg.det.spec = es;
            }
            if (jp.contains("search")) {
                const auto& se = jp.at("search");
                detail::check_keys(se, {"window_size", "gru_layers", "gru_cells"},
                                   "deterministic.search");
                SearchSpace space;
                space.genes.push_back(detail::parse_range(
                    se.at("window_size"), "window_size", "deterministic.search"));
                space.genes.push_back(detail::parse_range(
                    se.contains("gru_layers") ? se.at("gru_layers") : nlohmann::json{1, 1},
                    "gru_layers", "deterministic.search"));
                space.genes.push_back(detail::parse_range(
                    se.at("gru_cells"), "gru_cells", "deterministic.search"));
                cfg.det.search = std::move(space);
            }
            if (jp.contains("train"))
                cfg.det.train = detail::parse_train(jp.at("train"), cfg.det.train,
                                                    "deterministic.train");
            TrainConfig sdefaults = cfg.det.train;
            sdefaults.max_epochs = 30;
            sdefaults.patience = 10;
            cfg.det.search_train = sdefaults;
            if (jp.contains("search_train"))
                cfg.det.search_train = detail::parse_train(jp.at("search_train"), sdefaults,
                                                           "deterministic.search_train");
            if (jp.contains("ga"))
                cfg.det.ga = detail::parse_ga(jp.at("ga"), "deterministic.ga");
            cfg.det.max_search_windows =
                detail::get_or<Eigen::Index>(jp, "max_search_windows", 0);
        }
    }

    // gan phase
    {
        cfg.gan.train.adam_beta1 = 0.5;
        if (j.contains("gan")) {
            const auto& jp = j.at("gan");
            detail::check_keys(jp,
                               {"noise_size", "mlp_extension_hidden", "copy_gru_weights",
                                "discriminator", "train", "search_train", "ga",
                                "max_search_windows"},
                               "gan");
            cfg.gan.noise_size = detail::get_or<Eigen::Index>(jp, "noise_size", 0);
            cfg.gan.mlp_extension_hidden =
                detail::get_or<Eigen::Index>(jp, "mlp_extension_hidden", 0);
            cfg.gan.copy_gru_weights = detail::get_or<bool>(jp, "copy_gru_weights", true);
            if (jp.contains("discriminator")) {
                const auto& jd2 = jp.at("discriminator");
                detail::check_keys(jd2, {"spec", "search"}, "gan.discriminator");
                if (jd2.contains("spec")) {
                    const auto& sp = jd2.at("spec");
                    detail::check_keys(sp, {"gru_layers", "gru_cells", "dense_hidden"},
                                       "gan.discriminator.spec");
                    ExplicitDiscSpec es;
                    es.gru_layers = detail::get_or<Eigen::Index>(sp, "gru_layers", 1);
                    es.gru_cells = detail::get_or<Eigen::Index>(sp, "gru_cells", 0);
                    es.dense_hidden = detail::get_or<Eigen::Index>(sp, "dense_hidden", 0);
                    cfg.gan.disc_spec = es;
                }
                if (jd2.contains("search")) {
                    const auto& se = jd2.at("search");
                    detail::check_keys(se, {"gru_layers", "gru_cells"},
                                       "gan.discriminator.search");
                    SearchSpace space;
                    space.genes.push_back(detail::parse_range(
                        se.at("gru_layers"), "disc_gru_layers", "gan.discriminator.search"));
                    space.genes.push_back(detail::parse_range(
                        se.at("gru_cells"), "disc_gru_cells", "gan.discriminator.search"));
                    cfg.gan.disc_search = std::move(space);
                }
            }
            if (jp.contains("train"))
                cfg.gan.train = detail::parse_train(jp.at("train"), cfg.gan.train, "gan.train");
            TrainConfig sdefaults = cfg.gan.train;
            sdefaults.max_epochs = 20;
            sdefaults.patience = 8;
            cfg.gan.search_train = sdefaults;
            if (jp.contains("search_train"))
                cfg.gan.search_train =
                    detail::parse_train(jp.at("search_train"), sdefaults, "gan.search_train");
            if (jp.contains("ga"))
                cfg.gan.ga = detail::parse_ga(jp.at("ga"), "gan.ga");
            cfg.gan.max_search_windows =
                detail::get_or<Eigen::Index>(jp, "max_search_windows", 0);
        } else {
            cfg.gan.search_train = cfg.gan.train;
            cfg.gan.search_train.max_epochs = 20;
            cfg.gan.search_train.patience = 8;
        }
    }

    return cfg;
}

// Typed value if it parses as JSON (numbers, booleans), else a string.
inline nlohmann::json parse_override_value(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const std::exception&) {
        return nlohmann::json(text);
    }
}

// --set dotted.path=value on the raw document, before parsing.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects dotted.path=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    nlohmann::json* at = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty())
            throw ConfigError("--set: empty path segment in '" + path + "'");
        if (dot == std::string::npos) {
            (*at)[key] = parse_override_value(value);
            return;
        }
        if (!at->contains(key) || !(*at)[key].is_object())
            (*at)[key] = nlohmann::json::object();
        at = &(*at)[key];
        start = dot + 1;
    }
}

inline nlohmann::json load_config_json(const std::string& path,
                                       const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& o : overrides)
        apply_override(j, o);
    return j;
}

// Rejects anything that would fail mid-run: phase ambiguity, bad ranges,
// missing dataset, unwritable output.
inline void validate_config(const ExperimentConfig& cfg, bool need_det_phase,
                            bool need_gan_phase) {
    cfg.split.validate();
    if (cfg.dataset.path.empty())
        throw ConfigError("dataset.path is required");
    if (!std::filesystem::exists(cfg.dataset.path))
        throw IoError("dataset not found: " + cfg.dataset.path);
    if (cfg.out_dir.empty())
        throw ConfigError("out_dir is required (or pass --out)");

    if (need_det_phase) {
        const bool has_spec = cfg.det.spec.has_value();
        const bool has_search = cfg.det.search.has_value();
        if (has_spec == has_search)
            throw ConfigError(
                "deterministic phase needs exactly one of 'spec' or 'search'");
        if (has_spec && (cfg.det.spec->window_size < 1 || cfg.det.spec->gru_cells < 1))
            throw ConfigError("deterministic.spec: window_size and gru_cells must be >= 1");
        if (has_search) {
            cfg.det.search->validate();
            cfg.det.ga.validate();
            cfg.det.search_train.validate();
        }
        cfg.det.train.validate();
    }
    if (need_gan_phase) {
        const bool has_spec = cfg.gan.disc_spec.has_value();
        const bool has_search = cfg.gan.disc_search.has_value();
        if (has_spec == has_search)
            throw ConfigError(
                "gan.discriminator needs exactly one of 'spec' or 'search'");
        if (has_spec && cfg.gan.disc_spec->gru_cells < 1)
            throw ConfigError("gan.discriminator.spec: gru_cells must be >= 1");
        if (has_search) {
            cfg.gan.disc_search->validate();
            cfg.gan.ga.validate();
            cfg.gan.search_train.validate();
        }
        cfg.gan.train.validate();
        if (cfg.gan.noise_size < 0)
            throw ConfigError("gan.noise_size must be >= 0 (0 = default)");
    }
}

} // namespace probcast
