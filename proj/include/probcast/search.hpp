#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probcast/common.hpp"
#include "probcast/errors.hpp"
#include "probcast/training.hpp"

namespace probcast {

struct GeneRange {
    std::string name;
    int lo = 0;
    int hi = 0;
};

struct SearchSpace {
    std::vector<GeneRange> genes;

    void validate() const {
        if (genes.empty())
            throw InvalidSpace("search space has no genes");
        for (const auto& g : genes)
            if (g.lo > g.hi)
                throw InvalidSpace("gene '" + g.name + "': lower bound exceeds upper bound");
    }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < genes.size(); ++i)
            if (genes[i].name == name)
                return i;
        throw InvalidSpace("search space has no gene named '" + name + "'");
    }

    bool contains(const std::vector<int>& genome) const {
        if (genome.size() != genes.size())
            return false;
        for (std::size_t i = 0; i < genes.size(); ++i)
            if (genome[i] < genes[i].lo || genome[i] > genes[i].hi)
                return false;
        return true;
    }
};

struct Individual {
    std::vector<int> genome;
    std::optional<double> fitness;
    std::int64_t id = -1;
    std::vector<std::int64_t> parent_ids;
    std::vector<int> mutated_genes;
};

struct GAConfig {
    int population_size = 16;
    int generations = 10;
    int tournament_size = 3;
    double crossover_rate = 0.7;
    double mutation_rate = 0.15;
    int elitism_count = 1;
    std::uint64_t seed = 0;
    std::optional<std::int64_t> fitness_budget;

    void validate() const {
        if (population_size < 1 || generations < 1 || tournament_size < 1)
            throw InvalidSpec("GA counts must be >= 1");
        if (elitism_count < 0 || elitism_count >= population_size)
            throw InvalidSpec("elitism_count must be in [0, population_size)");
        if (crossover_rate < 0 || crossover_rate > 1 || mutation_rate < 0 || mutation_rate > 1)
            throw InvalidSpec("GA rates must lie in [0, 1]");
        if (fitness_budget && *fitness_budget < 1)
            throw InvalidSpec("fitness_budget must be >= 1 when set");
    }
};

struct GenerationRecord {
    std::vector<Individual> population;
    std::size_t best_index = 0;
};

struct SearchHistory {
    std::vector<GenerationRecord> generations;
    std::string rng_state;      // serialized engine, resumable
    std::int64_t next_id = 0;
    std::int64_t evals_used = 0;
    bool budget_exhausted = false;
};

struct SearchResult {
    Individual best;
    SearchHistory history;
    bool budget_exhausted = false;
};

// fitness(genome, seed): deterministic given (genome, seed); lower is better.
using FitnessFn = std::function<double(const std::vector<int>&, std::uint64_t)>;

namespace detail {

inline std::size_t tournament_pick(const std::vector<Individual>& pop, int k, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
    std::size_t best = pick(rng);
    for (int i = 1; i < k; ++i) {
        const std::size_t c = pick(rng);
        if (*pop[c].fitness < *pop[best].fitness)
            best = c;
    }
    return best;
}

} // namespace detail

// Generational GA: tournament selection, uniform crossover, per-gene
// uniform-reset mutation, elitism. Returns the lowest-fitness individual ever
// evaluated. Pass a prior history to continue from its last completed
// generation (config.generations is the total, not the increment).
inline SearchResult ga_search(const SearchSpace& space, const FitnessFn& fitness,
                              const GAConfig& config, const SearchHistory* resume = nullptr) {
    space.validate();
    config.validate();

    Rng rng(config.seed);
    SearchHistory history;
    std::vector<Individual> population;
    std::size_t start_gen = 0;

    if (resume && !resume->generations.empty()) {
        history = *resume;
        std::istringstream in(history.rng_state);
        in >> rng;
        if (!in)
            throw ParseError("search history: bad rng state");
        population = history.generations.back().population;
        start_gen = history.generations.size();
        // the recorded generation was bred already? No: records hold evaluated
        // populations, so breed from the last one before continuing.
    } else {
        for (int i = 0; i < config.population_size; ++i) {
            Individual ind;
            ind.id = history.next_id++;
            for (const auto& g : space.genes) {
                std::uniform_int_distribution<int> u(g.lo, g.hi);
                ind.genome.push_back(u(rng));
            }
            population.push_back(std::move(ind));
        }
    }

    Individual best_ever;
    best_ever.fitness = std::numeric_limits<double>::infinity();
    for (const auto& rec : history.generations)
        if (rec.population[rec.best_index].fitness < best_ever.fitness)
            best_ever = rec.population[rec.best_index];

    auto breed = [&](const std::vector<Individual>& pop) {
        std::vector<Individual> next;
        // elites: best elitism_count unchanged (fitness kept, not re-evaluated)
        std::vector<std::size_t> order(pop.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return *pop[a].fitness < *pop[b].fitness;
        });
        for (int e = 0; e < config.elitism_count; ++e)
            next.push_back(pop[order[static_cast<std::size_t>(e)]]);

        std::uniform_real_distribution<double> coin(0.0, 1.0);
        while (static_cast<int>(next.size()) < config.population_size) {
            const std::size_t pa = detail::tournament_pick(pop, config.tournament_size, rng);
            Individual child;
            child.id = history.next_id++;
            if (coin(rng) < config.crossover_rate) {
                const std::size_t pb = detail::tournament_pick(pop, config.tournament_size, rng);
                child.parent_ids = {pop[pa].id, pop[pb].id};
                child.genome.resize(space.genes.size());
                for (std::size_t gi = 0; gi < space.genes.size(); ++gi)
                    child.genome[gi] =
                        coin(rng) < 0.5 ? pop[pa].genome[gi] : pop[pb].genome[gi];
            } else {
                child.parent_ids = {pop[pa].id};
                child.genome = pop[pa].genome;
            }
            for (std::size_t gi = 0; gi < space.genes.size(); ++gi) {
                if (coin(rng) < config.mutation_rate) {
                    std::uniform_int_distribution<int> u(space.genes[gi].lo, space.genes[gi].hi);
                    child.genome[gi] = u(rng);
                    child.mutated_genes.push_back(static_cast<int>(gi));
                }
            }
            next.push_back(std::move(child));
        }
        return next;
    };

    for (std::size_t gen = start_gen; gen < static_cast<std::size_t>(config.generations); ++gen) {
        if (gen > start_gen || (resume && !resume->generations.empty()))
            population = breed(population);

        bool stopped = false;
        for (std::size_t k = 0; k < population.size(); ++k) {
            auto& ind = population[k];
            if (ind.fitness)
                continue; // carried elite
            if (!space.contains(ind.genome))
                throw InvalidSpace("genome left the search space");
            if (config.fitness_budget && history.evals_used >= *config.fitness_budget) {
                history.budget_exhausted = true;
                stopped = true;
                break;
            }
            const std::uint64_t eval_seed =
                mix_seed(config.seed, static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(k));
            ind.fitness = fitness(ind.genome, eval_seed);
            ++history.evals_used;
        }
        if (stopped) {
            // drop unevaluated tail and record what completed
            std::vector<Individual> done;
            for (auto& ind : population)
                if (ind.fitness)
                    done.push_back(ind);
            if (!done.empty()) {
                GenerationRecord rec;
                rec.best_index = 0;
                for (std::size_t k = 1; k < done.size(); ++k)
                    if (*done[k].fitness < *done[rec.best_index].fitness)
                        rec.best_index = k;
                if (*done[rec.best_index].fitness < *best_ever.fitness)
                    best_ever = done[rec.best_index];
                rec.population = std::move(done);
                history.generations.push_back(std::move(rec));
            }
            break;
        }

        GenerationRecord rec;
        rec.population = population;
        rec.best_index = 0;
        for (std::size_t k = 1; k < population.size(); ++k)
            if (*population[k].fitness < *population[rec.best_index].fitness)
                rec.best_index = k;
        if (*population[rec.best_index].fitness < *best_ever.fitness)
            best_ever = population[rec.best_index];
        history.generations.push_back(std::move(rec));
    }

    std::ostringstream out;
    out << rng;
    history.rng_state = out.str();

    SearchResult result;
    result.best = best_ever;
    result.history = std::move(history);
    result.budget_exhausted = result.history.budget_exhausted;
    return result;
}

// ---- history (de)serialization: resumable structured text ----

inline nlohmann::ordered_json search_history_to_json(const SearchHistory& h) {
    nlohmann::ordered_json j;
    j["format"] = "probcast-search-history";
    j["version"] = 1;
    j["evals_used"] = h.evals_used;
    j["next_id"] = h.next_id;
    j["budget_exhausted"] = h.budget_exhausted;
    j["rng_state"] = h.rng_state;
    auto gens = nlohmann::ordered_json::array();
    for (const auto& rec : h.generations) {
        nlohmann::ordered_json g;
        g["best_index"] = rec.best_index;
        auto pop = nlohmann::ordered_json::array();
        for (const auto& ind : rec.population) {
            nlohmann::ordered_json i;
            i["id"] = ind.id;
            i["genome"] = ind.genome;
            i["fitness"] = ind.fitness ? *ind.fitness : std::numeric_limits<double>::quiet_NaN();
            i["parents"] = ind.parent_ids;
            i["mutated_genes"] = ind.mutated_genes;
            pop.push_back(std::move(i));
        }
        g["population"] = std::move(pop);
        gens.push_back(std::move(g));
    }
    j["generations"] = std::move(gens);
    return j;
}

inline SearchHistory search_history_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "probcast-search-history")
        throw ParseError("not a probcast search history");
    SearchHistory h;
    h.evals_used = j.at("evals_used").get<std::int64_t>();
    h.next_id = j.at("next_id").get<std::int64_t>();
    h.budget_exhausted = j.at("budget_exhausted").get<bool>();
    h.rng_state = j.at("rng_state").get<std::string>();
    for (const auto& g : j.at("generations")) {
        GenerationRecord rec;
        rec.best_index = g.at("best_index").get<std::size_t>();
        for (const auto& i : g.at("population")) {
            Individual ind;
            ind.id = i.at("id").get<std::int64_t>();
            ind.genome = i.at("genome").get<std::vector<int>>();
            const double f = i.at("fitness").get<double>();
            if (!std::isnan(f))
                ind.fitness = f;
            ind.parent_ids = i.at("parents").get<std::vector<std::int64_t>>();
            ind.mutated_genes = i.at("mutated_genes").get<std::vector<int>>();
            rec.population.push_back(std::move(ind));
        }
        h.generations.push_back(std::move(rec));
    }
    return h;
}

inline void save_search_history(const std::string& path, const SearchHistory& h) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << search_history_to_json(h).dump(2) << "\n";
}

inline SearchHistory load_search_history(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("search history not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("bad search history: ") + e.what());
    }
    return search_history_from_json(j);
}

// ---- fitness functions for the two search phases ----

struct DeterministicFitnessContext {
    const TimeSeriesFrame* train = nullptr; // scaled splits
    const TimeSeriesFrame* valid = nullptr;
    TrainConfig train_cfg;                   // reduced budget for search
    Eigen::Index max_train_windows = 0;      // 0 = no cap; else use the tail
    Eigen::Index dense_hidden = 0;           // 0 = default (= cells)
};

namespace detail {

inline TimeSeriesFrame tail_rows(const TimeSeriesFrame& frame, Eigen::Index rows) {
    TimeSeriesFrame out;
    out.values = frame.values.bottomRows(rows);
    out.feature_names = frame.feature_names;
    out.sample_rate = frame.sample_rate;
    return out;
}

} // namespace detail

// Decodes (window_size, gru_layers, gru_cells), trains under the reduced
// budget, returns best validation MAE; divergence and infeasible windows map
// to +infinity so the GA simply avoids them.
inline double fitness_deterministic(const std::vector<int>& genome, const SearchSpace& space,
                                    const DeterministicFitnessContext& ctx, std::uint64_t seed) {
    if (!space.contains(genome))
        throw InvalidSpace("genome outside the search space");
    const auto w = static_cast<Eigen::Index>(genome[space.index_of("window_size")]);
    const auto layers = static_cast<Eigen::Index>(genome[space.index_of("gru_layers")]);
    const auto cells = static_cast<Eigen::Index>(genome[space.index_of("gru_cells")]);
    const Eigen::Index f = ctx.train->features();

    try {
        auto spec = make_deterministic_spec(w, layers, cells, f, ctx.dense_hidden);
        TimeSeriesFrame train_frame = *ctx.train;
        if (ctx.max_train_windows > 0 && train_frame.rows() > ctx.max_train_windows + w)
            train_frame = detail::tail_rows(train_frame, ctx.max_train_windows + w);
        auto train_ws = make_windows(train_frame, w);
        auto valid_ws = make_windows(*ctx.valid, w);
        DeterministicModel model(spec, seed);
        TrainConfig cfg = ctx.train_cfg;
        cfg.seed = seed;
        auto report = train_deterministic(model, train_ws, valid_ws, cfg);
        return report.best_epoch >= 0 ? report.best_validation
                                      : std::numeric_limits<double>::infinity();
    } catch (const Diverged&) {
        return std::numeric_limits<double>::infinity();
    } catch (const TooShort&) {
        return std::numeric_limits<double>::infinity();
    }
}

struct DiscriminatorFitnessContext {
    const TimeSeriesFrame* train = nullptr; // scaled splits
    const TimeSeriesFrame* valid = nullptr;
    GeneratorSpec generator_spec;            // frozen topology from phase 1
    const DeterministicModel* warm_start = nullptr; // optional GRU donor
    TrainConfig train_cfg;
    Eigen::Index max_train_windows = 0;
    Eigen::Index dense_hidden = 0;
};

// Decodes (gru_layers, gru_cells) for the discriminator, runs a short
// adversarial training against a fresh generator of the frozen topology,
// returns best validation CRPS*.
inline double fitness_discriminator(const std::vector<int>& genome, const SearchSpace& space,
                                    const DiscriminatorFitnessContext& ctx, std::uint64_t seed) {
    if (!space.contains(genome))
        throw InvalidSpace("genome outside the search space");
    const auto layers = static_cast<Eigen::Index>(genome[space.index_of("disc_gru_layers")]);
    const auto cells = static_cast<Eigen::Index>(genome[space.index_of("disc_gru_cells")]);
    const auto& gspec = ctx.generator_spec;
    const Eigen::Index w = gspec.base.window_size;

    try {
        TimeSeriesFrame train_frame = *ctx.train;
        if (ctx.max_train_windows > 0 && train_frame.rows() > ctx.max_train_windows + w)
            train_frame = detail::tail_rows(train_frame, ctx.max_train_windows + w);
        auto train_ws = make_windows(train_frame, w);
        auto valid_ws = make_windows(*ctx.valid, w);

        GeneratorModel gen(gspec, seed);
        if (ctx.warm_start) {
            auto src = ctx.warm_start->gru().tensors();
            auto dst = gen.gru().tensors();
            for (std::size_t i = 0; i < src.size(); ++i)
                *dst[i] = *src[i];
        }
        DiscriminatorSpec dspec = make_discriminator_spec(w, layers, cells,
                                                          gspec.base.feature_count,
                                                          ctx.dense_hidden);
        DiscriminatorModel disc(dspec, mix_seed(seed, 0xD15Cull));
        TrainConfig cfg = ctx.train_cfg;
        cfg.seed = seed;
        auto report = train_gan(gen, disc, train_ws, valid_ws, cfg);
        return report.best_epoch >= 0 ? report.best_validation
                                      : std::numeric_limits<double>::infinity();
    } catch (const Diverged&) {
        return std::numeric_limits<double>::infinity();
    } catch (const TooShort&) {
        return std::numeric_limits<double>::infinity();
    }
}

} // namespace probcast
