#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "probcast/search.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace probcast;
using Catch::Approx;

namespace {

SearchSpace window_only_space() {
    SearchSpace space;
    space.genes = {{"window_size", 1, 64}};
    return space;
}

double window_distance_fitness(const std::vector<int>& genome, std::uint64_t) {
    return std::abs(genome[0] - 12);
}

} // namespace

TEST_CASE("search space validation and lookup") {
    SearchSpace space;
    CHECK_THROWS_AS(space.validate(), InvalidSpace);
    space.genes = {{"a", 5, 3}};
    CHECK_THROWS_AS(space.validate(), InvalidSpace);
    space.genes = {{"a", 1, 4}, {"b", 2, 2}};
    CHECK_NOTHROW(space.validate());
    CHECK(space.index_of("b") == 1);
    CHECK_THROWS_AS(space.index_of("c"), InvalidSpace);
    CHECK(space.contains({2, 2}));
    CHECK_FALSE(space.contains({5, 2}));
    CHECK_FALSE(space.contains({2}));
}

TEST_CASE("degenerate GA returns the sole genome with its fitness") {
    GAConfig cfg;
    cfg.population_size = 1;
    cfg.generations = 1;
    cfg.mutation_rate = 0.0;
    cfg.crossover_rate = 0.0;
    cfg.elitism_count = 0;
    cfg.seed = 5;
    auto result = ga_search(window_only_space(), window_distance_fitness, cfg);
    REQUIRE(result.history.generations.size() == 1);
    REQUIRE(result.best.fitness.has_value());
    REQUIRE(*result.best.fitness ==
            window_distance_fitness(result.best.genome, 0));
    REQUIRE_FALSE(result.budget_exhausted);
}

TEST_CASE("GA recovers the brute-force optimum of |w - 12|") {
    // independent oracle: enumerate the 64-point space
    int brute_best = 1;
    for (int w = 1; w <= 64; ++w)
        if (std::abs(w - 12) < std::abs(brute_best - 12))
            brute_best = w;
    REQUIRE(brute_best == 12);

    GAConfig cfg;
    cfg.population_size = 20;
    cfg.generations = 30;
    cfg.seed = 2024;
    auto result = ga_search(window_only_space(), window_distance_fitness, cfg);
    REQUIRE(result.best.genome[0] == brute_best);
    REQUIRE(*result.best.fitness == 0.0);
}

TEST_CASE("elitism keeps the best-fitness trajectory non-increasing") {
    for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
        GAConfig cfg;
        cfg.population_size = 12;
        cfg.generations = 15;
        cfg.elitism_count = 1;
        cfg.seed = seed;
        auto result = ga_search(window_only_space(), window_distance_fitness, cfg);
        double prev = std::numeric_limits<double>::infinity();
        for (const auto& rec : result.history.generations) {
            const double best = *rec.population[rec.best_index].fitness;
            REQUIRE(best <= prev);
            prev = best;
        }
    }
}

TEST_CASE("every recorded genome respects the bounds") {
    SearchSpace space;
    space.genes = {{"window_size", 2, 9}, {"gru_cells", 4, 31}};
    GAConfig cfg;
    cfg.population_size = 10;
    cfg.generations = 12;
    cfg.mutation_rate = 0.6;
    cfg.seed = 17;
    auto fitness = [](const std::vector<int>& g, std::uint64_t) {
        return static_cast<double>(g[0] + g[1]);
    };
    auto result = ga_search(space, fitness, cfg);
    for (const auto& rec : result.history.generations)
        for (const auto& ind : rec.population)
            REQUIRE(space.contains(ind.genome));
}

TEST_CASE("search trajectory is reproducible for a fixed seed") {
    GAConfig cfg;
    cfg.population_size = 8;
    cfg.generations = 6;
    cfg.seed = 31;
    auto a = ga_search(window_only_space(), window_distance_fitness, cfg);
    auto b = ga_search(window_only_space(), window_distance_fitness, cfg);
    REQUIRE(search_history_to_json(a.history).dump() ==
            search_history_to_json(b.history).dump());
}

TEST_CASE("fitness budget stops the search and flags the result") {
    GAConfig cfg;
    cfg.population_size = 10;
    cfg.generations = 50;
    cfg.fitness_budget = 23;
    cfg.seed = 37;
    auto result = ga_search(window_only_space(), window_distance_fitness, cfg);
    REQUIRE(result.budget_exhausted);
    REQUIRE(result.history.evals_used <= 23);
    REQUIRE(result.best.fitness.has_value()); // best-so-far still returned
}

TEST_CASE("evaluations never exceed population x generations") {
    GAConfig cfg;
    cfg.population_size = 9;
    cfg.generations = 7;
    cfg.seed = 41;
    auto result = ga_search(window_only_space(), window_distance_fitness, cfg);
    REQUIRE(result.history.evals_used <= 9 * 7);
}

TEST_CASE("lineage records parents and mutations") {
    GAConfig cfg;
    cfg.population_size = 8;
    cfg.generations = 4;
    cfg.mutation_rate = 0.9;
    cfg.seed = 43;
    auto result = ga_search(window_only_space(), window_distance_fitness, cfg);
    bool saw_parent = false, saw_mutation = false;
    for (std::size_t g = 1; g < result.history.generations.size(); ++g)
        for (const auto& ind : result.history.generations[g].population) {
            if (!ind.parent_ids.empty())
                saw_parent = true;
            if (!ind.mutated_genes.empty())
                saw_mutation = true;
        }
    REQUIRE(saw_parent);
    REQUIRE(saw_mutation);
}

TEST_CASE("history round-trips through its file and resumes exactly") {
    testutil::TempDir dir;
    GAConfig full;
    full.population_size = 10;
    full.generations = 8;
    full.seed = 47;
    auto oneshot = ga_search(window_only_space(), window_distance_fitness, full);

    GAConfig first_half = full;
    first_half.generations = 4;
    auto part = ga_search(window_only_space(), window_distance_fitness, first_half);
    save_search_history(dir.file("ga.json"), part.history);
    auto loaded = load_search_history(dir.file("ga.json"));

    auto resumed = ga_search(window_only_space(), window_distance_fitness, full, &loaded);
    REQUIRE(search_history_to_json(resumed.history).dump() ==
            search_history_to_json(oneshot.history).dump());
    REQUIRE(resumed.best.genome == oneshot.best.genome);

    CHECK_THROWS_AS(load_search_history(dir.file("missing.json")), IoError);
}

TEST_CASE("fitness_deterministic decodes Table-style genomes") {
    SearchSpace space;
    space.genes = {{"window_size", 1, 200}, {"gru_layers", 1, 4}, {"gru_cells", 1, 160}};
    REQUIRE(space.contains({174, 1, 119})); // the electricity generator optimum fits

    // constant training series: any genome trains to near-zero validation MAE
    TimeSeriesFrame constant;
    constant.values = Matrix::Zero(140, 1);
    constant.feature_names = {"c"};
    auto splits = chronological_split(constant, SplitSpec{});

    DeterministicFitnessContext ctx;
    ctx.train = &splits.train;
    ctx.valid = &splits.valid;
    ctx.train_cfg.batch_size = 16;
    ctx.train_cfg.max_epochs = 40;
    ctx.train_cfg.patience = 40;
    ctx.train_cfg.lr_deterministic = 3e-3;

    SearchSpace tiny;
    tiny.genes = {{"window_size", 2, 4}, {"gru_layers", 1, 1}, {"gru_cells", 3, 6}};
    const double fit = fitness_deterministic({3, 1, 4}, tiny, ctx, 51);
    REQUIRE(fit < 0.05);

    CHECK_THROWS_AS(fitness_deterministic({99, 1, 4}, tiny, ctx, 51), InvalidSpace);

    // deterministic given (genome, seed)
    REQUIRE(fitness_deterministic({3, 1, 4}, tiny, ctx, 51) == fit);
}

TEST_CASE("fitness_discriminator decodes and evaluates reproducibly") {
    SearchSpace space;
    space.genes = {{"disc_gru_layers", 1, 4}, {"disc_gru_cells", 1, 160}};
    REQUIRE(space.contains({3, 146})); // electricity optimum representable
    REQUIRE(space.contains({1, 149})); // exchange-rate optimum representable

    auto frame = synthetic::ar1_gaussian(160, 0.8, 0.5, 53);
    auto splits = chronological_split(frame, SplitSpec{});
    auto scaler = fit_scaler(splits.train);
    auto train_scaled = apply_scaler(splits.train, scaler);
    auto valid_scaled = apply_scaler(splits.valid, scaler);

    DiscriminatorFitnessContext ctx;
    ctx.train = &train_scaled;
    ctx.valid = &valid_scaled;
    ctx.generator_spec.base = make_deterministic_spec(3, 1, 4, 1);
    ctx.generator_spec.noise_size = 3;
    ctx.generator_spec.mlp_extension_widths = {8, 1};
    ctx.train_cfg.batch_size = 32;
    ctx.train_cfg.max_epochs = 2;
    ctx.train_cfg.patience = 2;
    ctx.train_cfg.adam_beta1 = 0.5;
    ctx.train_cfg.eval_samples_per_window = 8;

    SearchSpace tiny;
    tiny.genes = {{"disc_gru_layers", 1, 2}, {"disc_gru_cells", 3, 6}};
    const double a = fitness_discriminator({1, 4}, tiny, ctx, 57);
    const double b = fitness_discriminator({1, 4}, tiny, ctx, 57);
    REQUIRE(std::isfinite(a));
    REQUIRE(a == b);
}
