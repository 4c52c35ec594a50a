#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "probcast/pipeline.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace probcast;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string write_text(const testutil::TempDir& dir, const std::string& name,
                       const std::string& body) {
    auto path = dir.file(name);
    std::ofstream out(path);
    out << body;
    return path;
}

// Small AR(1) fixture dataset on disk plus a config JSON pointing at it.
struct Fixture {
    testutil::TempDir dir;
    std::string data_path;
    nlohmann::json config;

    Fixture() {
        auto frame = synthetic::ar1_gaussian(320, 0.8, 0.5, 4242);
        data_path = dir.file("series.csv");
        write_csv(data_path, frame.values, frame.feature_names);
        config = {
            {"seed", 99},
            {"out_dir", dir.file("run_det")},
            {"dataset", {{"path", data_path}, {"has_header", true}}},
            {"deterministic",
             {{"spec", {{"window_size", 4}, {"gru_layers", 1}, {"gru_cells", 5}}},
              {"train",
               {{"batch_size", 32}, {"max_epochs", 6}, {"patience", 6},
                {"learning_rate", 2e-3}}}}},
            {"gan",
             {{"noise_size", 3},
              {"discriminator", {{"spec", {{"gru_layers", 1}, {"gru_cells", 5}}}}},
              {"train",
               {{"batch_size", 32}, {"max_epochs", 3}, {"patience", 3},
                {"eval_samples_per_window", 8}}}}},
        };
    }
};

} // namespace

TEST_CASE("config parsing: defaults, unknown keys, phase exclusivity") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    CHECK(cfg.seed == 99);
    CHECK(cfg.det.spec.has_value());
    CHECK_FALSE(cfg.det.search.has_value());
    CHECK(cfg.det.train.max_epochs == 6);
    CHECK(cfg.gan.train.adam_beta1 == 0.5);      // GAN default
    CHECK(cfg.det.train.adam_beta1 == 0.9);      // deterministic default
    CHECK(cfg.gan.train.eval_samples_per_window == 8);
    CHECK_NOTHROW(validate_config(cfg, true, true));

    auto bad = fx.config;
    bad["deterministic"]["typo_key"] = 1;
    CHECK_THROWS_AS(parse_experiment_config(bad), ConfigError);

    // both spec and search present -> rejected
    auto both = fx.config;
    both["deterministic"]["search"] = {
        {"window_size", {2, 6}}, {"gru_layers", {1, 1}}, {"gru_cells", {3, 6}}};
    CHECK_THROWS_AS(validate_config(parse_experiment_config(both), true, false), ConfigError);

    // neither -> rejected
    auto neither = fx.config;
    neither["deterministic"].erase("spec");
    CHECK_THROWS_AS(validate_config(parse_experiment_config(neither), true, false), ConfigError);
}

TEST_CASE("config overrides via dotted --set paths") {
    Fixture fx;
    auto doc = fx.config;
    apply_override(doc, "seed=123");
    apply_override(doc, "deterministic.train.max_epochs=9");
    apply_override(doc, "dataset.sample_rate=1 hour");
    auto cfg = parse_experiment_config(doc);
    CHECK(cfg.seed == 123);
    CHECK(cfg.det.train.max_epochs == 9);
    CHECK(cfg.dataset.sample_rate == "1 hour");
    CHECK_THROWS_AS(apply_override(doc, "nonsense"), ConfigError);
}

TEST_CASE("missing dataset fails validation up front") {
    Fixture fx;
    auto doc = fx.config;
    doc["dataset"]["path"] = fx.dir.file("nope.csv");
    auto cfg = parse_experiment_config(doc);
    try {
        validate_config(cfg, true, false);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("dataset not found") != std::string::npos);
    }
}

TEST_CASE("cmd_train_det produces checkpoint, report, metrics, manifest") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    const auto run_dir = cmd_train_det(cfg, fx.config);

    REQUIRE(fs::exists(fs::path(run_dir) / artifact::kDetCheckpoint));
    REQUIRE(fs::exists(fs::path(run_dir) / artifact::kScaler));
    REQUIRE(fs::exists(fs::path(run_dir) / artifact::kDetTrainReport));
    REQUIRE(fs::exists(fs::path(run_dir) / artifact::kDetMetrics));
    // explicit spec: search skipped entirely, no GA history
    REQUIRE_FALSE(fs::exists(fs::path(run_dir) / artifact::kDetGaHistory));

    auto manifest = nlohmann::json::parse(slurp((fs::path(run_dir) / "manifest.json").string()));
    CHECK(manifest["status"] == "complete");
    for (const auto& [name, path] : manifest["artifacts"].items())
        CHECK(fs::exists(path.get<std::string>()));

    auto metrics = nlohmann::json::parse(slurp((fs::path(run_dir) / artifact::kDetMetrics).string()));
    CHECK(metrics["units"] == "original");
    CHECK(metrics["crps_overall"] == metrics["mae_overall"]);
}

TEST_CASE("cmd_train_det with a search space writes GA history") {
    Fixture fx;
    auto doc = fx.config;
    doc["deterministic"].erase("spec");
    doc["deterministic"]["search"] = {
        {"window_size", {2, 5}}, {"gru_layers", {1, 1}}, {"gru_cells", {3, 6}}};
    doc["deterministic"]["ga"] = {{"population_size", 3}, {"generations", 2}};
    doc["deterministic"]["search_train"] = {{"max_epochs", 2}, {"patience", 2}};
    doc["out_dir"] = fx.dir.file("run_det_search");
    auto cfg = parse_experiment_config(doc);
    const auto run_dir = cmd_train_det(cfg, doc);
    REQUIRE(fs::exists(fs::path(run_dir) / artifact::kDetGaHistory));
    auto hist = load_search_history((fs::path(run_dir) / artifact::kDetGaHistory).string());
    CHECK(hist.generations.size() == 2);
}

TEST_CASE("cmd_gan trains, reports both models, and is byte-deterministic") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    const auto det_dir = cmd_train_det(cfg, fx.config);

    auto gan_doc = fx.config;
    gan_doc["out_dir"] = fx.dir.file("run_gan");
    auto gan_cfg = parse_experiment_config(gan_doc);
    const auto gan_dir = cmd_gan(gan_cfg, det_dir, gan_doc);

    const auto metrics_path = (fs::path(gan_dir) / artifact::kGanMetrics).string();
    auto metrics = nlohmann::json::parse(slurp(metrics_path));
    REQUIRE(metrics.contains("probcast"));
    REQUIRE(metrics.contains("deterministic"));
    CHECK(metrics["probcast"]["units"] == "original");
    CHECK(metrics["probcast"]["samples_per_window"] == 8);
    CHECK(metrics["deterministic"]["crps_overall"].get<double>() > 0.0);

    const std::string first = slurp(metrics_path);
    // second invocation, same config+seed -> byte-identical metrics
    auto gan_cfg2 = gan_cfg;
    gan_cfg2.out_dir = fx.dir.file("run_gan2");
    const auto gan_dir2 = cmd_gan(gan_cfg2, det_dir, gan_doc);
    const std::string second = slurp((fs::path(gan_dir2) / artifact::kGanMetrics).string());
    REQUIRE(first == second);
}

TEST_CASE("cmd_gan rejects corrupted checkpoints with a checkpoint-mismatch diagnostic") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    auto corrupt = write_text(fx.dir, "corrupt.json", "{\"format\": \"probcast-checkpoint\", ");
    cfg.out_dir = fx.dir.file("run_gan_bad");
    try {
        cmd_gan(cfg, corrupt, fx.config);
        FAIL("expected CheckpointMismatch");
    } catch (const CheckpointMismatch& e) {
        CHECK(std::string(e.what()).find("checkpoint mismatch") != std::string::npos);
    }
}

TEST_CASE("a failed run leaves an incomplete manifest behind") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    const auto det_dir = cmd_train_det(cfg, fx.config);

    // sabotage: dataset with the wrong feature count (2 columns)
    auto frame2 = synthetic::multivariate_ar1(120, 2, 7);
    const auto bad_data = fx.dir.file("two_cols.csv");
    write_csv(bad_data, frame2.values, frame2.feature_names);
    auto gan_cfg = parse_experiment_config(fx.config);
    gan_cfg.dataset.path = bad_data;
    gan_cfg.dataset.has_header = true;
    gan_cfg.out_dir = fx.dir.file("run_gan_fail");
    CHECK_THROWS_AS(cmd_gan(gan_cfg, det_dir, fx.config), CheckpointMismatch);

    auto manifest =
        nlohmann::json::parse(slurp((fs::path(gan_cfg.out_dir) / "manifest.json").string()));
    CHECK(manifest["status"] == "incomplete");
}

TEST_CASE("two commands cannot share an output directory concurrently") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    cfg.out_dir = fx.dir.file("locked_run");
    DirLock hold(cfg.out_dir); // simulates a concurrent run holding the lock
    CHECK_THROWS_AS(cmd_train_det(cfg, fx.config), LockError);
}

TEST_CASE("cmd_forecast writes n rows per window and aligned truth") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    const auto det_dir = cmd_train_det(cfg, fx.config);
    auto gan_doc = fx.config;
    gan_doc["out_dir"] = fx.dir.file("run_gan_fc");
    const auto gan_dir = cmd_gan(parse_experiment_config(gan_doc), det_dir, gan_doc);
    const auto gen_ckpt = (fs::path(gan_dir) / artifact::kGenCheckpoint).string();

    // source with exactly w=4 rows -> one window, n rows
    auto frame = synthetic::ar1_gaussian(4, 0.8, 0.5, 77);
    const auto one_window = fx.dir.file("one_window.csv");
    write_csv(one_window, frame.values);
    ForecastOptions opts;
    opts.samples = 200;
    opts.seed = 7;
    REQUIRE(cmd_forecast(gen_ckpt, one_window, fx.dir.file("samples.csv"), opts) == 1);
    auto samples = load_csv(fx.dir.file("samples.csv"), true);
    CHECK(samples.rows() == 200);
    CHECK(samples.features() == 1);

    // n = 1 -> a single row
    opts.samples = 1;
    REQUIRE(cmd_forecast(gen_ckpt, one_window, fx.dir.file("single.csv"), opts) == 1);
    CHECK(load_csv(fx.dir.file("single.csv"), true).rows() == 1);

    // multi-window source with truth-out: rows w..T-1
    auto longer = synthetic::ar1_gaussian(10, 0.8, 0.5, 78);
    const auto source10 = fx.dir.file("source10.csv");
    write_csv(source10, longer.values);
    opts.samples = 6;
    opts.truth_out = fx.dir.file("truth.csv");
    const auto blocks = cmd_forecast(gen_ckpt, source10, fx.dir.file("multi.csv"), opts);
    REQUIRE(blocks == 7); // T - w + 1
    auto truth = load_csv(opts.truth_out, true);
    REQUIRE(truth.rows() == 6); // T - w targets
    for (Eigen::Index r = 0; r < truth.rows(); ++r)
        CHECK(truth.values(r, 0) == longer.values(4 + r, 0));

    // reproducibility of the sample file
    opts.truth_out.clear();
    cmd_forecast(gen_ckpt, source10, fx.dir.file("multi2.csv"), opts);
    CHECK(slurp(fx.dir.file("multi.csv")) == slurp(fx.dir.file("multi2.csv")));

    // empty source: warning + empty output, no throw
    const auto empty_csv = write_text(fx.dir, "empty.csv", "");
    REQUIRE(cmd_forecast(gen_ckpt, empty_csv, fx.dir.file("empty_out.csv"), opts) == 0);
    CHECK(slurp(fx.dir.file("empty_out.csv")) == "feature_0\n"); // header only

    // feature mismatch
    auto wide = synthetic::multivariate_ar1(8, 2, 79);
    const auto wide_csv = fx.dir.file("wide.csv");
    write_csv(wide_csv, wide.values);
    CHECK_THROWS_AS(cmd_forecast(gen_ckpt, wide_csv, fx.dir.file("x.csv"), opts), ShapeMismatch);
}

TEST_CASE("cmd_plot renders fan charts and validates inputs") {
    testutil::TempDir dir;
    // hand-built sample file: 3 windows x 4 samples, 1 feature
    Matrix samples(12, 1);
    samples << 1, 2, 3, 4, 2, 3, 4, 5, 3, 4, 5, 6;
    write_csv(dir.file("s.csv"), samples, {"x"});
    Matrix truth(3, 1);
    truth << 2.5, 3.5, 4.5;
    write_csv(dir.file("t.csv"), truth, {"x"});

    PlotOptions opts;
    auto written = cmd_plot(dir.file("s.csv"), dir.file("t.csv"), dir.file("fan.svg"), opts);
    REQUIRE(written.size() == 1);
    REQUIRE(fs::exists(written[0]));
    REQUIRE(fs::file_size(written[0]) > 500);
    CHECK(slurp(written[0]).find("<svg") != std::string::npos);

    // truth with blocks-1 rows also accepted
    Matrix truth2(2, 1);
    truth2 << 2.5, 3.5;
    write_csv(dir.file("t2.csv"), truth2, {"x"});
    CHECK_NOTHROW(cmd_plot(dir.file("s.csv"), dir.file("t2.csv"), dir.file("fan2.svg"), opts));

    // feature index out of range
    PlotOptions bad;
    bad.features = {3};
    CHECK_THROWS_AS(cmd_plot(dir.file("s.csv"), dir.file("t.csv"), dir.file("bad.svg"), bad),
                    ParseError);

    // n = 1: the band collapses to the sample itself
    auto collapsed = fan_chart_data(truth, 1, truth, 0);
    for (std::size_t i = 0; i < collapsed.q10.size(); ++i) {
        CHECK(collapsed.q10[i] == collapsed.q50[i]);
        CHECK(collapsed.q50[i] == collapsed.q90[i]);
    }
}

TEST_CASE("cmd_evaluate scores deterministic and generator checkpoints") {
    Fixture fx;
    auto cfg = parse_experiment_config(fx.config);
    const auto det_dir = cmd_train_det(cfg, fx.config);
    auto gan_doc = fx.config;
    gan_doc["out_dir"] = fx.dir.file("run_gan_ev");
    const auto gan_dir = cmd_gan(parse_experiment_config(gan_doc), det_dir, gan_doc);

    const auto det_metrics = fx.dir.file("ev_det.json");
    cmd_evaluate(cfg, (fs::path(det_dir) / artifact::kDetCheckpoint).string(), 8, det_metrics);
    auto jd = nlohmann::json::parse(slurp(det_metrics));
    CHECK(jd["samples_per_window"] == 1);

    const auto gen_metrics = fx.dir.file("ev_gen.json");
    cmd_evaluate(cfg, (fs::path(gan_dir) / artifact::kGenCheckpoint).string(), 8, gen_metrics);
    auto jg = nlohmann::json::parse(slurp(gen_metrics));
    CHECK(jg["samples_per_window"] == 8);
    CHECK(jg["units"] == "original");
}
