#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "probcast/dataset.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace probcast;
using Catch::Approx;

namespace {

std::string write_file(const testutil::TempDir& dir, const std::string& name,
                       const std::string& body) {
    auto path = dir.file(name);
    std::ofstream out(path);
    out << body;
    return path;
}

} // namespace

TEST_CASE("load_csv parses a literal 3x2 file") {
    testutil::TempDir dir;
    auto path = write_file(dir, "tiny.csv", "1.0,2.0\n3.5,-4\n5e-1,6\n");
    auto frame = load_csv(path, false);
    REQUIRE(frame.rows() == 3);
    REQUIRE(frame.features() == 2);
    REQUIRE(frame.values(1, 1) == Approx(-4.0));
    REQUIRE(frame.values(2, 0) == Approx(0.5));
    REQUIRE(frame.feature_names == std::vector<std::string>{"feature_0", "feature_1"});
}

TEST_CASE("load_csv honours a header row") {
    testutil::TempDir dir;
    auto path = write_file(dir, "head.csv", "a,b\n1,2\n3,4\n");
    auto frame = load_csv(path, true);
    REQUIRE(frame.rows() == 2);
    REQUIRE(frame.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("load_csv error paths") {
    testutil::TempDir dir;
    CHECK_THROWS_AS(load_csv(dir.file("missing.csv"), false), IoError);
    CHECK_THROWS_AS(load_csv(write_file(dir, "ragged.csv", "1,2\n3\n"), false), ParseError);
    CHECK_THROWS_AS(load_csv(write_file(dir, "alpha.csv", "1,x\n"), false), ParseError);
    CHECK_THROWS_AS(load_csv(write_file(dir, "nan.csv", "1,nan\n"), false), ParseError);
    CHECK_THROWS_AS(load_csv(write_file(dir, "empty.csv", ""), false), EmptyInput);
    CHECK_THROWS_AS(load_csv(write_file(dir, "only_header.csv", "a,b\n"), true), EmptyInput);
}

TEST_CASE("load_csv skips blank trailing lines") {
    testutil::TempDir dir;
    auto frame = load_csv(write_file(dir, "blank.csv", "1,2\n3,4\n\n"), false);
    REQUIRE(frame.rows() == 2);
}

TEST_CASE("chronological_split lengths follow the floor rule") {
    SplitSpec spec; // 0.75 / 0.05 / 0.20
    auto t1000 = synthetic::multivariate_ar1(1000, 2, 1);
    auto s = chronological_split(t1000, spec);
    CHECK(s.train.rows() == 750);
    CHECK(s.valid.rows() == 50);
    CHECK(s.test.rows() == 200);

    auto t7588 = synthetic::multivariate_ar1(7588, 1, 2);
    auto s2 = chronological_split(t7588, spec);
    CHECK(s2.train.rows() == 5691);
    CHECK(s2.valid.rows() == 379);
    CHECK(s2.test.rows() == 1518);

    auto t20 = synthetic::multivariate_ar1(20, 1, 3);
    auto s3 = chronological_split(t20, spec);
    CHECK(s3.train.rows() == 15);
    CHECK(s3.valid.rows() == 1);
    CHECK(s3.test.rows() == 4);
}

TEST_CASE("chronological_split preserves order and content exactly") {
    auto frame = synthetic::multivariate_ar1(103, 3, 7);
    auto s = chronological_split(frame, SplitSpec{});
    Matrix glued(frame.rows(), frame.features());
    glued << s.train.values, s.valid.values, s.test.values;
    REQUIRE(glued == frame.values); // byte-identical reassembly

    // determinism: same input, same result
    auto s2 = chronological_split(frame, SplitSpec{});
    REQUIRE(s2.train.values == s.train.values);
    REQUIRE(s2.valid.values == s.valid.values);
    REQUIRE(s2.test.values == s.test.values);
}

TEST_CASE("chronological_split rejects degenerate inputs") {
    auto tiny = synthetic::multivariate_ar1(2, 1, 4);
    CHECK_THROWS_AS(chronological_split(tiny, SplitSpec{}), TooShort);
    auto ten = synthetic::multivariate_ar1(10, 1, 5);
    CHECK_THROWS_AS(chronological_split(ten, SplitSpec{}), TooShort); // valid slice empty
    SplitSpec bad{0.5, 0.2, 0.2};
    CHECK_THROWS_AS(chronological_split(synthetic::multivariate_ar1(100, 1, 6), bad), InvalidSpec);
}

TEST_CASE("fit_scaler uses the population convention") {
    TimeSeriesFrame frame;
    frame.values.resize(2, 1);
    frame.values << 2.0, 4.0;
    frame.feature_names = {"x"};
    auto state = fit_scaler(frame);
    CHECK(state.per_feature_mean(0) == Approx(3.0));
    CHECK(state.per_feature_std(0) == Approx(1.0));
    auto scaled = apply_scaler(frame, state);
    CHECK(scaled.values(0, 0) == Approx(-1.0));
    CHECK(scaled.values(1, 0) == Approx(1.0));
}

TEST_CASE("constant features fall back to unit std") {
    TimeSeriesFrame frame;
    frame.values.resize(3, 1);
    frame.values << 5.0, 5.0, 5.0;
    frame.feature_names = {"c"};
    auto state = fit_scaler(frame);
    CHECK(state.per_feature_std(0) == 1.0);
    auto scaled = apply_scaler(frame, state);
    CHECK(scaled.values.isZero(0.0));
}

TEST_CASE("scaler round-trips within 1e-6 relative error") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> mag(-1e3, 1e3);
    for (int rep = 0; rep < 20; ++rep) {
        auto frame = synthetic::multivariate_ar1(50, 4, 100 + rep);
        frame.values.array() += mag(rng);
        auto state = fit_scaler(frame);
        auto round = invert_scaler(apply_scaler(frame, state), state);
        for (Eigen::Index i = 0; i < frame.rows(); ++i)
            for (Eigen::Index j = 0; j < frame.features(); ++j) {
                const double a = frame.values(i, j), b = round.values(i, j);
                REQUIRE(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));
            }
    }
}

TEST_CASE("train-split scaling yields mean 0 / std 1 on non-constant features") {
    auto frame = synthetic::multivariate_ar1(400, 3, 11);
    auto splits = chronological_split(frame, SplitSpec{});
    auto state = fit_scaler(splits.train);
    auto scaled = apply_scaler(splits.train, state);
    for (Eigen::Index c = 0; c < scaled.features(); ++c) {
        CHECK(std::abs(scaled.values.col(c).mean()) < 1e-6);
        const double var = scaled.values.col(c).array().square().mean() -
                           std::pow(scaled.values.col(c).mean(), 2);
        CHECK(std::sqrt(var) == Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("scaler state depends on the training split only") {
    auto frame = synthetic::multivariate_ar1(200, 2, 12);
    auto splits = chronological_split(frame, SplitSpec{});
    auto state = fit_scaler(splits.train);
    // mutate valid/test, refit: unchanged
    splits.valid.values.array() += 1e6;
    splits.test.values.array() *= -3.0;
    auto state2 = fit_scaler(splits.train);
    REQUIRE(state.per_feature_mean == state2.per_feature_mean);
    REQUIRE(state.per_feature_std == state2.per_feature_std);
}

TEST_CASE("make_windows yields exactly T - w examples") {
    auto frame = synthetic::multivariate_ar1(100, 2, 13);
    auto ws = make_windows(frame, 10);
    CHECK(ws.size() == 90);

    auto long_frame = synthetic::multivariate_ar1(175, 1, 14);
    auto single = make_windows(long_frame, 174);
    CHECK(single.size() == 1);
    CHECK(single.target(0)(0) == long_frame.values(174, 0));

    CHECK_THROWS_AS(make_windows(synthetic::multivariate_ar1(10, 1, 15), 10), TooShort);
    CHECK_THROWS_AS(make_windows(synthetic::multivariate_ar1(10, 1, 15), 0), InvalidSpec);
}

TEST_CASE("window contents are consecutive rows") {
    TimeSeriesFrame ramp;
    ramp.values.resize(11, 1);
    for (Eigen::Index i = 0; i < 11; ++i)
        ramp.values(i, 0) = static_cast<double>(i);
    ramp.feature_names = {"t"};
    auto ws = make_windows(ramp, 10);
    REQUIRE(ws.size() == 1);
    for (Eigen::Index t = 0; t < 10; ++t)
        CHECK(ws.condition(0)(t, 0) == static_cast<double>(t));
    CHECK(ws.target(0)(0) == 10.0);
}

TEST_CASE("stitching the first condition plus all targets reproduces the frame") {
    for (Eigen::Index w : {1, 3, 7}) {
        auto frame = synthetic::multivariate_ar1(60, 2, 16 + static_cast<std::uint64_t>(w));
        auto ws = make_windows(frame, w);
        Matrix rebuilt(frame.rows(), frame.features());
        rebuilt.topRows(w) = ws.condition(0);
        for (Eigen::Index i = 0; i < ws.size(); ++i)
            rebuilt.row(w + i) = ws.target(i);
        REQUIRE(rebuilt == frame.values);
    }
}

TEST_CASE("window batch gathers match per-example views") {
    auto frame = synthetic::multivariate_ar1(40, 3, 21);
    auto ws = make_windows(frame, 5);
    std::vector<Eigen::Index> idx{0, 7, 13};
    auto xs = ws.gather_conditions(idx);
    REQUIRE(xs.size() == 5);
    for (std::size_t t = 0; t < xs.size(); ++t)
        for (std::size_t k = 0; k < idx.size(); ++k)
            REQUIRE(xs[t].row(static_cast<Eigen::Index>(k)) ==
                    ws.condition(idx[k]).row(static_cast<Eigen::Index>(t)));
    auto targets = ws.gather_targets(idx);
    for (std::size_t k = 0; k < idx.size(); ++k)
        REQUIRE(targets.row(static_cast<Eigen::Index>(k)) == ws.target(idx[k]));
}

TEST_CASE("scaler state round-trips through its file schema") {
    testutil::TempDir dir;
    auto frame = synthetic::multivariate_ar1(100, 3, 22);
    auto state = fit_scaler(frame);
    save_scaler(dir.file("scaler.json"), state, frame.feature_names);
    auto loaded = load_scaler(dir.file("scaler.json"));
    REQUIRE(loaded.per_feature_mean.isApprox(state.per_feature_mean, 0.0));
    REQUIRE(loaded.per_feature_std.isApprox(state.per_feature_std, 0.0));
    CHECK_THROWS_AS(load_scaler(dir.file("nope.json")), IoError);
}
