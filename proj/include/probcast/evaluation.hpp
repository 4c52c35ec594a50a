#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probcast/common.hpp"
#include "probcast/dataset.hpp"
#include "probcast/errors.hpp"
#include "probcast/models.hpp"

namespace probcast {

// n generator draws for one window plus the matching observation.
struct PredictiveSampleSet {
    Matrix samples;      // n x f
    Vector ground_truth; // f
};

enum class CrpsPairing {
    Halves,       // X = first n/2 draws, X' = second n/2, paired elementwise
    FullPairwise, // fair estimator over all ordered pairs (variance reduction)
};

// Empirical CRPS*: E_F|X - x| - 1/2 E_F|X - X'| from n draws.
// The first expectation averages |s - x| over all n samples. The second is
// either the paired-halves estimate (n/2 disjoint pairs) or the full fair
// pairwise mean.
inline double crps_empirical(const Vector& samples, double x,
                             CrpsPairing pairing = CrpsPairing::Halves) {
    const Eigen::Index n = samples.size();
    if (n < 2 || n % 2 != 0)
        throw BadSampleCount("crps_empirical needs an even sample count >= 2, got " +
                             std::to_string(n));
    const double term1 = (samples.array() - x).abs().mean();
    double term2 = 0.0;
    if (pairing == CrpsPairing::Halves) {
        const Eigen::Index h = n / 2;
        term2 = (samples.head(h).array() - samples.tail(h).array()).abs().mean();
    } else {
        std::vector<double> sorted(samples.data(), samples.data() + n);
        std::sort(sorted.begin(), sorted.end());
        // sum over i<j of (s_(j) - s_(i)) via the sorted-rank identity
        double acc = 0.0;
        for (Eigen::Index k = 0; k < n; ++k)
            acc += static_cast<double>(2 * k - n + 1) * sorted[static_cast<std::size_t>(k)];
        term2 = 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n - 1));
    }
    return term1 - 0.5 * term2;
}

// Closed-form CRPS of N(mu, sigma^2) against observation x:
//   sigma * [ z(2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ].
inline double crps_gaussian(double mu, double sigma, double x) {
    if (sigma <= 0.0)
        throw DomainError("crps_gaussian requires sigma > 0");
    const double z = (x - mu) / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(M_PI));
}

// Per-feature univariate CRPS against the matching ground-truth entry.
inline Vector crps_multivariate(const PredictiveSampleSet& set,
                                CrpsPairing pairing = CrpsPairing::Halves) {
    if (set.samples.cols() != set.ground_truth.size())
        throw ShapeMismatch("sample width " + std::to_string(set.samples.cols()) +
                            " must match ground truth size " +
                            std::to_string(set.ground_truth.size()));
    Vector out(set.samples.cols());
    for (Eigen::Index c = 0; c < set.samples.cols(); ++c)
        out(c) = crps_empirical(set.samples.col(c), set.ground_truth(c), pairing);
    return out;
}

struct MetricsReport {
    Vector crps_per_feature;
    double crps_overall = 0.0;
    Vector mae_per_feature;
    double mae_overall = 0.0;
    Eigen::Index n_windows = 0;
    Eigen::Index samples_per_window = 0;
    std::string units = "scaled"; // "original" | "scaled"
};

// For each window: n draws, per-feature CRPS, MAE of the sample mean.
// Averages over windows, then uniformly over features. Reports in original
// units when a scaler is supplied.
inline MetricsReport evaluate_probabilistic(const GeneratorModel& gen, const WindowSet& windows,
                                            Eigen::Index n_samples, std::uint64_t seed,
                                            const ScalerState* scaler = nullptr,
                                            CrpsPairing pairing = CrpsPairing::Halves) {
    if (n_samples < 2 || n_samples % 2 != 0)
        throw BadSampleCount("evaluate_probabilistic needs an even n_samples >= 2");
    const Eigen::Index f = windows.features();
    const Eigen::Index m = windows.size();
    if (m < 1)
        throw TooShort("no windows to evaluate");

    MetricsReport rep;
    rep.crps_per_feature = Vector::Zero(f);
    rep.mae_per_feature = Vector::Zero(f);
    for (Eigen::Index i = 0; i < m; ++i) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
        Matrix draws = gen.sample(windows.condition(i), n_samples, rng);
        Vector truth = windows.target(i).transpose();
        if (scaler) {
            draws = invert_scaler_rows(draws, *scaler);
            truth = invert_scaler_rows(truth.transpose(), *scaler).transpose();
        }
        if (!all_finite(draws))
            throw Diverged("generator produced non-finite samples");
        rep.crps_per_feature += crps_multivariate({draws, truth}, pairing);
        rep.mae_per_feature += (draws.colwise().mean().transpose() - truth).cwiseAbs();
    }
    rep.crps_per_feature /= static_cast<double>(m);
    rep.mae_per_feature /= static_cast<double>(m);
    rep.crps_overall = rep.crps_per_feature.mean();
    rep.mae_overall = rep.mae_per_feature.mean();
    rep.n_windows = m;
    rep.samples_per_window = n_samples;
    rep.units = scaler ? "original" : "scaled";
    return rep;
}

// Point forecaster: per-feature MAE over all windows. The crps fields carry
// the same values — for a deterministic forecaster CRPS* reduces to MAE.
inline MetricsReport evaluate_point(const DeterministicModel& model, const WindowSet& windows,
                                    const ScalerState* scaler = nullptr) {
    const Eigen::Index f = windows.features();
    const Eigen::Index m = windows.size();
    if (m < 1)
        throw TooShort("no windows to evaluate");

    MetricsReport rep;
    rep.mae_per_feature = Vector::Zero(f);
    constexpr Eigen::Index chunk = 256;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index start = 0; start < m; start += chunk) {
        const Eigen::Index len = std::min(chunk, m - start);
        idx.resize(static_cast<std::size_t>(len));
        for (Eigen::Index k = 0; k < len; ++k)
            idx[static_cast<std::size_t>(k)] = start + k;
        Matrix preds = model.forward(windows.gather_conditions(idx));
        Matrix targets = windows.gather_targets(idx);
        if (scaler) {
            preds = invert_scaler_rows(preds, *scaler);
            targets = invert_scaler_rows(targets, *scaler);
        }
        if (!all_finite(preds))
            throw Diverged("model produced non-finite forecasts");
        rep.mae_per_feature += (preds - targets).cwiseAbs().colwise().sum().transpose();
    }
    rep.mae_per_feature /= static_cast<double>(m);
    rep.mae_overall = rep.mae_per_feature.mean();
    rep.crps_per_feature = rep.mae_per_feature;
    rep.crps_overall = rep.mae_overall;
    rep.n_windows = m;
    rep.samples_per_window = 1;
    rep.units = scaler ? "original" : "scaled";
    return rep;
}

// Linear-interpolation empirical quantile (sorted input, p in [0,1]).
inline double empirical_quantile(const std::vector<double>& sorted, double p) {
    if (sorted.empty())
        throw BadSampleCount("quantile of an empty sample");
    if (p <= 0.0)
        return sorted.front();
    if (p >= 1.0)
        return sorted.back();
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size())
        return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// ---- MetricsReport (de)serialization ----

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["crps_overall"] = r.crps_overall;
    j["mae_overall"] = r.mae_overall;
    j["crps_per_feature"] =
        std::vector<double>(r.crps_per_feature.data(), r.crps_per_feature.data() + r.crps_per_feature.size());
    j["mae_per_feature"] =
        std::vector<double>(r.mae_per_feature.data(), r.mae_per_feature.data() + r.mae_per_feature.size());
    j["n_windows"] = r.n_windows;
    j["samples_per_window"] = r.samples_per_window;
    j["units"] = r.units;
    return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
    MetricsReport r;
    auto crps = j.at("crps_per_feature").get<std::vector<double>>();
    auto mae = j.at("mae_per_feature").get<std::vector<double>>();
    r.crps_per_feature = Eigen::Map<const Vector>(crps.data(), static_cast<Eigen::Index>(crps.size()));
    r.mae_per_feature = Eigen::Map<const Vector>(mae.data(), static_cast<Eigen::Index>(mae.size()));
    r.crps_overall = j.at("crps_overall").get<double>();
    r.mae_overall = j.at("mae_overall").get<double>();
    r.n_windows = j.at("n_windows").get<Eigen::Index>();
    r.samples_per_window = j.at("samples_per_window").get<Eigen::Index>();
    r.units = j.at("units").get<std::string>();
    return r;
}

inline void save_metrics(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

} // namespace probcast
