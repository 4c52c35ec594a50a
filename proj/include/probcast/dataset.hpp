#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probcast/common.hpp"
#include "probcast/errors.hpp"

namespace probcast {

// A T x f block of observations, one timestep per row, strictly increasing
// time order, no missing entries.
struct TimeSeriesFrame {
    Matrix values;                          // T x f
    std::vector<std::string> feature_names; // size f
    std::string sample_rate = "unknown";

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index features() const { return values.cols(); }
};

struct SplitSpec {
    double train_frac = 0.75;
    double valid_frac = 0.05;
    double test_frac = 0.20;

    void validate() const {
        if (train_frac <= 0 || valid_frac <= 0 || test_frac <= 0)
            throw InvalidSpec("split fractions must be positive");
        const double sum = train_frac + valid_frac + test_frac;
        if (std::abs(sum - 1.0) > 1e-9)
            throw InvalidSpec("split fractions must sum to 1, got " + std::to_string(sum));
    }
};

// z-score parameters, fit on the training split only.
struct ScalerState {
    RowVector per_feature_mean; // 1 x f
    RowVector per_feature_std;  // 1 x f, strictly positive
};

// One supervision example: w consecutive rows of history plus the next row.
struct WindowedExample {
    Matrix condition; // w x f
    Vector target;    // f
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

inline double parse_cell(const std::string& cell, std::size_t line_no, std::size_t col) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(cell, &pos);
    } catch (const std::exception&) {
        throw ParseError("non-numeric cell '" + cell + "' at line " + std::to_string(line_no) +
                         ", column " + std::to_string(col + 1));
    }
    // allow surrounding whitespace but nothing else after the number
    while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos])))
        ++pos;
    if (pos != cell.size())
        throw ParseError("non-numeric cell '" + cell + "' at line " + std::to_string(line_no) +
                         ", column " + std::to_string(col + 1));
    if (!std::isfinite(v))
        throw ParseError("non-finite cell '" + cell + "' at line " + std::to_string(line_no));
    return v;
}

} // namespace detail

// Comma-separated, optional header row, one timestep per row, one feature per
// column. Lines that are entirely empty (e.g. a trailing newline) are skipped.
inline TimeSeriesFrame load_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in)
        throw IoError("dataset not found: " + path);

    TimeSeriesFrame frame;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool header_pending = has_header;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = detail::split_csv_line(line);
        if (header_pending) {
            frame.feature_names.assign(cells.begin(), cells.end());
            width = cells.size();
            header_pending = false;
            continue;
        }
        if (width == 0)
            width = cells.size();
        if (cells.size() != width)
            throw ParseError("ragged row at line " + std::to_string(line_no) + ": expected " +
                             std::to_string(width) + " cells, got " + std::to_string(cells.size()));
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c)
            row[c] = detail::parse_cell(cells[c], line_no, c);
        rows.push_back(std::move(row));
    }

    if (rows.empty() || width == 0)
        throw EmptyInput("no data rows in " + path);

    frame.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < width; ++c)
            frame.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];

    if (frame.feature_names.empty()) {
        frame.feature_names.reserve(width);
        for (std::size_t c = 0; c < width; ++c)
            frame.feature_names.push_back("feature_" + std::to_string(c));
    }
    return frame;
}

inline void write_csv(const std::string& path, const Matrix& values,
                      const std::vector<std::string>& header = {}) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out.precision(17);
    if (!header.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            out << (c ? "," : "") << header[c];
        out << "\n";
    }
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c)
            out << (c ? "," : "") << values(r, c);
        out << "\n";
    }
}

struct SplitFrames {
    TimeSeriesFrame train;
    TimeSeriesFrame valid;
    TimeSeriesFrame test;
};

// Contiguous, order-preserving segments: first floor(train_frac*T) rows, then
// floor(valid_frac*T), remainder to test. Concatenation reproduces the input.
inline SplitFrames chronological_split(const TimeSeriesFrame& frame, const SplitSpec& spec) {
    spec.validate();
    const Eigen::Index t = frame.rows();
    if (t < 3)
        throw TooShort("need at least 3 rows to split, got " + std::to_string(t));

    const auto n_train = static_cast<Eigen::Index>(std::floor(spec.train_frac * static_cast<double>(t)));
    const auto n_valid = static_cast<Eigen::Index>(std::floor(spec.valid_frac * static_cast<double>(t)));
    const Eigen::Index n_test = t - n_train - n_valid;
    if (n_train < 1 || n_valid < 1 || n_test < 1)
        throw TooShort("split produces an empty segment: (" + std::to_string(n_train) + ", " +
                       std::to_string(n_valid) + ", " + std::to_string(n_test) + ")");

    auto segment = [&](Eigen::Index start, Eigen::Index len) {
        TimeSeriesFrame out;
        out.values = frame.values.middleRows(start, len);
        out.feature_names = frame.feature_names;
        out.sample_rate = frame.sample_rate;
        return out;
    };
    return SplitFrames{segment(0, n_train), segment(n_train, n_valid),
                       segment(n_train + n_valid, n_test)};
}

// Population convention (divide by T); constant features fall back to std=1.
inline ScalerState fit_scaler(const TimeSeriesFrame& train) {
    if (train.rows() == 0)
        throw EmptyInput("cannot fit scaler on an empty frame");
    ScalerState s;
    s.per_feature_mean = train.values.colwise().mean();
    Matrix centered = train.values.rowwise() - s.per_feature_mean;
    s.per_feature_std =
        (centered.array().square().colwise().mean()).sqrt().matrix();
    for (Eigen::Index c = 0; c < s.per_feature_std.size(); ++c)
        if (s.per_feature_std(c) <= 0.0)
            s.per_feature_std(c) = 1.0;
    return s;
}

inline TimeSeriesFrame apply_scaler(const TimeSeriesFrame& frame, const ScalerState& s) {
    if (frame.features() != s.per_feature_mean.size())
        throw ShapeMismatch("scaler fit on " + std::to_string(s.per_feature_mean.size()) +
                            " features, frame has " + std::to_string(frame.features()));
    TimeSeriesFrame out = frame;
    out.values = (frame.values.rowwise() - s.per_feature_mean).array().rowwise() /
                 s.per_feature_std.array();
    return out;
}

inline TimeSeriesFrame invert_scaler(const TimeSeriesFrame& frame, const ScalerState& s) {
    if (frame.features() != s.per_feature_mean.size())
        throw ShapeMismatch("scaler fit on " + std::to_string(s.per_feature_mean.size()) +
                            " features, frame has " + std::to_string(frame.features()));
    TimeSeriesFrame out = frame;
    out.values =
        (frame.values.array().rowwise() * s.per_feature_std.array()).matrix().rowwise() +
        s.per_feature_mean;
    return out;
}

inline Matrix invert_scaler_rows(const Matrix& rows, const ScalerState& s) {
    if (rows.cols() != s.per_feature_mean.size())
        throw ShapeMismatch("scaler width mismatch");
    return (rows.array().rowwise() * s.per_feature_std.array()).matrix().rowwise() +
           s.per_feature_mean;
}

// The windows over one split, kept as views into a single owned matrix.
// Example i has condition rows [i, i+w) and target row i+w.
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(Matrix values, Eigen::Index window)
        : values_(std::move(values)), window_(window) {}

    Eigen::Index size() const { return values_.rows() - window_; }
    Eigen::Index window() const { return window_; }
    Eigen::Index features() const { return values_.cols(); }

    auto condition(Eigen::Index i) const { return values_.middleRows(i, window_); }
    auto target(Eigen::Index i) const { return values_.row(i + window_); }

    WindowedExample example(Eigen::Index i) const {
        return WindowedExample{condition(i), target(i).transpose()};
    }

    // Batch assembly for sequence models: one b x f matrix per timestep.
    std::vector<Matrix> gather_conditions(const std::vector<Eigen::Index>& idx) const {
        std::vector<Matrix> xs(static_cast<std::size_t>(window_));
        const auto b = static_cast<Eigen::Index>(idx.size());
        for (Eigen::Index t = 0; t < window_; ++t) {
            Matrix step(b, features());
            for (Eigen::Index k = 0; k < b; ++k)
                step.row(k) = values_.row(idx[static_cast<std::size_t>(k)] + t);
            xs[static_cast<std::size_t>(t)] = std::move(step);
        }
        return xs;
    }

    Matrix gather_targets(const std::vector<Eigen::Index>& idx) const {
        Matrix out(static_cast<Eigen::Index>(idx.size()), features());
        for (std::size_t k = 0; k < idx.size(); ++k)
            out.row(static_cast<Eigen::Index>(k)) = target(idx[k]);
        return out;
    }

private:
    Matrix values_;
    Eigen::Index window_ = 0;
};

inline WindowSet make_windows(const TimeSeriesFrame& frame, Eigen::Index window) {
    if (window < 1)
        throw InvalidSpec("window length must be >= 1");
    if (frame.rows() < window + 1)
        throw TooShort("need at least w+1 = " + std::to_string(window + 1) + " rows, got " +
                       std::to_string(frame.rows()));
    return WindowSet(frame.values, window);
}

// ---- scaler (de)serialization: documented key/value schema ----

inline void save_scaler(const std::string& path, const ScalerState& s,
                        const std::vector<std::string>& feature_names = {}) {
    nlohmann::ordered_json j;
    j["format"] = "probcast-scaler";
    j["version"] = 1;
    j["per_feature_mean"] = std::vector<double>(s.per_feature_mean.data(),
                                                s.per_feature_mean.data() + s.per_feature_mean.size());
    j["per_feature_std"] = std::vector<double>(s.per_feature_std.data(),
                                               s.per_feature_std.data() + s.per_feature_std.size());
    if (!feature_names.empty())
        j["feature_names"] = feature_names;
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline ScalerState load_scaler(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("scaler file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("bad scaler file: ") + e.what());
    }
    if (j.value("format", "") != "probcast-scaler")
        throw ParseError("not a probcast scaler file: " + path);
    auto mean = j.at("per_feature_mean").get<std::vector<double>>();
    auto stdv = j.at("per_feature_std").get<std::vector<double>>();
    if (mean.size() != stdv.size())
        throw ParseError("scaler mean/std length mismatch");
    ScalerState s;
    s.per_feature_mean = Eigen::Map<const RowVector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    s.per_feature_std = Eigen::Map<const RowVector>(stdv.data(), static_cast<Eigen::Index>(stdv.size()));
    for (Eigen::Index c = 0; c < s.per_feature_std.size(); ++c)
        if (s.per_feature_std(c) <= 0.0)
            throw ParseError("scaler std must be strictly positive");
    return s;
}

} // namespace probcast
