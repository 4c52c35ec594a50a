#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

namespace probcast {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

// splitmix64; used to derive independent sub-seeds from (seed, salt...)
// so that e.g. per-window or per-epoch randomness is order-independent.
inline std::uint64_t mix_seed(std::uint64_t a) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return mix_seed(a ^ mix_seed(b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

inline Matrix random_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = dist(rng);
    return m;
}

inline std::string shape_str(const Matrix& m) {
    return "[" + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + "]";
}

} // namespace probcast
