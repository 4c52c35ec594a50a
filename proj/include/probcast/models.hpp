#pragma once

#include <array>
#include <string>
#include <vector>

#include "probcast/common.hpp"
#include "probcast/errors.hpp"
#include "probcast/layers.hpp"

namespace probcast {

// Dense-width convention: the two-entry array covers the whole head, hidden
// layer first, output layer last. The output width is pinned by the model
// kind (f for forecasters, 1 for the discriminator).

struct DeterministicSpec {
    Eigen::Index window_size = 0;
    Eigen::Index gru_layers = 1;
    Eigen::Index gru_cells = 0;
    std::array<Eigen::Index, 2> dense_widths{0, 0};
    Eigen::Index feature_count = 0;

    void validate() const {
        if (window_size < 1 || gru_layers < 1 || gru_cells < 1 || feature_count < 1)
            throw InvalidSpec("deterministic spec: all counts must be >= 1");
        if (dense_widths[0] < 1 || dense_widths[1] < 1)
            throw InvalidSpec("deterministic spec: dense widths must be >= 1");
        if (dense_widths[1] != feature_count)
            throw InvalidSpec("deterministic spec: output width " +
                              std::to_string(dense_widths[1]) + " must equal feature count " +
                              std::to_string(feature_count));
    }
};

inline DeterministicSpec make_deterministic_spec(Eigen::Index window, Eigen::Index layers,
                                                 Eigen::Index cells, Eigen::Index features,
                                                 Eigen::Index dense_hidden = 0) {
    DeterministicSpec s;
    s.window_size = window;
    s.gru_layers = layers;
    s.gru_cells = cells;
    s.feature_count = features;
    s.dense_widths = {dense_hidden > 0 ? dense_hidden : cells, features};
    return s;
}

struct GeneratorSpec {
    DeterministicSpec base;
    Eigen::Index noise_size = 0;
    // noise_distribution: standard normal, by construction (sample_forecasts).
    std::array<Eigen::Index, 2> mlp_extension_widths{0, 0};

    void validate() const {
        base.validate();
        if (noise_size < 1)
            throw InvalidSpec("generator spec: noise_size must be >= 1");
        if (mlp_extension_widths[0] < 1 || mlp_extension_widths[1] < 1)
            throw InvalidSpec("generator spec: extension widths must be >= 1");
        if (mlp_extension_widths[1] != base.feature_count)
            throw InvalidSpec("generator spec: output width must equal feature count");
    }
};

struct DiscriminatorSpec {
    Eigen::Index gru_layers = 1;
    Eigen::Index gru_cells = 0;
    std::array<Eigen::Index, 2> dense_widths{0, 0};
    Eigen::Index window_size = 0;
    Eigen::Index feature_count = 0;

    void validate() const {
        if (window_size < 1 || gru_layers < 1 || gru_cells < 1 || feature_count < 1)
            throw InvalidSpec("discriminator spec: all counts must be >= 1");
        if (dense_widths[0] < 1)
            throw InvalidSpec("discriminator spec: dense widths must be >= 1");
        if (dense_widths[1] != 1)
            throw InvalidSpec("discriminator spec: final output must be a single scalar");
    }
};

inline DiscriminatorSpec make_discriminator_spec(Eigen::Index window, Eigen::Index layers,
                                                 Eigen::Index cells, Eigen::Index features,
                                                 Eigen::Index dense_hidden = 0) {
    DiscriminatorSpec s;
    s.window_size = window;
    s.gru_layers = layers;
    s.gru_cells = cells;
    s.feature_count = features;
    s.dense_widths = {dense_hidden > 0 ? dense_hidden : cells, 1};
    return s;
}

namespace detail {

inline void init_uniform(Matrix& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = dist(rng);
}

// GRU tensors ~ U(-1/sqrt(cells), .); dense tensors ~ U(-1/sqrt(fan_in), .).
inline void init_gru(GruStack& gru, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(gru.cells()));
    for (Matrix* m : gru.tensors())
        init_uniform(*m, bound, rng);
}

// Weights ~ U(-1/sqrt(fan_in), .), biases zero — keeps tiny ReLU heads alive
// at initialization.
inline void init_dense(Dense& d, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.in()));
    init_uniform(d.W, bound, rng);
    d.b.setZero();
}

inline void check_window_shape(const Matrix& window, Eigen::Index w, Eigen::Index f,
                               const char* who) {
    if (window.rows() != w || window.cols() != f)
        throw ShapeMismatch(std::string(who) + ": expected window [" + std::to_string(w) +
                            " x " + std::to_string(f) + "], got " + shape_str(window));
}

} // namespace detail

// GRU encoder + two dense layers (hidden ReLU, linear output of width f).
class DeterministicModel {
public:
    DeterministicModel(DeterministicSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
        spec_.validate();
        gru_ = GruStack(spec_.feature_count, spec_.gru_cells, spec_.gru_layers);
        head_.resize(2);
        head_[0].W.resize(spec_.gru_cells, spec_.dense_widths[0]);
        head_[0].b.resize(1, spec_.dense_widths[0]);
        head_[0].act = Activation::ReLU;
        head_[1].W.resize(spec_.dense_widths[0], spec_.dense_widths[1]);
        head_[1].b.resize(1, spec_.dense_widths[1]);
        head_[1].act = Activation::Linear;
        Rng rng(seed);
        detail::init_gru(gru_, rng);
        for (auto& d : head_)
            detail::init_dense(d, rng);
    }

    const DeterministicSpec& spec() const { return spec_; }
    GruStack& gru() { return gru_; }
    const GruStack& gru() const { return gru_; }

    std::vector<Matrix*> tensors() {
        auto ts = gru_.tensors();
        for (auto& d : head_) {
            ts.push_back(&d.W);
            ts.push_back(&d.b);
        }
        return ts;
    }
    std::vector<Matrix*> tensors() const {
        return const_cast<DeterministicModel*>(this)->tensors();
    }

    Eigen::Index parameter_count() const { return count_tensor_params(tensors()); }

    struct Cache {
        GruStack::Cache gru;
        std::vector<Dense::Cache> head;
    };

    // xs: window_size entries of [b x f]; returns [b x f].
    Matrix forward(const std::vector<Matrix>& xs) const {
        Matrix h = gru_.forward(xs);
        for (const auto& d : head_)
            h = d.forward(h);
        return h;
    }

    Matrix forward(const std::vector<Matrix>& xs, Cache& cache) const {
        cache.head.resize(head_.size());
        Matrix h = gru_.forward(xs, cache.gru);
        for (std::size_t i = 0; i < head_.size(); ++i)
            h = head_[i].forward(h, cache.head[i]);
        return h;
    }

    void backward(const Matrix& dy, const Cache& cache, std::vector<Matrix>& grads) const {
        const std::size_t gru_n = static_cast<std::size_t>(gru_.layers()) * GruStack::kTensorsPerLayer;
        Matrix d = dy;
        for (std::size_t i = head_.size(); i-- > 0;)
            d = head_[i].backward(d, cache.head[i], grads[gru_n + 2 * i], grads[gru_n + 2 * i + 1]);
        gru_.backward(d, cache.gru, grads, 0);
    }

    Vector forecast_point(const Matrix& window) const {
        detail::check_window_shape(window, spec_.window_size, spec_.feature_count,
                                   "forecast_point");
        std::vector<Matrix> xs(static_cast<std::size_t>(spec_.window_size));
        for (Eigen::Index t = 0; t < spec_.window_size; ++t)
            xs[static_cast<std::size_t>(t)] = window.row(t);
        return forward(xs).row(0).transpose();
    }

private:
    DeterministicSpec spec_;
    GruStack gru_;
    std::vector<Dense> head_;
};

// The deterministic topology with noise concatenated to the GRU representation
// and a widened dense block mapping (representation, z) to a forecast draw.
class GeneratorModel {
public:
    GeneratorModel(GeneratorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
        spec_.validate();
        const auto& b = spec_.base;
        gru_ = GruStack(b.feature_count, b.gru_cells, b.gru_layers);
        head_.resize(2);
        head_[0].W.resize(b.gru_cells + spec_.noise_size, spec_.mlp_extension_widths[0]);
        head_[0].b.resize(1, spec_.mlp_extension_widths[0]);
        head_[0].act = Activation::ReLU;
        head_[1].W.resize(spec_.mlp_extension_widths[0], spec_.mlp_extension_widths[1]);
        head_[1].b.resize(1, spec_.mlp_extension_widths[1]);
        head_[1].act = Activation::Linear;
        Rng rng(seed);
        detail::init_gru(gru_, rng);
        for (auto& d : head_)
            detail::init_dense(d, rng);
    }

    const GeneratorSpec& spec() const { return spec_; }
    GruStack& gru() { return gru_; }
    const GruStack& gru() const { return gru_; }

    std::vector<Matrix*> tensors() {
        auto ts = gru_.tensors();
        for (auto& d : head_) {
            ts.push_back(&d.W);
            ts.push_back(&d.b);
        }
        return ts;
    }
    std::vector<Matrix*> tensors() const {
        return const_cast<GeneratorModel*>(this)->tensors();
    }

    Eigen::Index parameter_count() const { return count_tensor_params(tensors()); }

    struct Cache {
        GruStack::Cache gru;
        std::vector<Dense::Cache> head;
    };

    // xs: window_size entries of [b x f]; z: [b x noise_size]; returns [b x f].
    Matrix forward(const std::vector<Matrix>& xs, const Matrix& z) const {
        Matrix rep = gru_.forward(xs);
        return head_forward(rep, z, nullptr);
    }

    Matrix forward(const std::vector<Matrix>& xs, const Matrix& z, Cache& cache) const {
        cache.head.resize(head_.size());
        Matrix rep = gru_.forward(xs, cache.gru);
        return head_forward(rep, z, &cache);
    }

    void backward(const Matrix& dy, const Cache& cache, std::vector<Matrix>& grads) const {
        const std::size_t gru_n = static_cast<std::size_t>(gru_.layers()) * GruStack::kTensorsPerLayer;
        Matrix d = dy;
        for (std::size_t i = head_.size(); i-- > 0;)
            d = head_[i].backward(d, cache.head[i], grads[gru_n + 2 * i], grads[gru_n + 2 * i + 1]);
        // first gru_cells columns of the head input belong to the representation
        gru_.backward(d.leftCols(spec_.base.gru_cells), cache.gru, grads, 0);
    }

    // n draws for one window, each with an independent z ~ N(0, I). The GRU
    // representation is computed once and broadcast across draws.
    Matrix sample(const Matrix& window, Eigen::Index n, Rng& rng) const {
        const auto& b = spec_.base;
        detail::check_window_shape(window, b.window_size, b.feature_count, "sample_forecasts");
        if (n < 1)
            throw BadSampleCount("need n >= 1 draws");
        std::vector<Matrix> xs(static_cast<std::size_t>(b.window_size));
        for (Eigen::Index t = 0; t < b.window_size; ++t)
            xs[static_cast<std::size_t>(t)] = window.row(t);
        Matrix rep = gru_.forward(xs);                       // 1 x cells
        Matrix reps = rep.replicate(n, 1);                   // n x cells
        Matrix z = random_normal_matrix(n, spec_.noise_size, rng);
        return head_forward_cat(reps, z);
    }

private:
    Matrix head_forward(const Matrix& rep, const Matrix& z, Cache* cache) const {
        if (z.cols() != spec_.noise_size || z.rows() != rep.rows())
            throw ShapeMismatch("noise batch must be [b x noise_size], got " + shape_str(z));
        Matrix h(rep.rows(), rep.cols() + z.cols());
        h << rep, z;
        if (!cache)
            for (const auto& d : head_)
                h = d.forward(h);
        else
            for (std::size_t i = 0; i < head_.size(); ++i)
                h = head_[i].forward(h, cache->head[i]);
        return h;
    }

    Matrix head_forward_cat(const Matrix& reps, const Matrix& z) const {
        Matrix h(reps.rows(), reps.cols() + z.cols());
        h << reps, z;
        for (const auto& d : head_)
            h = d.forward(h);
        return h;
    }

    GeneratorSpec spec_;
    GruStack gru_;
    std::vector<Dense> head_;
};

// GRU over the window with the candidate row appended, two dense layers down
// to a single logit; score() applies the sigmoid.
class DiscriminatorModel {
public:
    DiscriminatorModel(DiscriminatorSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
        spec_.validate();
        gru_ = GruStack(spec_.feature_count, spec_.gru_cells, spec_.gru_layers);
        head_.resize(2);
        head_[0].W.resize(spec_.gru_cells, spec_.dense_widths[0]);
        head_[0].b.resize(1, spec_.dense_widths[0]);
        head_[0].act = Activation::ReLU;
        head_[1].W.resize(spec_.dense_widths[0], 1);
        head_[1].b.resize(1, 1);
        head_[1].act = Activation::Linear; // logit; sigmoid applied in score()
        Rng rng(seed);
        detail::init_gru(gru_, rng);
        for (auto& d : head_)
            detail::init_dense(d, rng);
    }

    const DiscriminatorSpec& spec() const { return spec_; }

    std::vector<Matrix*> tensors() {
        auto ts = gru_.tensors();
        for (auto& d : head_) {
            ts.push_back(&d.W);
            ts.push_back(&d.b);
        }
        return ts;
    }
    std::vector<Matrix*> tensors() const {
        return const_cast<DiscriminatorModel*>(this)->tensors();
    }

    Eigen::Index parameter_count() const { return count_tensor_params(tensors()); }

    struct Cache {
        GruStack::Cache gru;
        std::vector<Dense::Cache> head;
    };

    // xs: window timesteps; candidates: [b x f], appended as timestep w+1.
    // Returns raw logits [b x 1].
    Matrix logits(const std::vector<Matrix>& xs, const Matrix& candidates) const {
        auto seq = append_candidates(xs, candidates);
        Matrix h = gru_.forward(seq);
        for (const auto& d : head_)
            h = d.forward(h);
        return h;
    }

    Matrix logits(const std::vector<Matrix>& xs, const Matrix& candidates, Cache& cache) const {
        auto seq = append_candidates(xs, candidates);
        cache.head.resize(head_.size());
        Matrix h = gru_.forward(seq, cache.gru);
        for (std::size_t i = 0; i < head_.size(); ++i)
            h = head_[i].forward(h, cache.head[i]);
        return h;
    }

    // dcandidates (optional) receives dL/dcandidate, [b x f] — the path the
    // generator trains through.
    void backward(const Matrix& dlogits, const Cache& cache, std::vector<Matrix>& grads,
                  Matrix* dcandidates = nullptr) const {
        const std::size_t gru_n = static_cast<std::size_t>(gru_.layers()) * GruStack::kTensorsPerLayer;
        Matrix d = dlogits;
        for (std::size_t i = head_.size(); i-- > 0;)
            d = head_[i].backward(d, cache.head[i], grads[gru_n + 2 * i], grads[gru_n + 2 * i + 1]);
        if (dcandidates) {
            std::vector<Matrix> dxs;
            gru_.backward(d, cache.gru, grads, 0, &dxs);
            *dcandidates = std::move(dxs.back());
        } else {
            gru_.backward(d, cache.gru, grads, 0);
        }
    }

    // Single (window, candidate) score, strictly inside (0, 1).
    double score(const Matrix& window, const Vector& candidate) const {
        detail::check_window_shape(window, spec_.window_size, spec_.feature_count,
                                   "discriminator_score");
        if (candidate.size() != spec_.feature_count)
            throw ShapeMismatch("candidate width " + std::to_string(candidate.size()) +
                                " must equal feature count " +
                                std::to_string(spec_.feature_count));
        std::vector<Matrix> xs(static_cast<std::size_t>(spec_.window_size));
        for (Eigen::Index t = 0; t < spec_.window_size; ++t)
            xs[static_cast<std::size_t>(t)] = window.row(t);
        return clamp_score(1.0 / (1.0 + std::exp(-logits(xs, candidate.transpose())(0, 0))));
    }

    // Batched scores for b (window, candidate) pairs sharing the xs layout.
    Vector score_batch(const std::vector<Matrix>& xs, const Matrix& candidates) const {
        Matrix a = logits(xs, candidates);
        Vector s(a.rows());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            s(i) = clamp_score(1.0 / (1.0 + std::exp(-a(i, 0))));
        return s;
    }

    static double clamp_score(double s) {
        constexpr double eps = 1e-12;
        return std::min(1.0 - eps, std::max(eps, s));
    }

private:
    std::vector<Matrix> append_candidates(const std::vector<Matrix>& xs,
                                          const Matrix& candidates) const {
        if (static_cast<Eigen::Index>(xs.size()) != spec_.window_size)
            throw ShapeMismatch("discriminator expects " + std::to_string(spec_.window_size) +
                                " window steps, got " + std::to_string(xs.size()));
        if (candidates.cols() != spec_.feature_count)
            throw ShapeMismatch("candidate width " + std::to_string(candidates.cols()) +
                                " must equal feature count " +
                                std::to_string(spec_.feature_count));
        std::vector<Matrix> seq = xs;
        seq.push_back(candidates);
        return seq;
    }

    DiscriminatorSpec spec_;
    GruStack gru_;
    std::vector<Dense> head_;
};

// §-style conversion: reuse the deterministic topology (and, by default, its
// trained GRU weights) and extend the dense block around the injected noise.
struct GeneratorBuildOptions {
    bool copy_gru_weights = true;
    std::array<Eigen::Index, 2> mlp_extension_widths{0, 0}; // 0 -> default [2*cells, f]
};

inline GeneratorModel build_generator_from_deterministic(const DeterministicModel& det,
                                                         Eigen::Index noise_size,
                                                         std::uint64_t seed,
                                                         GeneratorBuildOptions opts = {}) {
    if (noise_size < 1)
        throw InvalidSpec("noise_size must be >= 1");
    GeneratorSpec spec;
    spec.base = det.spec();
    spec.noise_size = noise_size;
    spec.mlp_extension_widths = opts.mlp_extension_widths;
    if (spec.mlp_extension_widths[0] < 1)
        spec.mlp_extension_widths[0] = 2 * det.spec().gru_cells;
    if (spec.mlp_extension_widths[1] < 1)
        spec.mlp_extension_widths[1] = det.spec().feature_count;
    GeneratorModel gen(spec, seed);
    if (opts.copy_gru_weights) {
        auto src = det.gru().tensors();
        auto dst = gen.gru().tensors();
        for (std::size_t i = 0; i < src.size(); ++i)
            *dst[i] = *src[i];
    }
    return gen;
}

// Spec-level API mirrors: free-function names used across the pipeline.
inline DeterministicModel build_deterministic(const DeterministicSpec& spec, std::uint64_t seed) {
    return DeterministicModel(spec, seed);
}

inline Vector forecast_point(const DeterministicModel& model, const Matrix& window) {
    return model.forecast_point(window);
}

// n generator draws for one window; reproducible for a fixed seed.
inline Matrix sample_forecasts(const GeneratorModel& gen, const Matrix& window, Eigen::Index n,
                               std::uint64_t seed) {
    Rng rng(seed);
    return gen.sample(window, n, rng);
}

inline double discriminator_score(const DiscriminatorModel& disc, const Matrix& window,
                                  const Vector& candidate) {
    return disc.score(window, candidate);
}

} // namespace probcast
