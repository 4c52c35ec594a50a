#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "probcast/common.hpp"
#include "probcast/dataset.hpp"
#include "probcast/errors.hpp"
#include "probcast/evaluation.hpp"
#include "probcast/models.hpp"

namespace probcast {

// ---- losses ----

inline double loss_mae(const Matrix& predictions, const Matrix& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
        throw ShapeMismatch("loss_mae: " + shape_str(predictions) + " vs " + shape_str(targets));
    return (predictions - targets).cwiseAbs().mean();
}

inline Matrix loss_mae_backward(const Matrix& predictions, const Matrix& targets) {
    const double scale = 1.0 / static_cast<double>(predictions.size());
    return (predictions - targets).array().sign().matrix() * scale;
}

namespace detail {
inline void check_scores(const Vector& s, const char* who) {
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (!(s(i) > 0.0 && s(i) < 1.0))
            throw DomainError(std::string(who) + ": score " + std::to_string(s(i)) +
                              " outside (0,1)");
}
} // namespace detail

// Discriminator ascends log D(real) + log(1 - D(fake)); minimized negation.
inline double loss_discriminator(const Vector& real_scores, const Vector& fake_scores) {
    if (real_scores.size() != fake_scores.size())
        throw ShapeMismatch("loss_discriminator: score vectors differ in length");
    if (real_scores.size() == 0)
        throw ShapeMismatch("loss_discriminator: empty batch");
    detail::check_scores(real_scores, "loss_discriminator");
    detail::check_scores(fake_scores, "loss_discriminator");
    return -(real_scores.array().log().mean() + (1.0 - fake_scores.array()).log().mean());
}

// Non-saturating generator objective: -mean log D(fake).
inline double loss_generator(const Vector& fake_scores) {
    if (fake_scores.size() == 0)
        throw ShapeMismatch("loss_generator: empty batch");
    detail::check_scores(fake_scores, "loss_generator");
    return -fake_scores.array().log().mean();
}

// ---- optimizer ----

class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
        if (m_.empty()) {
            for (const Matrix* p : params) {
                m_.push_back(Matrix::Zero(p->rows(), p->cols()));
                v_.push_back(Matrix::Zero(p->rows(), p->cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
            v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * grads[i].array().square()).matrix();
            *params[i] -= (lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_)).matrix();
        }
    }

    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

// ---- configuration and reporting ----

struct TrainConfig {
    Eigen::Index batch_size = 64;
    Eigen::Index max_epochs = 200;
    double lr_deterministic = 2e-4;
    double lr_generator = 2e-4;
    double lr_discriminator = 2e-4;
    Eigen::Index disc_steps_per_gen_step = 1;
    Eigen::Index patience = 20;
    std::uint64_t seed = 0;
    Eigen::Index eval_samples_per_window = 200;
    double adam_beta1 = 0.9; // the GAN phase defaults this to 0.5
    double adam_beta2 = 0.999;
    bool saturating_generator_loss = false;
    CrpsPairing crps_pairing = CrpsPairing::Halves;

    void validate() const {
        if (batch_size < 1)
            throw InvalidSpec("batch_size must be >= 1");
        if (max_epochs < 0)
            throw InvalidSpec("max_epochs must be >= 0");
        if (lr_deterministic < 0 || lr_generator < 0 || lr_discriminator < 0)
            throw InvalidSpec("learning rates must be >= 0");
        if (disc_steps_per_gen_step < 1)
            throw InvalidSpec("disc_steps_per_gen_step must be >= 1");
        if (patience < 1 && max_epochs > 0)
            throw InvalidSpec("patience must be >= 1");
        if (max_epochs > 0 && patience > max_epochs)
            throw InvalidSpec("patience must be <= max_epochs");
        if (eval_samples_per_window < 2 || eval_samples_per_window % 2 != 0)
            throw InvalidSpec("eval_samples_per_window must be even and >= 2");
    }
};

struct TrainReport {
    std::string phase; // "deterministic" | "gan"
    std::vector<double> train_loss;       // deterministic: per-epoch mean batch MAE
    std::vector<double> disc_loss;        // gan: end-of-epoch loss on the fixed probe batch
    std::vector<double> gen_loss;
    std::vector<double> real_score_mean;  // gan probe telemetry, in (0,1)
    std::vector<double> fake_score_mean;
    std::vector<double> validation_score; // MAE or CRPS*, one entry per epoch
    int best_epoch = -1;
    double best_validation = std::numeric_limits<double>::quiet_NaN();
    long disc_updates = 0;
    long gen_updates = 0;
    double wall_clock_seconds = 0.0;
    std::uint64_t seed = 0;
};

inline nlohmann::ordered_json train_report_to_json(const TrainReport& r) {
    nlohmann::ordered_json j;
    j["phase"] = r.phase;
    j["best_epoch"] = r.best_epoch;
    j["best_validation"] = r.best_epoch >= 0 ? r.best_validation : 0.0;
    j["validation_score"] = r.validation_score;
    if (r.phase == "gan") {
        j["disc_loss"] = r.disc_loss;
        j["gen_loss"] = r.gen_loss;
        j["real_score_mean"] = r.real_score_mean;
        j["fake_score_mean"] = r.fake_score_mean;
        j["disc_updates"] = r.disc_updates;
        j["gen_updates"] = r.gen_updates;
    } else {
        j["train_loss"] = r.train_loss;
    }
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    j["seed"] = r.seed;
    return j;
}

inline void save_train_report(const std::string& path, const TrainReport& r) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path);
    out << train_report_to_json(r).dump(2) << "\n";
}

namespace detail {

inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

inline double validation_mae(const DeterministicModel& model, const WindowSet& valid) {
    constexpr Eigen::Index chunk = 512;
    double acc = 0.0;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index start = 0; start < valid.size(); start += chunk) {
        const Eigen::Index len = std::min(chunk, valid.size() - start);
        idx.resize(static_cast<std::size_t>(len));
        for (Eigen::Index k = 0; k < len; ++k)
            idx[static_cast<std::size_t>(k)] = start + k;
        Matrix preds = model.forward(valid.gather_conditions(idx));
        acc += (preds - valid.gather_targets(idx)).cwiseAbs().sum();
    }
    return acc / static_cast<double>(valid.size() * valid.features());
}

inline double softplus(double x) {
    // log(1 + e^x) without overflow
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

} // namespace detail

// Gradient descent on MAE over shuffled mini-batches; keeps the checkpoint
// with minimum validation MAE and stops after `patience` epochs without
// improvement. The model is left at its best state.
inline TrainReport train_deterministic(DeterministicModel& model, const WindowSet& train,
                                       const WindowSet& valid, const TrainConfig& cfg) {
    cfg.validate();
    if (train.size() < 1)
        throw TooShort("train_deterministic needs at least one training window");
    if (train.window() != model.spec().window_size || train.features() != model.spec().feature_count)
        throw ShapeMismatch("training windows do not match the model spec");

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.phase = "deterministic";
    report.seed = cfg.seed;

    auto params = model.tensors();
    auto grads = make_grad_store(params);
    Adam opt(cfg.lr_deterministic, cfg.adam_beta1, cfg.adam_beta2);

    Vector best_params;
    Eigen::Index since_improve = 0;

    for (Eigen::Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, 0xD37E7ull, static_cast<std::uint64_t>(epoch)));
        auto order = detail::shuffled_indices(train.size(), rng);

        double epoch_loss = 0.0;
        Eigen::Index batches = 0;
        std::vector<Eigen::Index> batch_idx;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const auto len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                   order.size() - at);
            batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(at + len));
            auto xs = train.gather_conditions(batch_idx);
            Matrix targets = train.gather_targets(batch_idx);

            DeterministicModel::Cache cache;
            Matrix preds = model.forward(xs, cache);
            const double loss = loss_mae(preds, targets);
            if (!std::isfinite(loss))
                throw Diverged("non-finite training loss at epoch " + std::to_string(epoch));
            zero_grads(grads);
            model.backward(loss_mae_backward(preds, targets), cache, grads);
            opt.step(params, grads);
            epoch_loss += loss;
            ++batches;
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(batches));

        const double val = detail::validation_mae(model, valid);
        if (!std::isfinite(val))
            throw Diverged("non-finite validation MAE at epoch " + std::to_string(epoch));
        report.validation_score.push_back(val);

        if (report.best_epoch < 0 || val < report.best_validation) {
            report.best_validation = val;
            report.best_epoch = static_cast<int>(epoch);
            best_params = pack_tensors(params);
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    if (report.best_epoch >= 0)
        unpack_tensors(params, best_params);
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// One discriminator update on a batch: real targets vs. detached generator
// draws. Returns the loss value. Exposed for loop-accounting tests.
inline double gan_discriminator_step(const GeneratorModel& gen, DiscriminatorModel& disc,
                                     const std::vector<Matrix>& xs, const Matrix& targets,
                                     Rng& rng, Adam& opt, std::vector<Matrix>& grads) {
    const auto b = targets.rows();
    Matrix z = random_normal_matrix(b, gen.spec().noise_size, rng);
    Matrix fake = gen.forward(xs, z); // detached: no generator gradients here

    DiscriminatorModel::Cache cache_real, cache_fake;
    Matrix a_real = disc.logits(xs, targets, cache_real);
    Matrix a_fake = disc.logits(xs, fake, cache_fake);

    // L = mean softplus(-a_real) + mean softplus(a_fake)
    double loss = 0.0;
    for (Eigen::Index i = 0; i < b; ++i)
        loss += detail::softplus(-a_real(i, 0)) + detail::softplus(a_fake(i, 0));
    loss /= static_cast<double>(b);
    if (!std::isfinite(loss))
        throw Diverged("non-finite discriminator loss");

    const double inv_b = 1.0 / static_cast<double>(b);
    Matrix da_real = (sigmoid(a_real).array() - 1.0).matrix() * inv_b;
    Matrix da_fake = sigmoid(a_fake) * inv_b;

    zero_grads(grads);
    disc.backward(da_real, cache_real, grads);
    disc.backward(da_fake, cache_fake, grads);
    opt.step(disc.tensors(), grads);
    return loss;
}

// One generator update through the frozen discriminator. Non-saturating by
// default (-log D(fake)); the saturating Eq.-style form is a config flag.
inline double gan_generator_step(GeneratorModel& gen, const DiscriminatorModel& disc,
                                 const std::vector<Matrix>& xs, Rng& rng, Adam& opt,
                                 std::vector<Matrix>& gen_grads,
                                 std::vector<Matrix>& disc_grad_scratch, bool saturating) {
    const auto b = xs.front().rows();
    Matrix z = random_normal_matrix(b, gen.spec().noise_size, rng);

    GeneratorModel::Cache gen_cache;
    Matrix fake = gen.forward(xs, z, gen_cache);

    DiscriminatorModel::Cache disc_cache;
    Matrix a_fake = disc.logits(xs, fake, disc_cache);

    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    Matrix da_fake(b, 1);
    if (!saturating) {
        // L = mean softplus(-a); dL/da = (sigma(a) - 1)/b
        for (Eigen::Index i = 0; i < b; ++i)
            loss += detail::softplus(-a_fake(i, 0));
        da_fake = (sigmoid(a_fake).array() - 1.0).matrix() * inv_b;
    } else {
        // L = mean log(1 - sigma(a)) = -mean softplus(a); dL/da = -sigma(a)/b
        for (Eigen::Index i = 0; i < b; ++i)
            loss -= detail::softplus(a_fake(i, 0));
        da_fake = -sigmoid(a_fake) * inv_b;
    }
    loss *= inv_b;
    if (!std::isfinite(loss))
        throw Diverged("non-finite generator loss");

    Matrix dfake;
    zero_grads(disc_grad_scratch);
    disc.backward(da_fake, disc_cache, disc_grad_scratch, &dfake);

    zero_grads(gen_grads);
    gen.backward(dfake, gen_cache, gen_grads);
    opt.step(gen.tensors(), gen_grads);
    return loss;
}

// Alternating adversarial optimization of the value function: per batch,
// disc_steps_per_gen_step discriminator updates then one generator update.
// After each epoch the probe batch is re-scored (fixed data, fixed noise) and
// validation CRPS* decides the retained generator.
inline TrainReport train_gan(GeneratorModel& gen, DiscriminatorModel& disc,
                             const WindowSet& train, const WindowSet& valid,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (train.size() < 1)
        throw TooShort("train_gan needs at least one training window");
    if (gen.spec().base.window_size != disc.spec().window_size ||
        gen.spec().base.feature_count != disc.spec().feature_count)
        throw ShapeMismatch("generator and discriminator disagree on (window, features)");
    if (train.window() != gen.spec().base.window_size ||
        train.features() != gen.spec().base.feature_count)
        throw ShapeMismatch("training windows do not match the generator spec");

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.phase = "gan";
    report.seed = cfg.seed;

    auto gen_grads = make_grad_store(gen.tensors());
    auto disc_grads = make_grad_store(disc.tensors());
    auto disc_scratch = make_grad_store(disc.tensors());
    Adam opt_gen(cfg.lr_generator, cfg.adam_beta1, cfg.adam_beta2);
    Adam opt_disc(cfg.lr_discriminator, cfg.adam_beta1, cfg.adam_beta2);

    // Fixed probe batch + noise: recorded per-epoch losses are end-of-epoch
    // evaluations on it, so frozen players yield a constant series.
    const Eigen::Index probe_b = std::min<Eigen::Index>(cfg.batch_size, train.size());
    std::vector<Eigen::Index> probe_idx(static_cast<std::size_t>(probe_b));
    std::iota(probe_idx.begin(), probe_idx.end(), Eigen::Index{0});
    const auto probe_xs = train.gather_conditions(probe_idx);
    const Matrix probe_targets = train.gather_targets(probe_idx);
    Rng probe_rng(mix_seed(cfg.seed, 0x9B0BEull));
    const Matrix probe_z = random_normal_matrix(probe_b, gen.spec().noise_size, probe_rng);

    const std::uint64_t val_seed = mix_seed(cfg.seed, 0x7A11Dull);

    Vector best_params;
    Eigen::Index since_improve = 0;

    for (Eigen::Index epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, 0x6A9ull, static_cast<std::uint64_t>(epoch)));
        auto order = detail::shuffled_indices(train.size(), rng);

        std::vector<Eigen::Index> batch_idx;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
            const auto len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size),
                                                   order.size() - at);
            batch_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                             order.begin() + static_cast<std::ptrdiff_t>(at + len));
            auto xs = train.gather_conditions(batch_idx);
            Matrix targets = train.gather_targets(batch_idx);

            for (Eigen::Index s = 0; s < cfg.disc_steps_per_gen_step; ++s) {
                gan_discriminator_step(gen, disc, xs, targets, rng, opt_disc, disc_grads);
                ++report.disc_updates;
            }
            gan_generator_step(gen, disc, xs, rng, opt_gen, gen_grads, disc_scratch,
                               cfg.saturating_generator_loss);
            ++report.gen_updates;
        }

        // probe evaluation
        {
            Matrix fake = gen.forward(probe_xs, probe_z);
            Matrix a_real = disc.logits(probe_xs, probe_targets);
            Matrix a_fake = disc.logits(probe_xs, fake);
            double dl = 0.0, gl = 0.0, rmean = 0.0, fmean = 0.0;
            for (Eigen::Index i = 0; i < probe_b; ++i) {
                dl += detail::softplus(-a_real(i, 0)) + detail::softplus(a_fake(i, 0));
                gl += cfg.saturating_generator_loss ? -detail::softplus(a_fake(i, 0))
                                                    : detail::softplus(-a_fake(i, 0));
                rmean += DiscriminatorModel::clamp_score(1.0 / (1.0 + std::exp(-a_real(i, 0))));
                fmean += DiscriminatorModel::clamp_score(1.0 / (1.0 + std::exp(-a_fake(i, 0))));
            }
            const double inv = 1.0 / static_cast<double>(probe_b);
            if (!std::isfinite(dl) || !std::isfinite(gl))
                throw Diverged("non-finite probe loss at epoch " + std::to_string(epoch));
            report.disc_loss.push_back(dl * inv);
            report.gen_loss.push_back(gl * inv);
            report.real_score_mean.push_back(rmean * inv);
            report.fake_score_mean.push_back(fmean * inv);
        }

        // validation CRPS* with a fixed noise stream across epochs
        const double val =
            evaluate_probabilistic(gen, valid, cfg.eval_samples_per_window, val_seed, nullptr,
                                   cfg.crps_pairing)
                .crps_overall;
        if (!std::isfinite(val))
            throw Diverged("non-finite validation CRPS at epoch " + std::to_string(epoch));
        report.validation_score.push_back(val);

        if (report.best_epoch < 0 || val < report.best_validation) {
            report.best_validation = val;
            report.best_epoch = static_cast<int>(epoch);
            best_params = pack_tensors(gen.tensors());
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    if (report.best_epoch >= 0)
        unpack_tensors(gen.tensors(), best_params);
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace probcast
