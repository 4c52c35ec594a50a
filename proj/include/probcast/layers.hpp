#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "probcast/common.hpp"
#include "probcast/errors.hpp"

namespace probcast {

// Elementwise helpers over Eigen arrays.
inline Matrix sigmoid(const Matrix& a) {
    return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

enum class Activation { Linear, ReLU };

// ---- parameter plumbing over tensor lists ----

inline Eigen::Index count_tensor_params(const std::vector<Matrix*>& ts) {
    Eigen::Index n = 0;
    for (const Matrix* m : ts)
        n += m->size();
    return n;
}

inline Vector pack_tensors(const std::vector<Matrix*>& ts) {
    Vector out(count_tensor_params(ts));
    Eigen::Index at = 0;
    for (const Matrix* m : ts) {
        out.segment(at, m->size()) = Eigen::Map<const Vector>(m->data(), m->size());
        at += m->size();
    }
    return out;
}

inline void unpack_tensors(const std::vector<Matrix*>& ts, const Vector& flat) {
    if (flat.size() != count_tensor_params(ts))
        throw ShapeMismatch("flat parameter vector has wrong length");
    Eigen::Index at = 0;
    for (Matrix* m : ts) {
        Eigen::Map<Vector>(m->data(), m->size()) = flat.segment(at, m->size());
        at += m->size();
    }
}

inline std::vector<Matrix> make_grad_store(const std::vector<Matrix*>& ts) {
    std::vector<Matrix> g;
    g.reserve(ts.size());
    for (const Matrix* m : ts)
        g.push_back(Matrix::Zero(m->rows(), m->cols()));
    return g;
}

inline void zero_grads(std::vector<Matrix>& g) {
    for (auto& m : g)
        m.setZero();
}

// Fully connected layer, batch rows: y = act(x W + b).
struct Dense {
    Matrix W; // in x out
    Matrix b; // 1 x out
    Activation act = Activation::Linear;

    Eigen::Index in() const { return W.rows(); }
    Eigen::Index out() const { return W.cols(); }

    struct Cache {
        Matrix x;   // b x in
        Matrix y;   // b x out (post-activation)
    };

    Matrix forward(const Matrix& x) const {
        Matrix pre = (x * W).rowwise() + RowVector(b.row(0));
        if (act == Activation::ReLU)
            return pre.cwiseMax(0.0);
        return pre;
    }

    Matrix forward(const Matrix& x, Cache& cache) const {
        cache.x = x;
        cache.y = forward(x);
        return cache.y;
    }

    // dW/db accumulate; returns dL/dx.
    Matrix backward(const Matrix& dy, const Cache& cache, Matrix& dW, Matrix& db) const {
        Matrix dpre = dy;
        if (act == Activation::ReLU)
            dpre = (cache.y.array() > 0.0).select(dpre, 0.0);
        dW += cache.x.transpose() * dpre;
        db += dpre.colwise().sum();
        return dpre * W.transpose();
    }
};

// One GRU layer (Cho et al. formulation):
//   z_t = sigma(x_t Wz + h_{t-1} Uz + bz)
//   r_t = sigma(x_t Wr + h_{t-1} Ur + br)
//   n_t = tanh (x_t Wn + (r_t o h_{t-1}) Un + bn)
//   h_t = z_t o h_{t-1} + (1 - z_t) o n_t
struct GruLayer {
    Matrix Wz, Wr, Wn; // in x cells
    Matrix Uz, Ur, Un; // cells x cells
    Matrix bz, br, bn; // 1 x cells

    Eigen::Index in() const { return Wz.rows(); }
    Eigen::Index cells() const { return Wz.cols(); }
};

// Stacked GRU over a fixed-length sequence; sequence-to-one use keeps only the
// last hidden state of the top layer visible to callers.
class GruStack {
public:
    GruStack() = default;
    GruStack(Eigen::Index input_size, Eigen::Index cells, Eigen::Index layers) {
        layers_.resize(static_cast<std::size_t>(layers));
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const Eigen::Index in = (l == 0) ? input_size : cells;
            auto& g = layers_[l];
            g.Wz.resize(in, cells); g.Wr.resize(in, cells); g.Wn.resize(in, cells);
            g.Uz.resize(cells, cells); g.Ur.resize(cells, cells); g.Un.resize(cells, cells);
            g.bz.resize(1, cells); g.br.resize(1, cells); g.bn.resize(1, cells);
        }
    }

    Eigen::Index layers() const { return static_cast<Eigen::Index>(layers_.size()); }
    Eigen::Index cells() const { return layers_.empty() ? 0 : layers_[0].cells(); }
    Eigen::Index input_size() const { return layers_.empty() ? 0 : layers_[0].in(); }

    std::vector<Matrix*> tensors() {
        std::vector<Matrix*> out;
        for (auto& g : layers_)
            for (Matrix* m : {&g.Wz, &g.Wr, &g.Wn, &g.Uz, &g.Ur, &g.Un, &g.bz, &g.br, &g.bn})
                out.push_back(m);
        return out;
    }
    std::vector<Matrix*> tensors() const { return const_cast<GruStack*>(this)->tensors(); }

    static constexpr int kTensorsPerLayer = 9;

    struct Cache {
        std::vector<Matrix> xs;                 // input sequence, w entries of b x in
        std::vector<std::vector<Matrix>> h;     // [layer][t] with t in 0..w (h[.][0] = 0)
        std::vector<std::vector<Matrix>> z, r, n; // [layer][t] with t in 0..w-1
    };

    // Inference pass: returns last hidden state of the top layer, b x cells.
    Matrix forward(const std::vector<Matrix>& xs) const {
        const auto b = xs.empty() ? 0 : xs.front().rows();
        std::vector<Matrix> h(layers_.size());
        for (std::size_t l = 0; l < layers_.size(); ++l)
            h[l] = Matrix::Zero(b, layers_[l].cells());
        for (const auto& x : xs) {
            const Matrix* input = &x;
            for (std::size_t l = 0; l < layers_.size(); ++l) {
                h[l] = step(layers_[l], *input, h[l], nullptr, nullptr, nullptr);
                input = &h[l];
            }
        }
        return h.back();
    }

    Matrix forward(const std::vector<Matrix>& xs, Cache& cache) const {
        const auto w = xs.size();
        const auto b = xs.empty() ? 0 : xs.front().rows();
        cache.xs = xs;
        cache.h.assign(layers_.size(), {});
        cache.z.assign(layers_.size(), {});
        cache.r.assign(layers_.size(), {});
        cache.n.assign(layers_.size(), {});
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            cache.h[l].resize(w + 1);
            cache.h[l][0] = Matrix::Zero(b, layers_[l].cells());
            cache.z[l].resize(w);
            cache.r[l].resize(w);
            cache.n[l].resize(w);
        }
        for (std::size_t t = 0; t < w; ++t) {
            const Matrix* input = &cache.xs[t];
            for (std::size_t l = 0; l < layers_.size(); ++l) {
                cache.h[l][t + 1] = step(layers_[l], *input, cache.h[l][t],
                                         &cache.z[l][t], &cache.r[l][t], &cache.n[l][t]);
                input = &cache.h[l][t + 1];
            }
        }
        return cache.h.back().back();
    }

    // Backpropagation through time from the gradient of the top layer's last
    // hidden state. Parameter gradients accumulate into `grads` starting at
    // `offset` (layout per tensors()). When dxs is non-null it receives
    // dL/dx_t for every timestep (needed for input-side gradients).
    void backward(const Matrix& dh_last, const Cache& cache,
                  std::vector<Matrix>& grads, std::size_t offset,
                  std::vector<Matrix>* dxs = nullptr) const {
        const auto w = cache.xs.size();
        const auto b = dh_last.rows();
        const auto n_layers = layers_.size();

        // dH[t]: gradient arriving at layer-l hidden state h_t from above.
        std::vector<Matrix> dH(w, Matrix::Zero(b, cells()));
        dH[w - 1] = dh_last;

        for (std::size_t li = n_layers; li-- > 0;) {
            const auto& g = layers_[li];
            std::vector<Matrix> dX(w);
            Matrix carry = Matrix::Zero(b, g.cells());
            for (std::size_t t = w; t-- > 0;) {
                const Matrix G = dH[t] + carry;
                const Matrix& h_prev = cache.h[li][t];
                const Matrix& z = cache.z[li][t];
                const Matrix& r = cache.r[li][t];
                const Matrix& n = cache.n[li][t];
                const Matrix& x = (li == 0) ? cache.xs[t] : cache.h[li - 1][t + 1];

                const Matrix da_n =
                    (G.array() * (1.0 - z.array()) * (1.0 - n.array().square())).matrix();
                const Matrix da_z =
                    (G.array() * (h_prev.array() - n.array()) * z.array() * (1.0 - z.array()))
                        .matrix();
                const Matrix dn_un = da_n * g.Un.transpose();
                const Matrix da_r =
                    (dn_un.array() * h_prev.array() * r.array() * (1.0 - r.array())).matrix();

                carry = (G.array() * z.array()).matrix() +
                        (dn_un.array() * r.array()).matrix() +
                        da_z * g.Uz.transpose() + da_r * g.Ur.transpose();

                dX[t] = da_z * g.Wz.transpose() + da_r * g.Wr.transpose() +
                        da_n * g.Wn.transpose();

                const std::size_t base = offset + li * kTensorsPerLayer;
                const Matrix rh = (r.array() * h_prev.array()).matrix();
                grads[base + 0] += x.transpose() * da_z;
                grads[base + 1] += x.transpose() * da_r;
                grads[base + 2] += x.transpose() * da_n;
                grads[base + 3] += h_prev.transpose() * da_z;
                grads[base + 4] += h_prev.transpose() * da_r;
                grads[base + 5] += rh.transpose() * da_n;
                grads[base + 6] += da_z.colwise().sum();
                grads[base + 7] += da_r.colwise().sum();
                grads[base + 8] += da_n.colwise().sum();
            }
            if (li > 0) {
                dH = std::move(dX);
            } else if (dxs) {
                *dxs = std::move(dX);
            }
        }
    }

    // Parameter tensor layout: grads[offset + layer*9 + k] with k indexing
    // {Wz, Wr, Wn, Uz, Ur, Un, bz, br, bn}.

private:
    static Matrix step(const GruLayer& g, const Matrix& x, const Matrix& h_prev,
                       Matrix* z_out, Matrix* r_out, Matrix* n_out) {
        Matrix z = sigmoid(((x * g.Wz + h_prev * g.Uz).rowwise() + RowVector(g.bz.row(0))));
        Matrix r = sigmoid(((x * g.Wr + h_prev * g.Ur).rowwise() + RowVector(g.br.row(0))));
        Matrix n = (((x * g.Wn + (r.array() * h_prev.array()).matrix() * g.Un).rowwise() +
                     RowVector(g.bn.row(0)))
                        .array()
                        .tanh())
                       .matrix();
        Matrix h = (z.array() * h_prev.array() + (1.0 - z.array()) * n.array()).matrix();
        if (z_out) *z_out = std::move(z);
        if (r_out) *r_out = std::move(r);
        if (n_out) *n_out = std::move(n);
        return h;
    }

    std::vector<GruLayer> layers_;
};

} // namespace probcast
