#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dpfed/numeric.hpp"
#include "dpfed/params.hpp"
#include "dpfed/rng.hpp"

namespace dpfed {

struct TrainingBatch {
    Matrix features;           // n_samples x input_dim
    std::vector<int> labels;   // class indices, one per row

    std::size_t n() const { return features.rows; }

    void validate() const {
        if (features.rows != labels.size())
            throw std::invalid_argument(
                "TrainingBatch: feature rows and label count differ");
    }
};

struct EvalMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Probabilities are clamped here before the log in the cross-entropy loss.
inline constexpr double kProbClamp = 1e-12;

namespace detail {

inline void check_model_batch(const ParamVector& params,
                              const TrainingBatch& batch) {
    if (!params.shape_consistent())
        throw std::invalid_argument("params: values/shape mismatch");
    if (params.shapes.size() < 2)
        throw std::invalid_argument(
            "params: shape mismatch, degenerate single-layer model "
            "(schedule is ReLU..ReLU, Softmax and needs >= 2 layers)");
    batch.validate();
    if (batch.features.cols != params.shapes.front().rows)
        throw std::invalid_argument("batch: feature dim does not match model");
}

struct ForwardCache {
    std::vector<Matrix> pre;   // Z_1..Z_L
    std::vector<Matrix> act;   // A_0..A_L (A_0 = input, A_L = probabilities)
};

// Dense forward pass: ReLU on hidden layers, Softmax on the last.
inline ForwardCache forward_cached(const ParamVector& params,
                                   const TrainingBatch& batch) {
    check_model_batch(params, batch);
    const std::size_t layers = params.shapes.size();
    const std::size_t n = batch.n();

    ForwardCache cache;
    cache.act.resize(layers + 1);
    cache.pre.resize(layers);
    cache.act[0] = batch.features;

    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const LayerShape& s = params.shapes[l];
        const double* w = params.values.data() + off;
        const double* b = s.has_bias ? w + s.rows * s.cols : nullptr;
        const Matrix& in = cache.act[l];
        Matrix z(n, s.cols);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = in.row(i);
            double* zi = z.row(i);
            for (std::size_t c = 0; c < s.cols; ++c) zi[c] = b ? b[c] : 0.0;
            for (std::size_t r = 0; r < s.rows; ++r) {
                const double xr = x[r];
                const double* wr = w + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c) zi[c] += xr * wr[c];
            }
        }
        cache.pre[l] = z;
        Matrix a(n, s.cols);
        if (l + 1 < layers) {
            for (std::size_t i = 0; i < z.data.size(); ++i)
                a.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                const double* zi = z.row(i);
                double* ai = a.row(i);
                double zmax = zi[0];
                for (std::size_t c = 1; c < s.cols; ++c)
                    zmax = std::max(zmax, zi[c]);
                double sum = 0.0;
                for (std::size_t c = 0; c < s.cols; ++c) {
                    ai[c] = std::exp(zi[c] - zmax);
                    sum += ai[c];
                }
                for (std::size_t c = 0; c < s.cols; ++c) ai[c] /= sum;
            }
        }
        cache.act[l + 1] = a;
        off += s.entries();
    }
    return cache;
}

inline void check_labels(const TrainingBatch& batch, std::size_t classes) {
    for (int y : batch.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument("batch: label out of range");
}

}  // namespace detail

// He-style initialization: weights zero-mean gaussian with variance
// 2/fan_in, biases exactly zero. Deterministic for a fixed seed.
inline ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    ParamVector p;
    p.shapes = spec.shapes();
    p.values.reserve(p.expected_size());
    Rng rng(seed);
    for (const LayerShape& s : p.shapes) {
        const double stddev = std::sqrt(2.0 / static_cast<double>(s.rows));
        for (std::size_t i = 0; i < s.rows * s.cols; ++i)
            p.values.push_back(stddev * rng.gaussian());
        if (s.has_bias)
            for (std::size_t c = 0; c < s.cols; ++c) p.values.push_back(0.0);
    }
    return p;
}

// Class probabilities, one row per sample; rows sum to 1.
inline Matrix forward(const ParamVector& params, const TrainingBatch& batch) {
    return detail::forward_cached(params, batch).act.back();
}

// Mean categorical cross-entropy. The per-sample reduction uses an
// order-invariant accumulator, so permuting samples within a batch gives a
// bitwise-identical loss.
inline double loss(const ParamVector& params, const TrainingBatch& batch) {
    if (batch.n() == 0) throw std::invalid_argument("loss: empty batch");
    const Matrix probs = forward(params, batch);
    detail::check_labels(batch, probs.cols);
    OrderInvariantSum sum;
    for (std::size_t i = 0; i < batch.n(); ++i) {
        const double p = std::max(probs.at(i, static_cast<std::size_t>(
                                                  batch.labels[i])),
                                  kProbClamp);
        sum.add(-std::log(p));
    }
    return sum.mean();
}

// Exact mean gradient of the loss via backpropagation. Per-sample
// contributions are accumulated in batch order (sample-major), so the
// gradient of a batch with every sample duplicated in place is bitwise
// identical to the original gradient.
inline ParamVector grad(const ParamVector& params, const TrainingBatch& batch) {
    if (batch.n() == 0) throw std::invalid_argument("grad: empty batch");
    const auto cache = detail::forward_cached(params, batch);
    const std::size_t layers = params.shapes.size();
    const std::size_t n = batch.n();
    const std::size_t classes = params.shapes.back().cols;
    detail::check_labels(batch, classes);

    ParamVector g;
    g.shapes = params.shapes;
    g.values.assign(params.values.size(), 0.0);

    std::vector<std::size_t> offsets(layers);
    for (std::size_t l = 0; l < layers; ++l) offsets[l] = params.layer_offset(l);

    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> delta, delta_prev;
    for (std::size_t i = 0; i < n; ++i) {
        // softmax + cross-entropy: dZ_L = (p - y)/n
        delta.assign(classes, 0.0);
        const double* pi = cache.act[layers].row(i);
        for (std::size_t c = 0; c < classes; ++c) delta[c] = pi[c] * inv_n;
        delta[static_cast<std::size_t>(batch.labels[i])] -= inv_n;

        for (std::size_t l = layers; l-- > 0;) {
            const LayerShape& s = params.shapes[l];
            double* gw = g.values.data() + offsets[l];
            double* gb = s.has_bias ? gw + s.rows * s.cols : nullptr;
            const double* a_in = cache.act[l].row(i);
            for (std::size_t r = 0; r < s.rows; ++r) {
                const double ar = a_in[r];
                double* gwr = gw + r * s.cols;
                for (std::size_t c = 0; c < s.cols; ++c)
                    gwr[c] += ar * delta[c];
            }
            if (gb)
                for (std::size_t c = 0; c < s.cols; ++c) gb[c] += delta[c];
            if (l == 0) break;

            const double* w = params.values.data() + offsets[l];
            const double* z_prev = cache.pre[l - 1].row(i);
            delta_prev.assign(s.rows, 0.0);
            for (std::size_t r = 0; r < s.rows; ++r) {
                if (z_prev[r] <= 0.0) continue;  // ReLU gate
                const double* wr = w + r * s.cols;
                double acc = 0.0;
                for (std::size_t c = 0; c < s.cols; ++c)
                    acc += wr[c] * delta[c];
                delta_prev[r] = acc;
            }
            delta.swap(delta_prev);
        }
    }
    return g;
}

inline ParamVector sgd_step(const ParamVector& params, const ParamVector& g,
                            double lr) {
    require_same_shape(params, g, "sgd_step");
    if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be > 0");
    ParamVector out = params;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] -= lr * g.values[i];
    return out;
}

// Inverse-time decay: base_lr / (1 + alpha * round).
inline double lr_decay(double base_lr, double alpha, int round) {
    if (!(base_lr > 0.0)) throw std::invalid_argument("lr_decay: base_lr <= 0");
    if (alpha < 0.0) throw std::invalid_argument("lr_decay: alpha < 0");
    if (round < 0) throw std::invalid_argument("lr_decay: negative round");
    return base_lr / (1.0 + alpha * static_cast<double>(round));
}

// Predicted class per row: argmax with lowest-index tie break.
inline std::vector<int> predict(const ParamVector& params,
                                const TrainingBatch& batch) {
    const Matrix probs = forward(params, batch);
    std::vector<int> out(batch.n());
    for (std::size_t i = 0; i < batch.n(); ++i) {
        const double* pi = probs.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (pi[c] > pi[best]) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

// Accuracy plus macro-averaged precision/recall over the classes present in
// the batch; f1 is the harmonic mean of the macro precision and recall.
inline EvalMetrics evaluate(const ParamVector& params,
                            const TrainingBatch& batch) {
    if (batch.n() == 0) throw std::invalid_argument("evaluate: empty batch");
    const std::size_t classes = params.shapes.back().cols;
    detail::check_labels(batch, classes);
    const std::vector<int> pred = predict(params, batch);

    std::vector<std::size_t> tp(classes, 0), truth(classes, 0), chosen(classes, 0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.n(); ++i) {
        const auto y = static_cast<std::size_t>(batch.labels[i]);
        const auto p = static_cast<std::size_t>(pred[i]);
        ++truth[y];
        ++chosen[p];
        if (p == y) {
            ++tp[y];
            ++correct;
        }
    }

    double psum = 0.0, rsum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        if (truth[c] == 0) continue;  // absent classes excluded from macro
        ++present;
        rsum += static_cast<double>(tp[c]) / static_cast<double>(truth[c]);
        psum += chosen[c] == 0 ? 0.0
                               : static_cast<double>(tp[c]) /
                                     static_cast<double>(chosen[c]);
    }

    EvalMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(batch.n());
    m.precision = psum / static_cast<double>(present);
    m.recall = rsum / static_cast<double>(present);
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

}  // namespace dpfed
