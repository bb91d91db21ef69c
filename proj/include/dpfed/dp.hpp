#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "dpfed/numeric.hpp"
#include "dpfed/params.hpp"
#include "dpfed/rng.hpp"

namespace dpfed {

enum class SensitivityPolicy {
    PaperFaithful,  // sensitivity = realized L2 norm of the update
    Clipped,        // update clipped to clip_norm; sensitivity = clip_norm
};

struct PrivacySpec {
    bool enabled = true;
    double epsilon_total = 1.0;
    double delta = 1e-5;
    SensitivityPolicy policy = SensitivityPolicy::Clipped;
    double clip_norm = 1.0;

    void validate() const {
        if (!(epsilon_total > 0.0))
            throw std::invalid_argument("PrivacySpec: epsilon must be > 0");
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("PrivacySpec: delta must be in (0,1)");
        if (policy == SensitivityPolicy::Clipped && !(clip_norm > 0.0))
            throw std::invalid_argument("PrivacySpec: clip_norm must be > 0");
    }
};

// Record of one privatization: b = sensitivity / epsilon_round, plus the
// L2 norm of the noise actually injected.
struct NoiseReceipt {
    double scale = 0.0;
    double sensitivity = 0.0;
    double epsilon_round = 0.0;
    double noise_l2 = 0.0;
};

// i.i.d. Laplace(0, scale) draws by inverse CDF:
//   x = -scale * sign(u) * ln(1 - 2|u|),  u uniform in (-0.5, 0.5).
// Exactly one engine output per draw, so sequences replay bit for bit.
inline std::vector<double> laplace_sample(double scale, std::size_t count,
                                          Rng& rng) {
    if (!(scale > 0.0))
        throw std::invalid_argument("laplace_sample: scale must be > 0");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double u = rng.uniform_sym();
        const double sign = u < 0.0 ? -1.0 : (u > 0.0 ? 1.0 : 0.0);
        out[i] = -scale * sign * std::log1p(-2.0 * std::abs(u));
    }
    return out;
}

inline double compute_sensitivity(const ParamVector& update,
                                  const PrivacySpec& spec) {
    if (!all_finite(update))
        throw std::invalid_argument("compute_sensitivity: non-finite update");
    if (spec.policy == SensitivityPolicy::Clipped) return spec.clip_norm;
    return l2_norm(update);
}

// Rescale the update to L2 norm at most clip_norm; zero updates unchanged.
inline ParamVector clip_update(const ParamVector& update, double clip_norm) {
    if (!(clip_norm > 0.0))
        throw std::invalid_argument("clip_update: clip_norm must be > 0");
    const double norm = l2_norm(update);
    if (norm <= clip_norm) return update;
    const double s = clip_norm / norm;
    ParamVector out = update;
    for (double& v : out.values) v *= s;
    return out;
}

struct PrivatizedUpdate {
    ParamVector update;
    NoiseReceipt receipt;
};

// Add per-coordinate Laplace(0, sensitivity/epsilon_round) noise to the
// update. Under the Clipped policy the update is clipped first. With
// privacy disabled this is a bitwise pass-through. An exactly zero update
// under PaperFaithful has zero sensitivity and is passed through with
// scale recorded as 0.
inline PrivatizedUpdate privatize_update(const ParamVector& update,
                                         double epsilon_round,
                                         const PrivacySpec& spec, Rng& rng) {
    PrivatizedUpdate out;
    out.receipt.epsilon_round = epsilon_round;
    if (!spec.enabled) {
        out.update = update;
        return out;
    }
    if (!(epsilon_round > 0.0))
        throw std::invalid_argument(
            "privatize_update: epsilon_round must be > 0");

    out.update = spec.policy == SensitivityPolicy::Clipped
                     ? clip_update(update, spec.clip_norm)
                     : update;
    const double sensitivity = compute_sensitivity(out.update, spec);
    out.receipt.sensitivity = sensitivity;
    if (sensitivity == 0.0) return out;  // degenerate Laplace scale

    const double scale = sensitivity / epsilon_round;
    out.receipt.scale = scale;
    const std::vector<double> noise =
        laplace_sample(scale, out.update.size(), rng);
    for (std::size_t i = 0; i < noise.size(); ++i)
        out.update.values[i] += noise[i];
    out.receipt.noise_l2 = l2_norm(noise);
    return out;
}

// Upper bound on the excess empirical risk introduced by the mechanism:
//   2 * sensitivity^2 * ln(1/delta) / (epsilon^2 * rounds).
inline double risk_bound(double sensitivity, double epsilon_total, double delta,
                         int rounds) {
    if (sensitivity < 0.0)
        throw std::invalid_argument("risk_bound: sensitivity < 0");
    if (!(epsilon_total > 0.0))
        throw std::invalid_argument("risk_bound: epsilon must be > 0");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("risk_bound: delta must be in (0,1)");
    if (rounds <= 0) throw std::invalid_argument("risk_bound: rounds <= 0");
    return 2.0 * sensitivity * sensitivity * std::log(1.0 / delta) /
           (epsilon_total * epsilon_total * static_cast<double>(rounds));
}

struct NoiseAudit {
    double mean = 0.0;
    double variance = 0.0;       // sample variance (n-1 denominator)
    double ks_distance = 0.0;    // sup |empirical CDF - Laplace CDF|
};

inline double laplace_cdf(double x, double scale) {
    const double sign = x < 0.0 ? -1.0 : (x > 0.0 ? 1.0 : 0.0);
    return 0.5 + 0.5 * sign * (1.0 - std::exp(-std::abs(x) / scale));
}

// Empirical check of the sampler against the analytic distribution.
inline NoiseAudit noise_audit(double scale, std::size_t draws, Rng& rng) {
    if (draws < 1000)
        throw std::invalid_argument("noise_audit: need at least 1000 draws");
    std::vector<double> xs = laplace_sample(scale, draws, rng);

    NoiseAudit audit;
    double sum = 0.0;
    for (double x : xs) sum += x;
    audit.mean = sum / static_cast<double>(draws);
    double ss = 0.0;
    for (double x : xs) ss += (x - audit.mean) * (x - audit.mean);
    audit.variance = ss / static_cast<double>(draws - 1);

    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
        const double f = laplace_cdf(xs[i], scale);
        const double lo = static_cast<double>(i) / static_cast<double>(draws);
        const double hi =
            static_cast<double>(i + 1) / static_cast<double>(draws);
        d = std::max(d, std::max(std::abs(f - lo), std::abs(f - hi)));
    }
    audit.ks_distance = d;
    return audit;
}

}  // namespace dpfed
