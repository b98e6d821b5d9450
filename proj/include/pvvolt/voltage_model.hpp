#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pvvolt/dataset.hpp"
#include "pvvolt/errors.hpp"
#include "pvvolt/gamma_mle.hpp"
#include "pvvolt/matrix.hpp"
#include "pvvolt/rng.hpp"

namespace pvvolt {

enum class Sign { plus, minus };

inline char sign_char(Sign s) { return s == Sign::plus ? '+' : '-'; }

// One (cluster, sign) term of the composite model. `params` is absent
// exactly when the subset was empty, in which case the weight is zero.
struct ModelComponent {
    std::size_t cluster = 0;  // 1-based, matching the cluster ordering
    Sign sign = Sign::plus;
    double weight = 0.0;
    std::optional<GammaParams> params;
    std::size_t sample_count = 0;
};

// Fitted model for one consumer: v = beta * p + sum(pi+ u+) - sum(pi- u-).
struct VoltageModel {
    double beta = 0.0;
    std::vector<ModelComponent> components;
};

inline void validate_model(const VoltageModel& m, const std::string& where) {
    KahanAccumulator total;
    for (const auto& c : m.components) {
        if (!(c.weight >= 0.0)) {
            throw DataError(where + ": negative component weight");
        }
        const bool empty = c.sample_count == 0;
        if (empty != !c.params.has_value() || empty != (c.weight == 0.0)) {
            throw DataError(where + ": weight, sample count and params disagree on "
                                    "component emptiness");
        }
        if (c.params) validate_gamma_params(*c.params, where);
        total.add(c.weight);
    }
    if (std::fabs(total.value() - 1.0) > 1e-12) {
        throw DataError(where + ": component weights sum to " +
                        std::to_string(total.value()) + ", expected 1");
    }
}

// Sorted Monte-Carlo sample of the composite random variable.
struct CompositeDistribution {
    std::vector<double> samples;  // ascending
    std::uint64_t seed = 0;
};

inline CompositeDistribution make_composite_from_samples(std::vector<double> samples,
                                                         std::uint64_t seed = 0) {
    if (samples.size() < 10000) {
        throw ConfigError(
            "voltage_model.make_composite_from_samples: need at least 1e4 samples");
    }
    std::sort(samples.begin(), samples.end());
    return CompositeDistribution{std::move(samples), seed};
}

// Zero-intercept least squares slope: beta = sum(v p) / sum(p^2).
inline double fit_beta(const DayMatrix& power, const DayMatrix& voltage) {
    const std::string where = "voltage_model.fit_beta";
    if (power.days() != voltage.days() || power.minutes() != voltage.minutes()) {
        throw ShapeError(where + ": power and voltage shapes differ");
    }
    KahanAccumulator sum_vp, sum_pp;
    for (std::size_t i = 0; i < power.days(); ++i) {
        const auto p = power.values.row(i);
        const auto v = voltage.values.row(i);
        for (std::size_t j = 0; j < p.size(); ++j) {
            sum_vp.add(v[j] * p[j]);
            sum_pp.add(p[j] * p[j]);
        }
    }
    if (!(sum_pp.value() > 0.0)) {
        throw AllZeroPower(where + ": all net-power entries are zero");
    }
    return sum_vp.value() / sum_pp.value();
}

// Residual samples per (cluster, sign): plus holds |v - beta p| of cells with
// nonnegative residual, minus the rest. Cells of overlapping clusters are
// counted once per containing cluster.
struct ResidualSubsets {
    std::vector<double> plus;
    std::vector<double> minus;
};

inline std::vector<ResidualSubsets> partition_residuals(
    const DayMatrix& power, const DayMatrix& voltage, double beta,
    std::span<const std::vector<std::size_t>> day_clusters) {
    const std::string where = "voltage_model.partition_residuals";
    if (power.days() != voltage.days() || power.minutes() != voltage.minutes()) {
        throw ShapeError(where + ": power and voltage shapes differ");
    }
    std::vector<ResidualSubsets> out(day_clusters.size());
    for (std::size_t k = 0; k < day_clusters.size(); ++k) {
        for (std::size_t day : day_clusters[k]) {
            if (day >= power.days()) {
                throw IndexError(where + ": day index " + std::to_string(day) +
                                 " out of range in cluster " + std::to_string(k + 1));
            }
            const auto p = power.values.row(day);
            const auto v = voltage.values.row(day);
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double r = v[j] - beta * p[j];
                if (r >= 0.0) {
                    out[k].plus.push_back(r);
                } else {
                    out[k].minus.push_back(-r);
                }
            }
        }
    }
    return out;
}

// Full model fit for one consumer: regression slope, residual partition,
// weights pi = n_k^s / total, and a gamma MLE per nonempty subset on the
// weight-scaled magnitudes |v - beta p| / pi. Cells with an exactly zero
// residual count toward the weight but are left out of the likelihood
// (log 0 is undefined).
inline VoltageModel fit_model(const DayMatrix& power, const DayMatrix& voltage,
                              std::span<const std::vector<std::size_t>> day_clusters) {
    const std::string where = "voltage_model.fit_model";
    VoltageModel model;
    model.beta = fit_beta(power, voltage);
    const auto subsets = partition_residuals(power, voltage, model.beta, day_clusters);

    std::size_t total = 0;
    for (const auto& s : subsets) total += s.plus.size() + s.minus.size();
    if (total == 0) {
        throw DataError(where + ": clusters contain no residual samples");
    }

    const auto fit_component = [&](std::size_t k, Sign sign,
                                   const std::vector<double>& magnitudes) {
        ModelComponent component;
        component.cluster = k + 1;
        component.sign = sign;
        component.sample_count = magnitudes.size();
        component.weight =
            static_cast<double>(magnitudes.size()) / static_cast<double>(total);
        if (!magnitudes.empty()) {
            std::vector<double> scaled;
            scaled.reserve(magnitudes.size());
            for (double m : magnitudes) {
                if (m > 0.0) scaled.push_back(m / component.weight);
            }
            try {
                component.params = fit_gamma(scaled);
            } catch (const DegenerateSample& e) {
                throw DegenerateSample(where + ": cluster " + std::to_string(k + 1) +
                                       " sign " + sign_char(sign) + ": " + e.what());
            } catch (const NonPositiveSample& e) {
                throw NonPositiveSample(where + ": cluster " + std::to_string(k + 1) +
                                        " sign " + sign_char(sign) + ": " + e.what());
            } catch (const NoConvergence& e) {
                throw NoConvergence(where + ": cluster " + std::to_string(k + 1) +
                                    " sign " + sign_char(sign) + ": " + e.what());
            }
        }
        model.components.push_back(std::move(component));
    };

    for (std::size_t k = 0; k < subsets.size(); ++k) {
        fit_component(k, Sign::plus, subsets[k].plus);
        fit_component(k, Sign::minus, subsets[k].minus);
    }
    validate_model(model, where);
    return model;
}

enum class CompositeMode {
    sum,      // literal sum of all weighted components per draw
    mixture,  // one component per draw, chosen with probability pi
};

// One realization of n. In sum mode every nonempty component contributes its
// weighted draw; in mixture mode a single component is chosen with
// probability pi (empty components have zero weight, so the chosen one
// always carries parameters).
inline double composite_draw_one(const VoltageModel& model, Rng& rng,
                                 CompositeMode mode = CompositeMode::sum) {
    if (mode == CompositeMode::sum) {
        double acc = 0.0;
        for (const auto& c : model.components) {
            if (!c.params) continue;
            const double draw = c.weight * sample_gamma_one(*c.params, rng);
            acc += c.sign == Sign::plus ? draw : -draw;
        }
        return acc;
    }
    const double u = rng.uniform01();
    double cumulative = 0.0;
    const ModelComponent* picked = nullptr;
    for (const auto& c : model.components) {
        cumulative += c.weight;
        if (u < cumulative && c.params) {
            picked = &c;
            break;
        }
    }
    if (!picked) {  // guards rounding in the weight sum
        for (auto it = model.components.rbegin(); it != model.components.rend(); ++it) {
            if (it->params) {
                picked = &*it;
                break;
            }
        }
    }
    if (!picked) {
        throw DataError("voltage_model.composite_draw_one: model has no nonempty "
                        "components");
    }
    const double draw = picked->weight * sample_gamma_one(*picked->params, rng);
    return picked->sign == Sign::plus ? draw : -draw;
}

// Monte-Carlo sample of n = sum(pi+ u+) - sum(pi- u-), sorted ascending.
inline CompositeDistribution build_composite(const VoltageModel& model,
                                             std::size_t sample_count,
                                             std::uint64_t seed,
                                             CompositeMode mode = CompositeMode::sum) {
    const std::string where = "voltage_model.build_composite";
    validate_model(model, where);
    if (sample_count < 10000) {
        throw ConfigError(where + ": need at least 1e4 samples");
    }
    Rng rng(seed);
    std::vector<double> samples(sample_count, 0.0);
    for (auto& value : samples) {
        value = composite_draw_one(model, rng, mode);
    }
    std::sort(samples.begin(), samples.end());
    return CompositeDistribution{std::move(samples), seed};
}

// Right-continuous empirical CDF.
inline double cdf(const CompositeDistribution& dist, double z) {
    if (dist.samples.empty()) {
        throw EmptyDistribution("voltage_model.cdf: empty distribution");
    }
    const auto it = std::upper_bound(dist.samples.begin(), dist.samples.end(), z);
    return static_cast<double>(it - dist.samples.begin()) /
           static_cast<double>(dist.samples.size());
}

// Density estimate: centered difference of the empirical CDF over the
// Silverman bandwidth, floored at 1e-12 so downstream quantile arithmetic
// never sees an exact zero.
inline double cdf_derivative(const CompositeDistribution& dist, double z) {
    if (dist.samples.empty()) {
        throw EmptyDistribution("voltage_model.cdf_derivative: empty distribution");
    }
    const double n = static_cast<double>(dist.samples.size());
    KahanAccumulator sum, sum_sq;
    for (double s : dist.samples) {
        sum.add(s);
        sum_sq.add(s * s);
    }
    const double mean = sum.value() / n;
    const double variance = std::max(0.0, sum_sq.value() / n - mean * mean);
    const double bandwidth = 1.06 * std::sqrt(variance) * std::pow(n, -0.2);
    if (!(bandwidth > 0.0)) {
        return 1e-12;  // point mass
    }
    const double slope = (cdf(dist, z + bandwidth) - cdf(dist, z - bandwidth)) /
                         (2.0 * bandwidth);
    return std::max(slope, 1e-12);
}

// Order-statistic pairs (a_(i), b_(i)) of two equal-length samples.
inline std::vector<std::pair<double, double>> qq_points(std::span<const double> sample_a,
                                                        std::span<const double> sample_b) {
    const std::string where = "voltage_model.qq_points";
    if (sample_a.size() != sample_b.size()) {
        throw ShapeError(where + ": sample lengths differ");
    }
    if (sample_a.size() < 2) {
        throw RangeError(where + ": need at least 2 points");
    }
    std::vector<double> a(sample_a.begin(), sample_a.end());
    std::vector<double> b(sample_b.begin(), sample_b.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::pair<double, double>> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = {a[i], b[i]};
    return out;
}

}  // namespace pvvolt
