#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pvvolt/errors.hpp"
#include "pvvolt/matrix.hpp"
#include "pvvolt/voltage_model.hpp"

namespace pvvolt {

// How the window reference value v(T) (and p(T)) is sampled.
enum class WindowReference {
    previous_mean,  // mean over the window that just ended; first window uses itself
    window_start,   // instantaneous value at the window's first minute
};

struct RegulatorConfig {
    std::size_t window_minutes = 30;  // tap update period T
    double delta = 0.05;              // probability-margin constant
    WindowReference reference = WindowReference::previous_mean;
    bool quantize_taps = false;       // snap LTC to discrete tap steps
    double tap_step = 0.00625;        // 32 steps across +-10 percent
    double beta = 0.0;                // model slope (stochastic regulator)
    std::shared_ptr<const CompositeDistribution> composite;
};

inline void validate_regulator_config(const RegulatorConfig& c, const std::string& where) {
    if (c.window_minutes < 1) {
        throw ConfigError(where + ": RegulatorConfig.window_minutes must be >= 1");
    }
    if (!(c.delta > 0.0)) {
        throw ConfigError(where + ": RegulatorConfig.delta must be > 0 "
                                  "(delta = 0 collapses the quantile window)");
    }
    if (c.quantize_taps && !(c.tap_step > 0.0)) {
        throw ConfigError(where + ": RegulatorConfig.tap_step must be > 0");
    }
}

// Per-minute result of one regulation run. The LTC position is constant
// within each window; output_voltage(t) = ltc_position(t) * v(t) exactly.
struct RegulatorTrace {
    std::vector<double> output_voltage;
    std::vector<double> ltc_position;
    std::vector<std::size_t> window_boundaries;  // start minute of each window
};

namespace detail {

inline std::vector<std::size_t> window_starts(std::size_t length, std::size_t window) {
    std::vector<std::size_t> starts;
    for (std::size_t t = 0; t < length; t += window) starts.push_back(t);
    return starts;
}

inline double window_mean(std::span<const double> v, std::size_t begin, std::size_t end) {
    KahanAccumulator acc;
    for (std::size_t t = begin; t < end; ++t) acc.add(v[t]);
    return acc.value() / static_cast<double>(end - begin);
}

inline double window_reference(std::span<const double> v,
                               const std::vector<std::size_t>& starts, std::size_t w,
                               std::size_t length, WindowReference mode) {
    if (mode == WindowReference::window_start) {
        return v[starts[w]];
    }
    // previous_mean: average of the window that just ended; the first window
    // has no history and bootstraps from its own span.
    const std::size_t ref = w == 0 ? 0 : w - 1;
    const std::size_t begin = starts[ref];
    const std::size_t end = ref + 1 < starts.size() ? starts[ref + 1] : length;
    return window_mean(v, begin, end);
}

inline double apply_tap_quantization(double ltc, const RegulatorConfig& c) {
    if (!c.quantize_taps) return ltc;
    const double offset = std::round((ltc - 1.0) / c.tap_step) * c.tap_step;
    return 1.0 + std::clamp(offset, -0.1, 0.1);
}

}  // namespace detail

// Conventional regulator: LTC(t) = 1 / v(T) held across each window.
inline RegulatorTrace conventional_regulator(std::span<const double> v,
                                             const RegulatorConfig& config) {
    const std::string where = "regulator.conventional_regulator";
    validate_regulator_config(config, where);
    for (double value : v) {
        if (!(value > 0.0)) {
            throw NonPositiveVoltage(where + ": input voltage must be positive");
        }
    }
    RegulatorTrace trace;
    trace.output_voltage.resize(v.size());
    trace.ltc_position.resize(v.size());
    trace.window_boundaries = detail::window_starts(v.size(), config.window_minutes);
    for (std::size_t w = 0; w < trace.window_boundaries.size(); ++w) {
        const std::size_t begin = trace.window_boundaries[w];
        const std::size_t end = w + 1 < trace.window_boundaries.size()
                                    ? trace.window_boundaries[w + 1]
                                    : v.size();
        const double reference = detail::window_reference(
            v, trace.window_boundaries, w, v.size(), config.reference);
        const double ltc = detail::apply_tap_quantization(1.0 / reference, config);
        for (std::size_t t = begin; t < end; ++t) {
            trace.ltc_position[t] = ltc;
            trace.output_voltage[t] = ltc * v[t];
        }
    }
    return trace;
}

// Quantile window around v_d: probability bounds F(v_d) -+ delta * F'(v_d),
// clamped to [0, 1], mapped back through the empirical CDF.
inline std::pair<double, double> quantile_window(const CompositeDistribution& dist,
                                                 double v_d, double delta) {
    const std::string where = "regulator.quantile_window";
    if (!(delta > 0.0)) {
        throw ConfigError(where + ": delta must be > 0");
    }
    if (dist.samples.empty()) {
        throw EmptyDistribution(where + ": empty distribution");
    }
    const double n = static_cast<double>(dist.samples.size());
    const double prob = cdf(dist, v_d);
    const double density = cdf_derivative(dist, v_d);
    const double lo = std::clamp(prob - delta * density, 0.0, 1.0);
    const double hi = std::clamp(prob + delta * density, 0.0, 1.0);

    // n1: smallest sample z with F(z) >= lo, i.e. index ceil(lo*n) - 1.
    const long last = static_cast<long>(dist.samples.size()) - 1;
    long idx1 = static_cast<long>(std::ceil(lo * n)) - 1;
    idx1 = std::clamp(idx1, 0L, last);
    // n2: largest sample z with F(z) < hi; the bound hi = 1 admits every sample.
    long idx2 = hi >= 1.0 ? last : static_cast<long>(std::ceil(hi * n)) - 2;
    idx2 = std::clamp(idx2, idx1, last);

    return {dist.samples[static_cast<std::size_t>(idx1)],
            dist.samples[static_cast<std::size_t>(idx2)]};
}

// gamma = E[n | n1 < n <= n2] over the Monte-Carlo sample.
inline double conditional_mean(const CompositeDistribution& dist, double n1, double n2) {
    const std::string where = "regulator.conditional_mean";
    if (dist.samples.empty()) {
        throw EmptyDistribution(where + ": empty distribution");
    }
    const auto begin = std::upper_bound(dist.samples.begin(), dist.samples.end(), n1);
    const auto end = std::upper_bound(dist.samples.begin(), dist.samples.end(), n2);
    if (begin >= end) {
        throw EmptyConditioningSet(where + ": no samples in (" + std::to_string(n1) +
                                   ", " + std::to_string(n2) +
                                   "]; delta too small for the sample resolution");
    }
    KahanAccumulator acc;
    for (auto it = begin; it != end; ++it) acc.add(*it);
    return acc.value() / static_cast<double>(end - begin);
}

// Stochastic regulator: per window, v_d(T) = v(T) - beta p(T) locates the
// composite distribution, gamma is the conditional mean within the quantile
// window, and LTC(t) = 1 / (beta p(T) + gamma).
inline RegulatorTrace stochastic_regulator(std::span<const double> v,
                                           std::span<const double> p,
                                           const RegulatorConfig& config) {
    const std::string where = "regulator.stochastic_regulator";
    validate_regulator_config(config, where);
    if (v.size() != p.size()) {
        throw ShapeError(where + ": voltage and power lengths differ");
    }
    if (!config.composite) {
        throw ConfigError(where + ": RegulatorConfig.composite is required");
    }
    for (double value : v) {
        if (!(value > 0.0)) {
            throw NonPositiveVoltage(where + ": input voltage must be positive");
        }
    }
    RegulatorTrace trace;
    trace.output_voltage.resize(v.size());
    trace.ltc_position.resize(v.size());
    trace.window_boundaries = detail::window_starts(v.size(), config.window_minutes);
    for (std::size_t w = 0; w < trace.window_boundaries.size(); ++w) {
        const std::size_t begin = trace.window_boundaries[w];
        const std::size_t end = w + 1 < trace.window_boundaries.size()
                                    ? trace.window_boundaries[w + 1]
                                    : v.size();
        const double v_ref = detail::window_reference(
            v, trace.window_boundaries, w, v.size(), config.reference);
        const double p_ref = detail::window_reference(
            p, trace.window_boundaries, w, p.size(), config.reference);
        const double v_d = v_ref - config.beta * p_ref;
        const auto [n1, n2] = quantile_window(*config.composite, v_d, config.delta);
        const double gamma = conditional_mean(*config.composite, n1, n2);
        const double denom = config.beta * p_ref + gamma;
        if (std::fabs(denom) < 1e-9) {
            throw DivisionNearZero(where + ": beta p(T) + gamma is " +
                                   std::to_string(denom) + " in window " +
                                   std::to_string(w));
        }
        const double ltc = detail::apply_tap_quantization(1.0 / denom, config);
        for (std::size_t t = begin; t < end; ++t) {
            trace.ltc_position[t] = ltc;
            trace.output_voltage[t] = ltc * v[t];
        }
    }
    return trace;
}

// Total tap movement sum |LTC(t) - LTC(t-1)|; the wear metric.
inline double ltc_variation(const RegulatorTrace& trace) {
    if (trace.ltc_position.size() < 2) {
        throw RangeError("regulator.ltc_variation: trace must have at least 2 minutes");
    }
    KahanAccumulator acc;
    for (std::size_t t = 1; t < trace.ltc_position.size(); ++t) {
        acc.add(std::fabs(trace.ltc_position[t] - trace.ltc_position[t - 1]));
    }
    return acc.value();
}

}  // namespace pvvolt
