#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pvvolt/dataset.hpp"
#include "pvvolt/errors.hpp"
#include "pvvolt/matrix.hpp"
#include "pvvolt/rng.hpp"

namespace pvvolt {

struct LineSegment {
    double resistance_pu = 0.0;
    double reactance_pu = 0.0;
};

struct FeederConsumer {
    std::string id;
    double pv_capacity_kw = 0.0;
};

// Radial feeder: bus 0 is the distribution transformer, bus k (1-based) is
// the PCC of consumer k. Segment k-1 connects bus k-1 to bus k. Consumers
// are ordered by ascending electrical distance from the transformer.
// `reactive_compensator_kvar` is carried for completeness of the topology
// description; it takes no part in the voltage computation.
struct FeederTopology {
    std::vector<LineSegment> segments;
    std::vector<FeederConsumer> consumers;
    double source_voltage_pu = 1.0;
    double base_power_kva = 10.0;
    double reactive_compensator_kvar = 0.0;
};

inline void validate_topology(const FeederTopology& t) {
    const std::string where = "feeder_sim.validate_topology";
    if (t.segments.empty() || t.segments.size() != t.consumers.size()) {
        throw ConfigError(where + ": segments and consumers must have equal positive length");
    }
    for (const auto& s : t.segments) {
        if (!(s.resistance_pu >= 0.0) || !(s.reactance_pu >= 0.0)) {
            throw ConfigError(where + ": negative line impedance");
        }
    }
    for (const auto& c : t.consumers) {
        if (!(c.pv_capacity_kw >= 0.0)) {
            throw ConfigError(where + ": negative PV capacity for '" + c.id + "'");
        }
    }
    if (!(t.source_voltage_pu > 0.0)) {
        throw ConfigError(where + ": source voltage must be positive");
    }
    if (!(t.base_power_kva > 0.0)) {
        throw ConfigError(where + ": base power must be positive");
    }
}

// Sum of upstream segment impedances for each consumer, i.e. the impedance
// from its PCC back to the transformer.
inline std::vector<double> cumulative_resistances(const FeederTopology& t) {
    std::vector<double> out(t.segments.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < t.segments.size(); ++k) {
        acc += t.segments[k].resistance_pu;
        out[k] = acc;
    }
    return out;
}

// Inverse of the cumulative view: first differences of the (sorted)
// cumulative impedances give per-segment impedances.
inline std::vector<double> segment_impedances_from_cumulative(
    std::vector<double> cumulative) {
    const std::string where = "feeder_sim.segment_impedances_from_cumulative";
    if (cumulative.empty()) {
        throw ShapeError(where + ": empty input");
    }
    std::sort(cumulative.begin(), cumulative.end());
    if (!(cumulative.front() > 0.0)) {
        throw NonMonotonic(where + ": cumulative impedances must be positive");
    }
    std::vector<double> out(cumulative.size());
    out[0] = cumulative[0];
    for (std::size_t k = 1; k < cumulative.size(); ++k) {
        if (!(cumulative[k] > cumulative[k - 1])) {
            throw NonMonotonic(where + ": equal cumulative impedances at rank " +
                               std::to_string(k));
        }
        out[k] = cumulative[k] - cumulative[k - 1];
    }
    return out;
}

// Approximate voltage profile along the radial line:
//   V_{k+1}^2 = V_k^2 - 2 (R_k P_{k,k+1} + X_k Q_{k,k+1})
// where P_{k,k+1} aggregates the net power of all buses downstream of
// segment k. Inputs are kW / kVAr and are converted to per-unit with the
// topology's base power. Returns the per-unit voltage at each PCC.
inline std::vector<double> solve_feeder_voltages(const FeederTopology& topology,
                                                 std::span<const double> net_powers_kw,
                                                 std::span<const double> reactive_kvar) {
    const std::string where = "feeder_sim.solve_feeder_voltages";
    validate_topology(topology);
    const std::size_t n = topology.consumers.size();
    if (net_powers_kw.size() != n || reactive_kvar.size() != n) {
        throw ShapeError(where + ": power vector length does not match consumer count " +
                         std::to_string(n));
    }

    // Downstream aggregate flow through each segment, in per unit.
    std::vector<double> p_flow(n, 0.0), q_flow(n, 0.0);
    double p_acc = 0.0, q_acc = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        p_acc += net_powers_kw[k] / topology.base_power_kva;
        q_acc += reactive_kvar[k] / topology.base_power_kva;
        p_flow[k] = p_acc;
        q_flow[k] = q_acc;
    }

    std::vector<double> voltages(n, 0.0);
    double v_sq = topology.source_voltage_pu * topology.source_voltage_pu;
    for (std::size_t k = 0; k < n; ++k) {
        v_sq -= 2.0 * (topology.segments[k].resistance_pu * p_flow[k] +
                       topology.segments[k].reactance_pu * q_flow[k]);
        if (!(v_sq > 0.0)) {
            throw NonPositiveSquaredVoltage(where + ": squared voltage " +
                                            std::to_string(v_sq) + " at bus " +
                                            std::to_string(k + 1));
        }
        voltages[k] = std::sqrt(v_sq);
    }
    return voltages;
}

// Markov processes driving one consumer: a discrete load chain (factors of
// the mean load) and a cloud-attenuation chain scaling the clear-sky PV
// output. `seed` acts as a weather-cell id: consumers with equal seeds see
// the same attenuation stream, which is how correlated skies are configured.
struct ConsumerProcessParams {
    double load_mean_kw = 0.0;
    std::vector<double> load_state_factors = {0.4, 0.7, 1.0, 1.3, 1.6};
    Matrix load_markov_transition;
    std::vector<double> pv_clear_sky_profile;  // fraction of capacity, per minute
    std::vector<double> cloud_attenuation_states = {1.0, 0.6, 0.2};
    Matrix cloud_markov_transition;
    // Cycle each day's opening sky state through the state list instead of
    // drawing it, pinning the long-run mix of day types.
    bool cloud_start_rotation = false;
    std::uint64_t seed = 0;
};

inline void validate_transition_matrix(const Matrix& m, std::size_t states,
                                       const std::string& where) {
    if (m.rows() != states || m.cols() != states || states == 0) {
        throw ConfigError(where + ": transition matrix must be " + std::to_string(states) +
                          "x" + std::to_string(states));
    }
    for (std::size_t i = 0; i < states; ++i) {
        double row_sum = 0.0;
        for (double p : m.row(i)) {
            if (!(p >= 0.0)) {
                throw ConfigError(where + ": negative transition probability");
            }
            row_sum += p;
        }
        if (std::fabs(row_sum - 1.0) > 1e-12) {
            throw ConfigError(where + ": row " + std::to_string(i) + " sums to " +
                              std::to_string(row_sum) + ", expected 1");
        }
    }
}

inline void validate_process_params(const ConsumerProcessParams& p,
                                    std::size_t minutes_per_day) {
    const std::string where = "feeder_sim.validate_process_params";
    if (!(p.load_mean_kw >= 0.0)) {
        throw ConfigError(where + ": negative mean load");
    }
    validate_transition_matrix(p.load_markov_transition, p.load_state_factors.size(),
                               where + " (load)");
    validate_transition_matrix(p.cloud_markov_transition,
                               p.cloud_attenuation_states.size(), where + " (cloud)");
    for (double a : p.cloud_attenuation_states) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw ConfigError(where + ": attenuation states must lie in [0, 1]");
        }
    }
    if (p.pv_clear_sky_profile.size() != minutes_per_day) {
        throw ConfigError(where + ": clear-sky profile length " +
                          std::to_string(p.pv_clear_sky_profile.size()) +
                          " does not match minutes per day " +
                          std::to_string(minutes_per_day));
    }
    for (double v : p.pv_clear_sky_profile) {
        if (!(v >= 0.0)) {
            throw ConfigError(where + ": clear-sky profile must be nonnegative");
        }
    }
    for (double f : p.load_state_factors) {
        if (!(f >= 0.0)) {
            throw ConfigError(where + ": load state factors must be nonnegative");
        }
    }
}

// sin^2 daylight arc between sunrise and sunset (in minutes), zero outside.
inline std::vector<double> make_clear_sky_profile(std::size_t minutes_per_day,
                                                  std::size_t sunrise_minute,
                                                  std::size_t sunset_minute) {
    if (sunrise_minute >= sunset_minute || sunset_minute > minutes_per_day) {
        throw ConfigError("feeder_sim.make_clear_sky_profile: need sunrise < sunset <= " +
                          std::to_string(minutes_per_day));
    }
    std::vector<double> profile(minutes_per_day, 0.0);
    const double span = static_cast<double>(sunset_minute - sunrise_minute);
    for (std::size_t j = sunrise_minute; j < sunset_minute; ++j) {
        const double phase = (static_cast<double>(j - sunrise_minute) + 0.5) / span;
        const double s = std::sin(std::numbers::pi * phase);
        profile[j] = s * s;
    }
    return profile;
}

struct SimulationResult {
    std::vector<DayMatrix> power;    // net kW per consumer, load minus PV
    std::vector<DayMatrix> voltage;  // per-unit RMS per consumer

    bool operator==(const SimulationResult&) const = default;
};

namespace detail {

class MarkovWalker {
public:
    MarkovWalker(const Matrix& transition, Rng& rng)
        : transition_(&transition),
          state_(rng.next_u64() % transition.rows()) {}

    MarkovWalker(const Matrix& transition, std::size_t initial_state)
        : transition_(&transition), state_(initial_state % transition.rows()) {}

    std::size_t state() const { return state_; }

    void step(Rng& rng) { state_ = rng.categorical(transition_->row(state_)); }

private:
    const Matrix* transition_;
    std::size_t state_;
};

}  // namespace detail

// Simulates `days` x `minutes_per_day` of net power and PCC voltage for the
// whole feeder. A pure function of its arguments: every random stream is
// derived from (seed, day, chain id), so days are independent and the result
// does not depend on evaluation order.
inline SimulationResult simulate_days(const FeederTopology& topology,
                                      std::span<const ConsumerProcessParams> params,
                                      std::size_t days, std::size_t minutes_per_day,
                                      std::uint64_t seed) {
    const std::string where = "feeder_sim.simulate_days";
    validate_topology(topology);
    const std::size_t n_consumers = topology.consumers.size();
    if (params.size() != n_consumers) {
        throw ConfigError(where + ": got " + std::to_string(params.size()) +
                          " process params for " + std::to_string(n_consumers) +
                          " consumers");
    }
    if (days < 1 || minutes_per_day < 2) {
        throw ConfigError(where + ": need days >= 1 and minutes_per_day >= 2");
    }
    for (const auto& p : params) validate_process_params(p, minutes_per_day);

    SimulationResult result;
    result.power.assign(n_consumers,
                        DayMatrix{Matrix(days, minutes_per_day), Unit::kilowatt});
    result.voltage.assign(n_consumers,
                          DayMatrix{Matrix(days, minutes_per_day), Unit::per_unit_volt});

    const std::uint64_t load_label = hash_label("load");
    const std::uint64_t cloud_label = hash_label("cloud");

    std::vector<double> net_kw(n_consumers, 0.0);
    const std::vector<double> zero_kvar(n_consumers, 0.0);

    for (std::size_t day = 0; day < days; ++day) {
        // Load streams are keyed by consumer position, cloud streams by the
        // params seed, so equal seeds share a sky but never a load profile.
        std::vector<Rng> load_rngs;
        std::vector<Rng> cloud_rngs;
        std::vector<detail::MarkovWalker> load_chains;
        std::vector<detail::MarkovWalker> cloud_chains;
        load_rngs.reserve(n_consumers);
        cloud_rngs.reserve(n_consumers);
        for (std::size_t c = 0; c < n_consumers; ++c) {
            load_rngs.emplace_back(derive_seed(seed, {day, c, load_label}));
            cloud_rngs.emplace_back(derive_seed(seed, {day, params[c].seed, cloud_label}));
            load_chains.emplace_back(params[c].load_markov_transition, load_rngs[c]);
            if (params[c].cloud_start_rotation) {
                cloud_chains.emplace_back(params[c].cloud_markov_transition, day);
            } else {
                cloud_chains.emplace_back(params[c].cloud_markov_transition, cloud_rngs[c]);
            }
        }

        for (std::size_t minute = 0; minute < minutes_per_day; ++minute) {
            for (std::size_t c = 0; c < n_consumers; ++c) {
                const auto& p = params[c];
                if (minute > 0) {
                    load_chains[c].step(load_rngs[c]);
                    cloud_chains[c].step(cloud_rngs[c]);
                }
                const double load =
                    p.load_mean_kw * p.load_state_factors[load_chains[c].state()];
                const double attenuation =
                    p.cloud_attenuation_states[cloud_chains[c].state()];
                const double pv = attenuation * p.pv_clear_sky_profile[minute] *
                                  topology.consumers[c].pv_capacity_kw;
                net_kw[c] = load - pv;
                result.power[c].values(day, minute) = net_kw[c];
            }
            try {
                const auto voltages = solve_feeder_voltages(topology, net_kw, zero_kvar);
                for (std::size_t c = 0; c < n_consumers; ++c) {
                    result.voltage[c].values(day, minute) = voltages[c];
                }
            } catch (const NonPositiveSquaredVoltage& e) {
                throw NonPositiveSquaredVoltage(where + ": day " + std::to_string(day) +
                                                " minute " + std::to_string(minute) +
                                                ": " + e.what());
            }
        }
    }
    return result;
}

}  // namespace pvvolt
