#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvvolt/errors.hpp"
#include "pvvolt/feeder_sim.hpp"
#include "pvvolt/regulator.hpp"
#include "pvvolt/sparse_svd.hpp"
#include "pvvolt/voltage_model.hpp"

namespace pvvolt {

// Everything one pipeline run needs, assembled from a single JSON document.
// Parsing is strict: unknown keys are rejected and every module-level
// constraint is re-validated here, so a config that loads is a config that
// runs.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";

    FeederTopology topology;
    std::vector<ConsumerProcessParams> process_params;
    std::size_t days = 1;
    std::size_t minutes_per_day = 1440;

    std::size_t window_start = 600;  // analysis window [start, end)
    std::size_t window_end = 1020;

    SparseSvdConfig svd;
    std::size_t max_clusters = 3;
    bool normalize_stack = true;

    std::size_t monte_carlo_samples = 1000000;
    CompositeMode composite_mode = CompositeMode::sum;

    std::size_t regulator_window_minutes = 30;
    double regulator_delta = 0.05;
    WindowReference regulator_reference = WindowReference::previous_mean;
    bool quantize_taps = false;
    std::size_t regulate_consumer = 0;  // index into topology.consumers
    std::size_t midday_start = 660;
    std::size_t midday_end = 840;

    std::size_t window_minutes() const { return window_end - window_start; }
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected a JSON object");
    }
    for (const auto& item : j.items()) {
        if (!allowed.contains(item.key())) {
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

template <typename T>
T field(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) {
        throw ConfigError(where + ": missing key '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": key '" + key + "': " + e.what());
    }
}

template <typename T>
T field_or(const json& j, const std::string& key, const std::string& where, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + ": key '" + key + "': " + e.what());
    }
}

inline Matrix matrix_field(const json& j, const std::string& key,
                           const std::string& where) {
    const auto rows = field<std::vector<std::vector<double>>>(j, key, where);
    try {
        return Matrix::from_rows(rows);
    } catch (const ShapeError& e) {
        throw ConfigError(where + ": key '" + key + "': " + e.what());
    }
}

// Per-segment values from per-consumer cumulative ones. Resistances must be
// strictly increasing along the feeder; reactances only nondecreasing (zero
// reactance everywhere is the common configuration).
inline std::vector<double> reactance_segments(const std::vector<double>& cumulative,
                                              const std::string& where) {
    std::vector<double> out(cumulative.size());
    double prev = 0.0;
    for (std::size_t k = 0; k < cumulative.size(); ++k) {
        if (cumulative[k] < prev) {
            throw ConfigError(where + ": cumulative reactances must be nondecreasing");
        }
        out[k] = cumulative[k] - prev;
        prev = cumulative[k];
    }
    return out;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::field;
    using detail::field_or;
    const std::string where = "cli.parse_run_config";

    check_keys(j, {"seed", "output_dir", "feeder", "simulation", "analysis_window",
                   "sparse_svd", "clustering", "model", "regulator"},
               where);

    RunConfig cfg;
    cfg.seed = field<std::uint64_t>(j, "seed", where);
    cfg.output_dir = field_or<std::string>(j, "output_dir", where, "out");

    // -- feeder ----------------------------------------------------------
    const auto& feeder = j.at("feeder");
    check_keys(feeder,
               {"base_power_kva", "source_voltage_pu", "reactive_compensator_kvar",
                "consumers"},
               where + ".feeder");
    cfg.topology.base_power_kva = field<double>(feeder, "base_power_kva", where);
    cfg.topology.source_voltage_pu =
        field_or<double>(feeder, "source_voltage_pu", where, 1.0);
    cfg.topology.reactive_compensator_kvar =
        field_or<double>(feeder, "reactive_compensator_kvar", where, 0.0);

    const auto& consumers = feeder.at("consumers");
    if (!consumers.is_array() || consumers.empty()) {
        throw ConfigError(where + ".feeder.consumers: expected a nonempty array");
    }
    std::vector<double> cumulative_r, cumulative_x;
    std::vector<double> load_means;
    std::vector<std::uint64_t> weather_seeds;
    std::set<std::string> seen_ids;
    for (const auto& c : consumers) {
        const std::string cw = where + ".feeder.consumers";
        check_keys(c,
                   {"id", "pv_capacity_kw", "cumulative_resistance_pu",
                    "cumulative_reactance_pu", "load_mean_kw", "weather_seed"},
                   cw);
        FeederConsumer consumer;
        consumer.id = field<std::string>(c, "id", cw);
        consumer.pv_capacity_kw = field<double>(c, "pv_capacity_kw", cw);
        if (!seen_ids.insert(consumer.id).second) {
            throw ConfigError(cw + ": duplicate consumer id '" + consumer.id + "'");
        }
        cfg.topology.consumers.push_back(consumer);
        cumulative_r.push_back(field<double>(c, "cumulative_resistance_pu", cw));
        cumulative_x.push_back(field_or<double>(c, "cumulative_reactance_pu", cw, 0.0));
        load_means.push_back(field<double>(c, "load_mean_kw", cw));
        weather_seeds.push_back(field<std::uint64_t>(c, "weather_seed", cw));
    }
    for (std::size_t k = 1; k < cumulative_r.size(); ++k) {
        if (!(cumulative_r[k] > cumulative_r[k - 1])) {
            throw ConfigError(where + ".feeder.consumers: list consumers in ascending "
                                      "order of cumulative resistance");
        }
    }
    try {
        const auto r_segments = segment_impedances_from_cumulative(cumulative_r);
        const auto x_segments = detail::reactance_segments(cumulative_x, where + ".feeder");
        for (std::size_t k = 0; k < r_segments.size(); ++k) {
            cfg.topology.segments.push_back({r_segments[k], x_segments[k]});
        }
    } catch (const NonMonotonic& e) {
        throw ConfigError(where + ".feeder: " + e.what());
    }
    validate_topology(cfg.topology);

    // -- simulation -------------------------------------------------------
    const auto& sim = j.at("simulation");
    const std::string sw = where + ".simulation";
    check_keys(sim,
               {"days", "minutes_per_day", "load_state_factors", "load_transition",
                "cloud_attenuation_states", "cloud_transition", "cloud_start_rotation",
                "clear_sky"},
               sw);
    cfg.days = field<std::size_t>(sim, "days", sw);
    cfg.minutes_per_day = field<std::size_t>(sim, "minutes_per_day", sw);
    if (cfg.days < 1 || cfg.minutes_per_day < 2) {
        throw ConfigError(sw + ": need days >= 1 and minutes_per_day >= 2");
    }

    const auto& clear_sky = sim.at("clear_sky");
    check_keys(clear_sky, {"sunrise_minute", "sunset_minute"}, sw + ".clear_sky");
    const auto profile = make_clear_sky_profile(
        cfg.minutes_per_day, field<std::size_t>(clear_sky, "sunrise_minute", sw),
        field<std::size_t>(clear_sky, "sunset_minute", sw));

    ConsumerProcessParams shared;
    shared.load_state_factors = field<std::vector<double>>(sim, "load_state_factors", sw);
    shared.load_markov_transition = detail::matrix_field(sim, "load_transition", sw);
    shared.cloud_attenuation_states =
        field<std::vector<double>>(sim, "cloud_attenuation_states", sw);
    shared.cloud_markov_transition = detail::matrix_field(sim, "cloud_transition", sw);
    shared.cloud_start_rotation = field_or<bool>(sim, "cloud_start_rotation", sw, false);
    shared.pv_clear_sky_profile = profile;
    for (std::size_t c = 0; c < cfg.topology.consumers.size(); ++c) {
        ConsumerProcessParams params = shared;
        params.load_mean_kw = load_means[c];
        params.seed = weather_seeds[c];
        validate_process_params(params, cfg.minutes_per_day);
        cfg.process_params.push_back(std::move(params));
    }

    // -- analysis window --------------------------------------------------
    const auto& window = j.at("analysis_window");
    check_keys(window, {"start_minute", "end_minute"}, where + ".analysis_window");
    cfg.window_start = field<std::size_t>(window, "start_minute", where);
    cfg.window_end = field<std::size_t>(window, "end_minute", where);
    if (cfg.window_start >= cfg.window_end || cfg.window_end > cfg.minutes_per_day) {
        throw ConfigError(where + ".analysis_window: need start < end <= minutes_per_day");
    }

    // -- sparse svd / clustering -----------------------------------------
    const auto& svd = j.at("sparse_svd");
    check_keys(svd, {"alpha", "epsilon", "max_iterations"}, where + ".sparse_svd");
    cfg.svd.alpha = field<double>(svd, "alpha", where);
    cfg.svd.epsilon = field<double>(svd, "epsilon", where);
    cfg.svd.max_iterations = field<std::size_t>(svd, "max_iterations", where);
    validate_sparse_svd_config(cfg.svd);

    const auto& clustering = j.at("clustering");
    check_keys(clustering, {"max_clusters", "normalize"}, where + ".clustering");
    cfg.max_clusters = field<std::size_t>(clustering, "max_clusters", where);
    cfg.normalize_stack = field_or<bool>(clustering, "normalize", where, true);
    if (cfg.max_clusters < 2) {
        throw ConfigError(where + ".clustering: max_clusters must be >= 2");
    }

    // -- model -------------------------------------------------------------
    const auto& model = j.at("model");
    check_keys(model, {"monte_carlo_samples", "composite_mode"}, where + ".model");
    cfg.monte_carlo_samples = field<std::size_t>(model, "monte_carlo_samples", where);
    if (cfg.monte_carlo_samples < 10000) {
        throw ConfigError(where + ".model: monte_carlo_samples must be >= 1e4");
    }
    const auto mode = field_or<std::string>(model, "composite_mode", where, "sum");
    if (mode == "sum") {
        cfg.composite_mode = CompositeMode::sum;
    } else if (mode == "mixture") {
        cfg.composite_mode = CompositeMode::mixture;
    } else {
        throw ConfigError(where + ".model: composite_mode must be 'sum' or 'mixture'");
    }

    // -- regulator ----------------------------------------------------------
    const auto& reg = j.at("regulator");
    const std::string rw = where + ".regulator";
    check_keys(reg,
               {"window_minutes", "delta", "reference", "quantize_taps", "consumer",
                "midday"},
               rw);
    cfg.regulator_window_minutes = field<std::size_t>(reg, "window_minutes", rw);
    cfg.regulator_delta = field<double>(reg, "delta", rw);
    if (!(cfg.regulator_delta > 0.0)) {
        throw ConfigError(rw + ": RegulatorConfig.delta must be > 0");
    }
    if (cfg.regulator_window_minutes < 1) {
        throw ConfigError(rw + ": RegulatorConfig.window_minutes must be >= 1");
    }
    const auto reference = field_or<std::string>(reg, "reference", rw, "previous_mean");
    if (reference == "previous_mean") {
        cfg.regulator_reference = WindowReference::previous_mean;
    } else if (reference == "window_start") {
        cfg.regulator_reference = WindowReference::window_start;
    } else {
        throw ConfigError(rw + ": reference must be 'previous_mean' or 'window_start'");
    }
    cfg.quantize_taps = field_or<bool>(reg, "quantize_taps", rw, false);

    const auto consumer_id = field<std::string>(reg, "consumer", rw);
    bool found = false;
    for (std::size_t c = 0; c < cfg.topology.consumers.size(); ++c) {
        if (cfg.topology.consumers[c].id == consumer_id) {
            cfg.regulate_consumer = c;
            found = true;
            break;
        }
    }
    if (!found) {
        throw ConfigError(rw + ": unknown consumer id '" + consumer_id + "'");
    }

    const auto midday = field_or<std::vector<std::size_t>>(reg, "midday", rw, {660, 840});
    if (midday.size() != 2) {
        throw ConfigError(rw + ": midday must be [start_minute, end_minute]");
    }
    cfg.midday_start = midday[0];
    cfg.midday_end = midday[1];
    if (cfg.midday_start < cfg.window_start || cfg.midday_end > cfg.window_end ||
        cfg.midday_start >= cfg.midday_end) {
        throw ConfigError(rw + ": midday range must lie inside the analysis window");
    }

    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string where = "cli.load_run_config";
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(where + ": cannot open '" + path.string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + ": '" + path.string() + "': " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace pvvolt
