#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pvvolt/clustering.hpp"
#include "pvvolt/config.hpp"
#include "pvvolt/dataset.hpp"
#include "pvvolt/errors.hpp"
#include "pvvolt/feeder_sim.hpp"
#include "pvvolt/regulator.hpp"
#include "pvvolt/voltage_model.hpp"

namespace pvvolt {

// ---------------------------------------------------------------------------
// In-memory pipeline stages. The cmd_* wrappers below add file input/output;
// tests and the acceptance suite drive these directly.
// ---------------------------------------------------------------------------

inline SimulationResult simulate_stage(const RunConfig& cfg) {
    return simulate_days(cfg.topology, cfg.process_params, cfg.days, cfg.minutes_per_day,
                         cfg.seed);
}

struct WindowedData {
    std::vector<DayMatrix> power;
    std::vector<DayMatrix> voltage;
};

inline WindowedData window_stage(const RunConfig& cfg, const SimulationResult& sim) {
    WindowedData out;
    for (std::size_t c = 0; c < sim.power.size(); ++c) {
        out.power.push_back(restrict_to_window(sim.power[c], cfg.window_start, cfg.window_end));
        out.voltage.push_back(
            restrict_to_window(sim.voltage[c], cfg.window_start, cfg.window_end));
    }
    return out;
}

struct ClusterOutput {
    StackedMatrix stacked;
    ClusterSet set;
    std::vector<double> spectrum;
};

// The soft threshold compares alpha/2 against entries of H y, so its bite
// depends on the data scale. Scaling H to unit spectral norm before the
// factorization makes one alpha meaningful across feeders; the reported
// spectrum stays in the raw units.
inline ClusterOutput cluster_stage(const RunConfig& cfg,
                                   std::span<const DayMatrix> windowed_power) {
    ClusterOutput out;
    out.stacked = stack(windowed_power);
    const std::size_t spectrum_count =
        std::min<std::size_t>(10, std::min(out.stacked.values.rows(),
                                           out.stacked.values.cols()));
    out.spectrum = singular_spectrum(out.stacked.values, spectrum_count);
    if (cfg.normalize_stack) {
        StackedMatrix scaled = out.stacked;
        const double sigma1 = out.spectrum.empty() ? 0.0 : out.spectrum.front();
        if (sigma1 > 0.0) {
            for (std::size_t i = 0; i < scaled.values.rows(); ++i) {
                for (double& v : scaled.values.row(i)) v /= sigma1;
            }
        }
        out.set = run_clustering(scaled, cfg.svd, cfg.max_clusters);
    } else {
        out.set = run_clustering(out.stacked, cfg.svd, cfg.max_clusters);
    }
    return out;
}

inline std::vector<VoltageModel> fit_stage(const RunConfig& cfg, const WindowedData& data,
                                           const StackedMatrix& stacked,
                                           const ClusterSet& set) {
    std::vector<VoltageModel> models;
    for (std::size_t c = 0; c < data.power.size(); ++c) {
        const auto day_clusters = restrict_clusters_to_consumer(set, stacked, c);
        models.push_back(fit_model(data.power[c], data.voltage[c], day_clusters));
    }
    (void)cfg;
    return models;
}

// Mean-over-days series for one windowed matrix, the regulator's input.
inline std::vector<double> mean_day_series(const DayMatrix& m) {
    std::vector<double> out(m.minutes(), 0.0);
    for (std::size_t j = 0; j < m.minutes(); ++j) {
        KahanAccumulator acc;
        for (std::size_t i = 0; i < m.days(); ++i) acc.add(m.values(i, j));
        out[j] = acc.value() / static_cast<double>(m.days());
    }
    return out;
}

struct RegulateOutcome {
    std::vector<double> v_series;  // mean-day voltage over the analysis window
    std::vector<double> p_series;  // mean-day net power
    RegulatorTrace conventional;
    RegulatorTrace stochastic;
    double variation_conventional = 0.0;
    double variation_stochastic = 0.0;
    double midday_output_conventional = 0.0;
    double midday_output_stochastic = 0.0;
};

inline RegulateOutcome regulate_stage(const RunConfig& cfg, const DayMatrix& windowed_power,
                                      const DayMatrix& windowed_voltage,
                                      const VoltageModel& model) {
    RegulateOutcome out;
    out.v_series = mean_day_series(windowed_voltage);
    out.p_series = mean_day_series(windowed_power);

    const auto composite = std::make_shared<CompositeDistribution>(build_composite(
        model, cfg.monte_carlo_samples,
        derive_seed(cfg.seed, {hash_label("composite"), cfg.regulate_consumer}),
        cfg.composite_mode));

    RegulatorConfig reg;
    reg.window_minutes = cfg.regulator_window_minutes;
    reg.delta = cfg.regulator_delta;
    reg.reference = cfg.regulator_reference;
    reg.quantize_taps = cfg.quantize_taps;
    reg.beta = model.beta;
    reg.composite = composite;

    out.conventional = conventional_regulator(out.v_series, reg);
    out.stochastic = stochastic_regulator(out.v_series, out.p_series, reg);
    out.variation_conventional = ltc_variation(out.conventional);
    out.variation_stochastic = ltc_variation(out.stochastic);

    const std::size_t begin = cfg.midday_start - cfg.window_start;
    const std::size_t end = cfg.midday_end - cfg.window_start;
    KahanAccumulator conv, stoch;
    for (std::size_t t = begin; t < end; ++t) {
        conv.add(out.conventional.output_voltage[t]);
        stoch.add(out.stochastic.output_voltage[t]);
    }
    out.midday_output_conventional = conv.value() / static_cast<double>(end - begin);
    out.midday_output_stochastic = stoch.value() / static_cast<double>(end - begin);
    return out;
}

// ---------------------------------------------------------------------------
// File formats shared by the commands.
// ---------------------------------------------------------------------------

namespace detail {

using ordered_json = nlohmann::ordered_json;

inline std::filesystem::path power_path(const RunConfig& cfg, std::size_t c) {
    return cfg.output_dir / ("power_" + cfg.topology.consumers[c].id + ".csv");
}

inline std::filesystem::path voltage_path(const RunConfig& cfg, std::size_t c) {
    return cfg.output_dir / ("voltage_" + cfg.topology.consumers[c].id + ".csv");
}

inline std::filesystem::path model_path(const RunConfig& cfg, std::size_t c) {
    return cfg.output_dir / ("model_" + cfg.topology.consumers[c].id + ".json");
}

inline void ensure_output_dir(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) {
        throw DataError("cli.ensure_output_dir: cannot create '" +
                        cfg.output_dir.string() + "': " + ec.message());
    }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cli.write_text: cannot open '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw DataError("cli.write_text: write to '" + path.string() + "' failed");
    }
}

inline void write_vector_csv(const std::filesystem::path& path,
                             std::span<const double> values) {
    std::string text;
    for (double v : values) {
        text += format_fixed(v);
        text += '\n';
    }
    write_text(path, text);
}

inline void write_rows_csv(const std::filesystem::path& path,
                           std::span<const std::vector<double>> rows) {
    std::string text;
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) text += ',';
            text += format_fixed(row[j]);
        }
        text += '\n';
    }
    write_text(path, text);
}

inline WindowedData load_windowed_data(const RunConfig& cfg) {
    WindowedData out;
    for (std::size_t c = 0; c < cfg.topology.consumers.size(); ++c) {
        const auto power =
            load_day_matrix(power_path(cfg, c), cfg.minutes_per_day, Unit::kilowatt);
        const auto voltage = load_day_matrix(voltage_path(cfg, c), cfg.minutes_per_day,
                                             Unit::per_unit_volt);
        if (power.days() != cfg.days || voltage.days() != cfg.days) {
            throw ShapeError("cli.load_windowed_data: day count on disk does not match "
                             "the configured " + std::to_string(cfg.days) + " days");
        }
        out.power.push_back(restrict_to_window(power, cfg.window_start, cfg.window_end));
        out.voltage.push_back(
            restrict_to_window(voltage, cfg.window_start, cfg.window_end));
    }
    return out;
}

inline ordered_json model_to_json(const RunConfig& cfg, std::size_t consumer,
                                  const VoltageModel& model) {
    ordered_json doc;
    doc["consumer"] = cfg.topology.consumers[consumer].id;
    doc["beta"] = model.beta;
    doc["components"] = ordered_json::array();
    for (const auto& comp : model.components) {
        ordered_json c;
        c["k"] = comp.cluster;
        c["s"] = std::string(1, sign_char(comp.sign));
        c["pi"] = comp.weight;
        if (comp.params) {
            c["lambda"] = comp.params->shape;
            c["theta"] = comp.params->scale;
        } else {
            c["lambda"] = nullptr;
            c["theta"] = nullptr;
        }
        c["n"] = comp.sample_count;
        doc["components"].push_back(std::move(c));
    }
    return doc;
}

inline VoltageModel model_from_json(const nlohmann::json& doc, const std::string& where) {
    VoltageModel model;
    try {
        model.beta = doc.at("beta").get<double>();
        for (const auto& c : doc.at("components")) {
            ModelComponent comp;
            comp.cluster = c.at("k").get<std::size_t>();
            const auto s = c.at("s").get<std::string>();
            if (s != "+" && s != "-") {
                throw DataError(where + ": component sign must be '+' or '-'");
            }
            comp.sign = s == "+" ? Sign::plus : Sign::minus;
            comp.weight = c.at("pi").get<double>();
            comp.sample_count = c.at("n").get<std::size_t>();
            if (!c.at("lambda").is_null()) {
                comp.params = GammaParams{c.at("lambda").get<double>(),
                                          c.at("theta").get<double>()};
            }
            model.components.push_back(std::move(comp));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": malformed model document: " + e.what());
    }
    validate_model(model, where);
    return model;
}

inline VoltageModel load_model(const RunConfig& cfg, std::size_t consumer) {
    const std::string where = "cli.load_model";
    std::ifstream in(model_path(cfg, consumer));
    if (!in) {
        throw DataError(where + ": cannot open '" + model_path(cfg, consumer).string() +
                        "' (run `fit` first)");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": " + e.what());
    }
    return model_from_json(doc, where);
}

inline std::vector<std::vector<std::size_t>> load_clusters(const RunConfig& cfg) {
    const std::string where = "cli.load_clusters";
    const auto path = cfg.output_dir / "clusters.json";
    std::ifstream in(path);
    if (!in) {
        throw DataError(where + ": cannot open '" + path.string() +
                        "' (run `cluster` first)");
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(where + ": " + e.what());
    }
    if (!doc.is_object() || doc.empty()) {
        throw DataError(where + ": expected a nonempty object of cluster ids");
    }
    std::map<std::size_t, std::vector<std::size_t>> by_id;
    for (const auto& item : doc.items()) {
        std::size_t id = 0;
        try {
            id = std::stoul(item.key());
        } catch (...) {
            throw DataError(where + ": cluster id '" + item.key() + "' is not numeric");
        }
        try {
            by_id[id] = item.value().get<std::vector<std::size_t>>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": cluster '" + item.key() + "': " + e.what());
        }
    }
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t id = 1; id <= by_id.size(); ++id) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw DataError(where + ": cluster ids must be 1..C without gaps");
        }
        clusters.push_back(it->second);
    }
    return clusters;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each returns a one-line summary for the CLI to print.
// ---------------------------------------------------------------------------

inline std::string cmd_simulate(const RunConfig& cfg) {
    detail::ensure_output_dir(cfg);
    const auto sim = simulate_stage(cfg);
    for (std::size_t c = 0; c < sim.power.size(); ++c) {
        save_day_matrix(detail::power_path(cfg, c), sim.power[c]);
        save_day_matrix(detail::voltage_path(cfg, c), sim.voltage[c]);
    }
    return "simulate: wrote " + std::to_string(2 * sim.power.size()) + " matrices (" +
           std::to_string(cfg.days) + " days x " + std::to_string(cfg.minutes_per_day) +
           " minutes) to " + cfg.output_dir.string();
}

inline std::string cmd_cluster(const RunConfig& cfg) {
    detail::ensure_output_dir(cfg);
    const auto data = detail::load_windowed_data(cfg);
    const auto clusters = cluster_stage(cfg, data.power);

    std::vector<std::vector<double>> basis_rows = clusters.set.bases;
    if (clusters.set.extra_factor) {
        basis_rows.push_back(clusters.set.extra_factor->y);
    }
    detail::write_rows_csv(cfg.output_dir / "bases.csv", basis_rows);
    detail::write_vector_csv(cfg.output_dir / "spectrum.csv", clusters.spectrum);

    detail::ordered_json doc;
    for (std::size_t k = 0; k < clusters.set.clusters.size(); ++k) {
        doc[std::to_string(k + 1)] = clusters.set.clusters[k];
    }
    detail::write_text(cfg.output_dir / "clusters.json", doc.dump(2) + "\n");

    std::string sizes;
    for (const auto& c : clusters.set.clusters) {
        if (!sizes.empty()) sizes += "/";
        sizes += std::to_string(c.size());
    }
    return "cluster: " + std::to_string(clusters.set.clusters.size()) +
           " clusters (sizes " + sizes + "), " +
           std::to_string(basis_rows.size()) + " bases";
}

inline std::string cmd_fit(const RunConfig& cfg) {
    detail::ensure_output_dir(cfg);
    const auto data = detail::load_windowed_data(cfg);
    const auto clusters = detail::load_clusters(cfg);
    const auto stacked = stack(data.power);

    for (std::size_t c = 0; c < data.power.size(); ++c) {
        std::vector<std::vector<std::size_t>> day_clusters;
        const auto [begin, end] = stacked.block_offsets[c];
        for (const auto& cluster : clusters) {
            std::vector<std::size_t> days;
            for (std::size_t row : cluster) {
                if (row >= begin && row < end) days.push_back(row - begin);
            }
            day_clusters.push_back(std::move(days));
        }
        const auto model = fit_model(data.power[c], data.voltage[c], day_clusters);
        detail::write_text(detail::model_path(cfg, c),
                           detail::model_to_json(cfg, c, model).dump(2) + "\n");
    }
    return "fit: wrote " + std::to_string(data.power.size()) + " voltage models";
}

inline std::string cmd_qq(const RunConfig& cfg) {
    detail::ensure_output_dir(cfg);
    const auto data = detail::load_windowed_data(cfg);
    for (std::size_t c = 0; c < data.power.size(); ++c) {
        const auto model = detail::load_model(cfg, c);
        std::vector<double> residuals;
        residuals.reserve(data.power[c].days() * data.power[c].minutes());
        for (std::size_t i = 0; i < data.power[c].days(); ++i) {
            const auto p = data.power[c].values.row(i);
            const auto v = data.voltage[c].values.row(i);
            for (std::size_t j = 0; j < p.size(); ++j) {
                residuals.push_back(v[j] - model.beta * p[j]);
            }
        }
        Rng rng(derive_seed(cfg.seed, {hash_label("qq"), c}));
        std::vector<double> generated(residuals.size());
        for (auto& g : generated) {
            g = composite_draw_one(model, rng, cfg.composite_mode);
        }
        const auto points = qq_points(generated, residuals);
        std::vector<std::vector<double>> rows;
        rows.reserve(points.size());
        for (const auto& [x, y] : points) rows.push_back({x, y});
        detail::write_rows_csv(
            cfg.output_dir / ("qq_" + cfg.topology.consumers[c].id + ".csv"), rows);
    }
    return "qq: wrote " + std::to_string(data.power.size()) + " quantile tables";
}

inline std::string cmd_regulate(const RunConfig& cfg) {
    detail::ensure_output_dir(cfg);
    const auto data = detail::load_windowed_data(cfg);
    const std::size_t c = cfg.regulate_consumer;
    const auto model = detail::load_model(cfg, c);
    const auto outcome = regulate_stage(cfg, data.power[c], data.voltage[c], model);

    std::string text =
        "minute,input_v,conventional_ltc,conventional_out,stochastic_ltc,stochastic_out\n";
    for (std::size_t t = 0; t < outcome.v_series.size(); ++t) {
        text += std::to_string(cfg.window_start + t);
        text += ',';
        text += format_fixed(outcome.v_series[t]);
        text += ',';
        text += format_fixed(outcome.conventional.ltc_position[t]);
        text += ',';
        text += format_fixed(outcome.conventional.output_voltage[t]);
        text += ',';
        text += format_fixed(outcome.stochastic.ltc_position[t]);
        text += ',';
        text += format_fixed(outcome.stochastic.output_voltage[t]);
        text += '\n';
    }
    const auto& id = cfg.topology.consumers[c].id;
    detail::write_text(cfg.output_dir / ("regulate_" + id + ".csv"), text);

    detail::ordered_json summary;
    summary["consumer"] = id;
    summary["ltc_variation_conventional"] = outcome.variation_conventional;
    summary["ltc_variation_stochastic"] = outcome.variation_stochastic;
    summary["mean_midday_output_conventional"] = outcome.midday_output_conventional;
    summary["mean_midday_output_stochastic"] = outcome.midday_output_stochastic;
    detail::write_text(cfg.output_dir / "regulate_summary.json", summary.dump(2) + "\n");

    char line[160];
    std::snprintf(line, sizeof line,
                  "regulate: %s midday output %.6f (stochastic) vs %.6f (conventional), "
                  "variation %.6f vs %.6f",
                  id.c_str(), outcome.midday_output_stochastic,
                  outcome.midday_output_conventional, outcome.variation_stochastic,
                  outcome.variation_conventional);
    return line;
}

inline std::string cmd_report(const RunConfig& cfg) {
    const std::string where = "cli.cmd_report";
    detail::ensure_output_dir(cfg);
    const auto report_dir = cfg.output_dir / "report";
    std::error_code ec;
    std::filesystem::create_directories(report_dir, ec);
    if (ec) {
        throw DataError(where + ": cannot create '" + report_dir.string() + "'");
    }

    const std::size_t n_consumers = cfg.topology.consumers.size();
    std::vector<VoltageModel> models;
    for (std::size_t c = 0; c < n_consumers; ++c) {
        models.push_back(detail::load_model(cfg, c));
    }

    // Regression slopes, one row per consumer (the Table-II analog).
    std::string beta_csv = "consumer,cumulative_resistance_pu,beta\n";
    const auto cum_r = cumulative_resistances(cfg.topology);
    for (std::size_t c = 0; c < n_consumers; ++c) {
        beta_csv += cfg.topology.consumers[c].id;
        beta_csv += ',';
        beta_csv += format_fixed(cum_r[c]);
        beta_csv += ',';
        beta_csv += format_fixed(models[c].beta);
        beta_csv += '\n';
    }
    detail::write_text(report_dir / "beta.csv", beta_csv);

    // Component weights and gamma parameters (Table-III / Table-IV analogs).
    std::string pi_csv = "consumer,k,s,pi,n\n";
    std::string gamma_csv = "consumer,k,s,lambda,theta\n";
    for (std::size_t c = 0; c < n_consumers; ++c) {
        for (const auto& comp : models[c].components) {
            const auto& id = cfg.topology.consumers[c].id;
            pi_csv += id;
            pi_csv += ',' + std::to_string(comp.cluster);
            pi_csv += ',';
            pi_csv += sign_char(comp.sign);
            pi_csv += ',' + format_fixed(comp.weight) + ',' +
                      std::to_string(comp.sample_count) + '\n';
            gamma_csv += id;
            gamma_csv += ',' + std::to_string(comp.cluster);
            gamma_csv += ',';
            gamma_csv += sign_char(comp.sign);
            if (comp.params) {
                gamma_csv += ',' + format_fixed(comp.params->shape) + ',' +
                             format_fixed(comp.params->scale);
            } else {
                gamma_csv += ",,";
            }
            gamma_csv += '\n';
        }
    }
    detail::write_text(report_dir / "pi.csv", pi_csv);
    detail::write_text(report_dir / "gamma.csv", gamma_csv);

    // Mean daily profiles per consumer (the Figure-2 analog, full day).
    for (std::size_t c = 0; c < n_consumers; ++c) {
        const auto power = load_day_matrix(detail::power_path(cfg, c), cfg.minutes_per_day,
                                           Unit::kilowatt);
        const auto voltage = load_day_matrix(detail::voltage_path(cfg, c),
                                             cfg.minutes_per_day, Unit::per_unit_volt);
        const auto p_mean = mean_day_series(power);
        const auto v_mean = mean_day_series(voltage);
        std::string text = "minute,mean_power_kw,mean_voltage_pu\n";
        for (std::size_t j = 0; j < p_mean.size(); ++j) {
            text += std::to_string(j) + ',' + format_fixed(p_mean[j]) + ',' +
                    format_fixed(v_mean[j]) + '\n';
        }
        detail::write_text(
            report_dir / ("avg_profile_" + cfg.topology.consumers[c].id + ".csv"), text);
    }

    detail::ordered_json summary;
    {
        detail::ordered_json betas;
        bool all_negative = true;
        bool nondecreasing = true;
        double prev_abs = 0.0;
        for (std::size_t c = 0; c < n_consumers; ++c) {
            betas[cfg.topology.consumers[c].id] = models[c].beta;
            all_negative = all_negative && models[c].beta < 0.0;
            if (std::fabs(models[c].beta) + 1e-15 < prev_abs) nondecreasing = false;
            prev_abs = std::fabs(models[c].beta);
        }
        summary["beta"] = betas;
        summary["beta_all_negative"] = all_negative;
        summary["beta_magnitude_nondecreasing_with_impedance"] = nondecreasing;
    }
    {
        // Spectrum written by `cluster`; surfaced here for the report reader.
        std::ifstream in(cfg.output_dir / "spectrum.csv");
        if (!in) {
            throw DataError(where + ": cannot open spectrum.csv (run `cluster` first)");
        }
        std::vector<double> spectrum;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) spectrum.push_back(std::stod(line));
        }
        summary["singular_values"] = spectrum;
    }
    {
        // Shape/scale ordering between paired +/- components; reported, not asserted.
        detail::ordered_json observations = detail::ordered_json::array();
        for (std::size_t c = 0; c < n_consumers; ++c) {
            for (std::size_t k = 0; k + 1 < models[c].components.size(); k += 2) {
                const auto& plus = models[c].components[k];
                const auto& minus = models[c].components[k + 1];
                if (!plus.params || !minus.params) continue;
                detail::ordered_json entry;
                entry["consumer"] = cfg.topology.consumers[c].id;
                entry["k"] = plus.cluster;
                entry["lambda_plus_ge_minus"] =
                    plus.params->shape >= minus.params->shape;
                entry["theta_plus_le_minus"] = plus.params->scale <= minus.params->scale;
                observations.push_back(std::move(entry));
            }
        }
        summary["gamma_shape_observations"] = std::move(observations);
    }
    {
        const auto regulate_path = cfg.output_dir / "regulate_summary.json";
        std::ifstream in(regulate_path);
        if (in) {
            nlohmann::json reg;
            try {
                in >> reg;
                summary["regulate"] = reg;
            } catch (const nlohmann::json::exception& e) {
                throw DataError(where + ": regulate_summary.json: " + e.what());
            }
        }
    }
    detail::write_text(report_dir / "summary.json", summary.dump(2) + "\n");
    return "report: wrote tables and summary to " + report_dir.string();
}

}  // namespace pvvolt
