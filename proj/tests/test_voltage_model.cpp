#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pvvolt/rng.hpp"
#include "pvvolt/voltage_model.hpp"

using namespace pvvolt;

namespace {

DayMatrix matrix_of(std::vector<std::vector<double>> rows, Unit unit) {
    return DayMatrix{Matrix::from_rows(rows), unit};
}

VoltageModel single_component_model(const GammaParams& params) {
    VoltageModel model;
    model.beta = -0.01;
    model.components.push_back({1, Sign::plus, 1.0, params, 100});
    model.components.push_back({1, Sign::minus, 0.0, std::nullopt, 0});
    return model;
}

}  // namespace

TEST_CASE("beta is exact on proportional and orthogonal data") {
    const auto p = matrix_of({{1.0, 2.0}, {3.0, -4.0}}, Unit::kilowatt);
    const auto v = matrix_of({{2.0, 4.0}, {6.0, -8.0}}, Unit::per_unit_volt);
    CHECK(fit_beta(p, v) == Catch::Approx(2.0).epsilon(1e-14));

    const auto p2 = matrix_of({{1.0, -1.0}}, Unit::kilowatt);
    const auto v2 = matrix_of({{1.0, 1.0}}, Unit::per_unit_volt);
    CHECK(fit_beta(p2, v2) == 0.0);

    const auto zeros = matrix_of({{0.0, 0.0}}, Unit::kilowatt);
    CHECK_THROWS_AS(fit_beta(zeros, v2), AllZeroPower);
    CHECK_THROWS_AS(fit_beta(p, v2), ShapeError);
}

TEST_CASE("beta minimizes the squared residual over the slope") {
    Rng rng(8);
    DayMatrix p{Matrix(6, 50), Unit::kilowatt};
    DayMatrix v{Matrix(6, 50), Unit::per_unit_volt};
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 50; ++j) {
            p.values(i, j) = rng.normal();
            v.values(i, j) = -0.02 * p.values(i, j) + 0.001 * rng.normal();
        }
    }
    const double beta = fit_beta(p, v);
    const auto loss = [&](double b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            for (std::size_t j = 0; j < 50; ++j) {
                const double r = v.values(i, j) - b * p.values(i, j);
                acc += r * r;
            }
        }
        return acc;
    };
    CHECK(loss(beta) < loss(beta + 1e-3));
    CHECK(loss(beta) < loss(beta - 1e-3));
}

TEST_CASE("partition sends zero residuals to the plus subset") {
    const auto p = matrix_of({{1.0, 2.0, 3.0}}, Unit::kilowatt);
    const auto v = matrix_of({{2.0, 4.0, 5.0}}, Unit::per_unit_volt);
    const std::vector<std::vector<std::size_t>> clusters{{0}};
    const auto subsets = partition_residuals(p, v, 2.0, clusters);
    REQUIRE(subsets.size() == 1);
    // Residuals: 0, 0, -1. Zeros are plus by the >= 0 rule.
    CHECK(subsets[0].plus == std::vector<double>{0.0, 0.0});
    CHECK(subsets[0].minus == std::vector<double>{1.0});
}

TEST_CASE("a single cluster of all days partitions every cell") {
    Rng rng(77);
    DayMatrix p{Matrix(4, 30), Unit::kilowatt};
    DayMatrix v{Matrix(4, 30), Unit::per_unit_volt};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 30; ++j) {
            p.values(i, j) = rng.normal();
            v.values(i, j) = rng.normal();
        }
    }
    const std::vector<std::vector<std::size_t>> clusters{{0, 1, 2, 3}};
    const auto subsets = partition_residuals(p, v, -0.5, clusters);
    CHECK(subsets[0].plus.size() + subsets[0].minus.size() == 120);

    const std::vector<std::vector<std::size_t>> bad{{7}};
    CHECK_THROWS_AS(partition_residuals(p, v, -0.5, bad), IndexError);
}

TEST_CASE("planted signs are recovered exactly") {
    DayMatrix p{Matrix(2, 10), Unit::kilowatt};
    DayMatrix v{Matrix(2, 10), Unit::per_unit_volt};
    Rng rng(5);
    std::vector<int> planted;
    const double beta = -0.4;
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 10; ++j) {
            p.values(i, j) = rng.normal();
            const int sign = rng.uniform01() < 0.5 ? 1 : -1;
            planted.push_back(sign);
            v.values(i, j) = beta * p.values(i, j) + sign * (0.1 + rng.uniform01());
        }
    }
    const std::vector<std::vector<std::size_t>> clusters{{0, 1}};
    const auto subsets = partition_residuals(p, v, beta, clusters);
    const auto planted_plus =
        std::count(planted.begin(), planted.end(), 1);
    CHECK(subsets[0].plus.size() == std::size_t(planted_plus));
    CHECK(subsets[0].minus.size() == planted.size() - std::size_t(planted_plus));
}

TEST_CASE("fit_model recovers a planted gamma mixture") {
    const double beta = -0.01;
    const GammaParams plus_params{1.5, 0.003};
    const GammaParams minus_params{1.3, 0.004};
    const std::size_t days = 100, minutes = 420;
    const double pi_plus = 0.55;  // exact by construction below

    Rng rng(31);
    Rng plus_rng(32), minus_rng(33);
    DayMatrix p{Matrix(days, minutes), Unit::kilowatt};
    DayMatrix v{Matrix(days, minutes), Unit::per_unit_volt};
    std::size_t cell = 0;
    for (std::size_t i = 0; i < days; ++i) {
        for (std::size_t j = 0; j < minutes; ++j, ++cell) {
            p.values(i, j) = 2.0 * rng.uniform01() - 1.0;
            const bool plus = (cell % 20) < 11;  // exactly 55 percent
            const double u = plus ? sample_gamma_one(plus_params, plus_rng)
                                  : sample_gamma_one(minus_params, minus_rng);
            const double magnitude = (plus ? pi_plus : 1.0 - pi_plus) * u;
            v.values(i, j) = beta * p.values(i, j) + (plus ? magnitude : -magnitude);
        }
    }

    std::vector<std::size_t> all_days(days);
    for (std::size_t i = 0; i < days; ++i) all_days[i] = i;
    const std::vector<std::vector<std::size_t>> clusters{all_days, {}};

    const auto model = fit_model(p, v, clusters);
    REQUIRE(model.components.size() == 4);
    CHECK(model.beta == Catch::Approx(beta).margin(2e-4));

    double weight_sum = 0.0;
    for (const auto& c : model.components) weight_sum += c.weight;
    CHECK(weight_sum == Catch::Approx(1.0).margin(1e-12));

    // Empty second cluster: zero weights, absent params.
    CHECK(model.components[2].weight == 0.0);
    CHECK_FALSE(model.components[2].params.has_value());
    CHECK(model.components[3].weight == 0.0);
    CHECK_FALSE(model.components[3].params.has_value());

    CHECK(model.components[0].weight == Catch::Approx(pi_plus).margin(0.01));
    REQUIRE(model.components[0].params.has_value());
    REQUIRE(model.components[1].params.has_value());
    const std::size_t n_plus = model.components[0].sample_count;
    const std::size_t n_minus = model.components[1].sample_count;
    {
        const auto [se_shape, se_scale] = oracles::gamma_mle_standard_errors(
            plus_params.shape, plus_params.scale, n_plus);
        CHECK(std::fabs(model.components[0].params->shape - plus_params.shape) <
              3.0 * se_shape + 0.01);
        CHECK(std::fabs(model.components[0].params->scale - plus_params.scale) <
              3.0 * se_scale + 1e-4);
    }
    {
        const auto [se_shape, se_scale] = oracles::gamma_mle_standard_errors(
            minus_params.shape, minus_params.scale, n_minus);
        CHECK(std::fabs(model.components[1].params->shape - minus_params.shape) <
              3.0 * se_shape + 0.01);
        CHECK(std::fabs(model.components[1].params->scale - minus_params.scale) <
              3.0 * se_scale + 1e-4);
    }
}

TEST_CASE("composite of a single full-weight component tracks its gamma") {
    const auto model = single_component_model(GammaParams{2.0, 0.5});
    const auto dist = build_composite(model, 1000000, 99);
    KahanAccumulator mean;
    for (double s : dist.samples) mean.add(s);
    CHECK(mean.value() / double(dist.samples.size()) ==
          Catch::Approx(1.0).epsilon(0.01));
    CHECK(std::is_sorted(dist.samples.begin(), dist.samples.end()));
}

TEST_CASE("composite of a symmetric model is centered at zero") {
    VoltageModel model;
    model.beta = 0.0;
    model.components.push_back({1, Sign::plus, 0.5, GammaParams{2.0, 1.0}, 10});
    model.components.push_back({1, Sign::minus, 0.5, GammaParams{2.0, 1.0}, 10});
    const auto dist = build_composite(model, 100000, 5);
    const double median = dist.samples[dist.samples.size() / 2];
    CHECK(std::fabs(median) < 0.015);
}

TEST_CASE("composite sampling is deterministic in the seed") {
    const auto model = single_component_model(GammaParams{1.5, 0.003});
    const auto a = build_composite(model, 10000, 123);
    const auto b = build_composite(model, 10000, 123);
    CHECK(a.samples == b.samples);
    const auto c = build_composite(model, 10000, 124);
    CHECK(a.samples != c.samples);
    CHECK_THROWS_AS(build_composite(model, 100, 1), ConfigError);
}

TEST_CASE("mixture mode draws single components") {
    VoltageModel model;
    model.beta = 0.0;
    model.components.push_back({1, Sign::plus, 0.75, GammaParams{2.0, 1.0}, 10});
    model.components.push_back({1, Sign::minus, 0.25, GammaParams{2.0, 1.0}, 10});
    const auto dist = build_composite(model, 100000, 17, CompositeMode::mixture);
    const auto positives = std::count_if(dist.samples.begin(), dist.samples.end(),
                                         [](double s) { return s > 0.0; });
    CHECK(double(positives) / double(dist.samples.size()) ==
          Catch::Approx(0.75).margin(0.01));
}

TEST_CASE("empirical cdf clamps at the sample range") {
    std::vector<double> raw(10000);
    Rng rng(3);
    for (auto& v : raw) v = rng.uniform01();
    const auto dist = make_composite_from_samples(std::move(raw));
    CHECK(cdf(dist, -1.0) == 0.0);
    CHECK(cdf(dist, 2.0) == 1.0);
    CHECK(cdf(dist, 0.5) == Catch::Approx(0.5).margin(0.02));

    std::vector<double> big(100000);
    Rng rng2(4);
    for (auto& v : big) v = rng2.uniform01();
    const auto dist2 = make_composite_from_samples(std::move(big));
    CHECK(cdf(dist2, 0.5) == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("cdf derivative approximates the gamma density at its mode") {
    auto sample = sample_gamma({2.0, 1.0}, 100000, 9);
    const auto dist = make_composite_from_samples(std::move(sample));
    CHECK(cdf_derivative(dist, 1.0) ==
          Catch::Approx(std::exp(-1.0)).margin(0.02));
}

TEST_CASE("cdf derivative of a point mass hits the floor") {
    const auto dist = make_composite_from_samples(std::vector<double>(10000, 2.5));
    CHECK(cdf_derivative(dist, 2.5) == 1e-12);
}

TEST_CASE("qq points pair order statistics") {
    const std::vector<double> a{3.0, 1.0, 2.0};
    const auto identity = qq_points(a, a);
    for (const auto& [x, y] : identity) CHECK(x == y);

    std::vector<double> b{6.0, 2.0, 4.0};
    const auto doubled = qq_points(a, b);
    for (const auto& [x, y] : doubled) CHECK(y == Catch::Approx(2.0 * x));

    CHECK_THROWS_AS(qq_points(a, std::vector<double>{1.0}), ShapeError);
    CHECK_THROWS_AS(qq_points(std::vector<double>{1.0}, std::vector<double>{1.0}),
                    RangeError);
}
