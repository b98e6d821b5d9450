#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "pvvolt/clustering.hpp"
#include "pvvolt/rng.hpp"

using namespace pvvolt;

namespace {

StackedMatrix wrap(Matrix m) {
    StackedMatrix out;
    out.block_offsets = {{0, m.rows()}};
    out.values = std::move(m);
    return out;
}

std::set<std::size_t> as_set(const std::vector<std::size_t>& v) {
    return {v.begin(), v.end()};
}

// Two orthogonal day patterns plus near-zero noise rows, the planted
// ground truth for recovery checks.
Matrix two_pattern_matrix(std::uint64_t seed, std::size_t n = 40) {
    Rng rng(seed);
    Matrix m(25, n, 0.0);
    std::vector<double> a(n, 0.0), b(n, 0.0);
    // Disjoint supports make the patterns exactly orthogonal.
    for (std::size_t j = 0; j < n / 2; ++j) a[j] = 1.0 + rng.uniform01();
    for (std::size_t j = n / 2; j < n; ++j) b[j] = 1.0 + rng.uniform01();
    const double na = vec_norm(a), nb = vec_norm(b);
    for (auto& v : a) v /= na;
    for (auto& v : b) v /= nb;
    for (std::size_t i = 0; i < 10; ++i) {
        const double scale = 2.0 + 0.1 * double(i);
        for (std::size_t j = 0; j < n; ++j) m(i, j) = scale * a[j];
    }
    for (std::size_t i = 10; i < 20; ++i) {
        const double scale = 1.0 + 0.05 * double(i - 10);
        for (std::size_t j = 0; j < n; ++j) m(i, j) = scale * b[j];
    }
    for (std::size_t i = 20; i < 25; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = 0.001 * rng.normal();
    }
    return m;
}

}  // namespace

TEST_CASE("assign_cluster keeps strictly positive entries") {
    CHECK(assign_cluster(std::vector<double>{0.5, 0.0, -0.1}) ==
          std::vector<std::size_t>{0});
    CHECK(assign_cluster(std::vector<double>{0.0, 0.0}).empty());
}

TEST_CASE("clustering recovers planted patterns and the noise remainder") {
    const auto stacked = wrap(two_pattern_matrix(7));
    const auto set = run_clustering(stacked, {0.05, 1e-8, 500}, 3);
    REQUIRE(set.clusters.size() == 3);
    REQUIRE(set.bases.size() == 2);
    REQUIRE(set.factors.size() == 2);

    std::set<std::size_t> expected_a, expected_b;
    for (std::size_t i = 0; i < 10; ++i) expected_a.insert(i);
    for (std::size_t i = 10; i < 20; ++i) expected_b.insert(i);
    CHECK(as_set(set.clusters[0]) == expected_a);
    CHECK(as_set(set.clusters[1]) == expected_b);
    for (std::size_t i = 20; i < 25; ++i) {
        CHECK(as_set(set.clusters[2]).contains(i));
    }

    // Exhaustive: every row appears somewhere.
    std::set<std::size_t> all;
    for (const auto& cluster : set.clusters) {
        for (std::size_t row : cluster) all.insert(row);
    }
    CHECK(all.size() == 25);
}

TEST_CASE("deflation satisfies the Frobenius contraction identity") {
    const auto stacked = wrap(two_pattern_matrix(21));
    const auto set = run_clustering(stacked, {0.05, 1e-8, 500}, 3);

    Matrix residual = stacked.values;
    for (const auto& factor : set.factors) {
        if (vec_l0(factor.x) <= 1) break;  // final factor is not deflated
        const double before = residual.frobenius_sq();
        residual.subtract_outer(factor.sigma, factor.x, factor.y);
        const double after = residual.frobenius_sq();
        CHECK(after == Catch::Approx(before - factor.sigma * factor.sigma)
                            .epsilon(1e-8));
        CHECK(after <= before);
    }
}

TEST_CASE("rank-one input yields one cluster of all rows") {
    Matrix m(8, 6, 0.0);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 6; ++j) m(i, j) = 0.5 + 0.1 * double(j);
    }
    const auto set = run_clustering(wrap(std::move(m)), {0.05, 1e-8, 500}, 3);
    std::set<std::size_t> everything;
    for (std::size_t i = 0; i < 8; ++i) everything.insert(i);
    CHECK(as_set(set.clusters.front()) == everything);
    CHECK(set.clusters.back().empty());  // nothing left over
}

TEST_CASE("the reporting-only extra factor appears when the cap binds") {
    const auto stacked = wrap(two_pattern_matrix(3));
    const auto set = run_clustering(stacked, {0.05, 1e-8, 500}, 3);
    // Noise rows still carry energy after two deflations, so the third basis
    // is computed for reporting.
    CHECK(set.extra_factor.has_value());
    CHECK(set.bases.size() == 2);
}

TEST_CASE("clustering validates its inputs") {
    const auto stacked = wrap(two_pattern_matrix(5));
    CHECK_THROWS_AS(run_clustering(stacked, {0.05, 1e-8, 500}, 1), ConfigError);
    CHECK_THROWS_AS(run_clustering(wrap(Matrix(4, 4, 0.0)), {0.05, 1e-8, 500}, 3),
                    ZeroMatrix);
}

TEST_CASE("restrict_clusters_to_consumer maps rows to day indices") {
    StackedMatrix stacked;
    stacked.values = Matrix(10, 4, 1.0);
    stacked.block_offsets = {{0, 4}, {4, 10}};
    ClusterSet set;
    set.clusters = {{0, 2, 5, 9}, {3, 4}};
    const auto first = restrict_clusters_to_consumer(set, stacked, 0);
    REQUIRE(first.size() == 2);
    CHECK(first[0] == std::vector<std::size_t>{0, 2});
    CHECK(first[1] == std::vector<std::size_t>{3});
    const auto second = restrict_clusters_to_consumer(set, stacked, 1);
    CHECK(second[0] == std::vector<std::size_t>{1, 5});
    CHECK(second[1] == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(restrict_clusters_to_consumer(set, stacked, 2), IndexError);
}

TEST_CASE("singular spectrum of a diagonal matrix") {
    const auto m = Matrix::from_rows(
        {{5.0, 0.0, 0.0}, {0.0, 3.0, 0.0}, {0.0, 0.0, 1.0}});
    const auto spectrum = singular_spectrum(m, 3);
    REQUIRE(spectrum.size() == 3);
    CHECK(spectrum[0] == Catch::Approx(5.0).epsilon(1e-8));
    CHECK(spectrum[1] == Catch::Approx(3.0).epsilon(1e-8));
    CHECK(spectrum[2] == Catch::Approx(1.0).epsilon(1e-8));
    CHECK_THROWS_AS(singular_spectrum(m, 4), RangeError);
}

TEST_CASE("singular spectrum flags rank deficiency") {
    // Rank-two 6x5 matrix.
    Rng rng(14);
    std::vector<double> u1(6), v1(5), u2(6), v2(5);
    for (auto& v : u1) v = rng.normal();
    for (auto& v : v1) v = rng.normal();
    for (auto& v : u2) v = rng.normal();
    for (auto& v : v2) v = rng.normal();
    Matrix m(6, 5, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            m(i, j) = 2.0 * u1[i] * v1[j] + 0.5 * u2[i] * v2[j];
        }
    }
    const auto spectrum = singular_spectrum(m, 4);
    CHECK(spectrum[2] <= 1e-8 * spectrum[0]);
    CHECK(spectrum[3] <= 1e-8 * spectrum[0]);
}

TEST_CASE("singular spectrum matches the dense oracle on random input") {
    const auto make = [](std::uint64_t seed) {
        Rng rng(seed);
        Matrix m(10, 12);
        for (std::size_t i = 0; i < 10; ++i) {
            for (std::size_t j = 0; j < 12; ++j) m(i, j) = rng.normal();
        }
        return m;
    };
    for (std::uint64_t seed : {31ull, 32ull}) {
        const auto m = make(seed);
        const auto mine = singular_spectrum(m, 6);
        const auto dense = oracles::dense_singular_values(m);
        for (std::size_t k = 0; k < mine.size(); ++k) {
            CHECK(mine[k] == Catch::Approx(dense[k]).epsilon(1e-6));
        }
    }
}
