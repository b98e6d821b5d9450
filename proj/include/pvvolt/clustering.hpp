#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pvvolt/dataset.hpp"
#include "pvvolt/errors.hpp"
#include "pvvolt/matrix.hpp"
#include "pvvolt/sparse_svd.hpp"

namespace pvvolt {

// Output of the deflation clustering. `clusters` holds day-row index sets
// over the stacked matrix, the last one being the remainder (rows not
// claimed by any factor). Clusters may overlap; their union is exhaustive.
// `extra_factor` is the factor of the final residual, computed for
// reporting when the iteration cap (rather than sparsity) stopped the loop;
// it takes no part in the grouping.
struct ClusterSet {
    std::vector<std::vector<std::size_t>> clusters;
    std::vector<std::vector<double>> bases;   // right vector per non-remainder cluster
    std::vector<SparseFactor> factors;        // per non-remainder cluster
    std::optional<SparseFactor> extra_factor;

    std::size_t cluster_count() const { return clusters.size(); }
};

// Rows whose sparse left-vector entry is strictly positive, under the
// library's sign canonicalization.
inline std::vector<std::size_t> assign_cluster(std::span<const double> x) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) rows.push_back(i);
    }
    return rows;
}

// Repeated Procedure calls on deflated residuals. Each iteration claims the
// rows correlated with its basis; iteration stops when the left vector has
// at most one nonzero entry or after max_clusters - 1 factors. Unclaimed
// rows form the final remainder cluster.
inline ClusterSet run_clustering(const StackedMatrix& stacked,
                                 const SparseSvdConfig& config,
                                 std::size_t max_clusters) {
    const std::string where = "clustering.run_clustering";
    if (max_clusters < 2) {
        throw ConfigError(where + ": max_clusters must be >= 2");
    }
    validate_sparse_svd_config(config);

    ClusterSet out;
    Matrix residual = stacked.values;
    const double frob0_sq = residual.frobenius_sq();
    if (frob0_sq == 0.0) {
        throw ZeroMatrix(where + ": stacked matrix is zero");
    }
    bool stopped_by_sparsity = false;

    for (std::size_t t = 0; t + 1 < max_clusters; ++t) {
        if (residual.frobenius_sq() <= 1e-24 * frob0_sq) {
            break;  // rank exhausted by earlier deflations
        }
        SparseFactor factor = procedure(residual, config);
        out.clusters.push_back(assign_cluster(factor.x));
        out.bases.push_back(factor.y);
        const bool sparse_stop = vec_l0(factor.x) <= 1;
        if (!sparse_stop) {
            residual.subtract_outer(factor.sigma, factor.x, factor.y);
        }
        out.factors.push_back(std::move(factor));
        if (sparse_stop) {
            stopped_by_sparsity = true;
            break;
        }
    }

    if (!stopped_by_sparsity && residual.frobenius_sq() > 1e-24 * frob0_sq) {
        out.extra_factor = procedure(residual, config);
    }

    // Remainder: every row of H not in C_1, ..., C_t.
    std::vector<bool> claimed(stacked.values.rows(), false);
    for (const auto& cluster : out.clusters) {
        for (std::size_t row : cluster) claimed[row] = true;
    }
    std::vector<std::size_t> remainder;
    for (std::size_t row = 0; row < claimed.size(); ++row) {
        if (!claimed[row]) remainder.push_back(row);
    }
    out.clusters.push_back(std::move(remainder));
    return out;
}

// Per-consumer view of a cluster set: row indices of the stacked matrix are
// mapped back to day indices through the consumer's block offsets. Every
// cluster (including the remainder) is preserved, possibly empty.
inline std::vector<std::vector<std::size_t>> restrict_clusters_to_consumer(
    const ClusterSet& set, const StackedMatrix& stacked, std::size_t consumer) {
    if (consumer >= stacked.block_offsets.size()) {
        throw IndexError("clustering.restrict_clusters_to_consumer: consumer index " +
                         std::to_string(consumer) + " out of range");
    }
    const auto [begin, end] = stacked.block_offsets[consumer];
    std::vector<std::vector<std::size_t>> out;
    out.reserve(set.clusters.size());
    for (const auto& cluster : set.clusters) {
        std::vector<std::size_t> days;
        for (std::size_t row : cluster) {
            if (row >= begin && row < end) days.push_back(row - begin);
        }
        out.push_back(std::move(days));
    }
    return out;
}

// Top `count` singular values by repeated dominant pairs with exact
// rank-one deflation (no l1 penalty).
inline std::vector<double> singular_spectrum(const Matrix& h, std::size_t count) {
    const std::string where = "clustering.singular_spectrum";
    if (count > std::min(h.rows(), h.cols())) {
        throw RangeError(where + ": count " + std::to_string(count) +
                         " exceeds matrix rank bound");
    }
    std::vector<double> spectrum;
    spectrum.reserve(count);
    Matrix residual = h;
    const double frob0_sq = residual.frobenius_sq();
    for (std::size_t k = 0; k < count; ++k) {
        if (residual.frobenius_sq() <= 1e-28 * frob0_sq || frob0_sq == 0.0) {
            spectrum.push_back(0.0);
            continue;
        }
        const auto pair = dominant_pair(residual);
        spectrum.push_back(pair.sigma);
        residual.subtract_outer(pair.sigma, pair.x, pair.y);
    }
    return spectrum;
}

}  // namespace pvvolt
