#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pvvolt/errors.hpp"
#include "pvvolt/matrix.hpp"

namespace pvvolt {

struct SparseSvdConfig {
    double alpha = 0.05;        // l1 weight on the left vector
    double epsilon = 1e-6;      // convergence tolerance on ||x_{t+1} - x_t||
    std::size_t max_iterations = 500;
};

inline void validate_sparse_svd_config(const SparseSvdConfig& c) {
    if (!(c.alpha >= 0.0) || !(c.epsilon > 0.0) || c.max_iterations < 1) {
        throw ConfigError(
            "sparse_svd.validate_config: need alpha >= 0, epsilon > 0, "
            "max_iterations >= 1");
    }
}

// One rank-one factor: sparse left vector, right vector, singular value.
// x and y are unit norm after finalization unless zero_solution is set, in
// which case x collapsed to the zero vector mid-iteration.
struct SparseFactor {
    std::vector<double> x;
    std::vector<double> y;
    double sigma = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    bool zero_solution = false;
};

struct DominantPair {
    std::vector<double> x;
    std::vector<double> y;
    double sigma = 0.0;
};

// Per-iteration objective values, for numerical monotonicity checks.
// `gauge` evaluates the objective with y replaced by its unpenalized
// minimizer H^T x / ||x||^2, which removes the scale ambiguity of the
// alternation (the raw step-2 vector carries a factor of ||x||).
struct ObjectiveTrace {
    std::vector<double> before_x_update;
    std::vector<double> after_x_update;
    std::vector<double> gauge;
};

// ||H - x y^T||_F^2 + alpha ||x||_1, computed without forming the outer product.
inline double penalized_objective(const Matrix& h, std::span<const double> x,
                                  std::span<const double> y, double alpha) {
    const auto hy = h.matvec(y);
    const double xhy = vec_dot(x, hy);
    const double nx = vec_norm(x);
    const double ny = vec_norm(y);
    return h.frobenius_sq() - 2.0 * xhy + nx * nx * ny * ny + alpha * vec_l1(x);
}

inline double gauge_objective(const Matrix& h, std::span<const double> x, double alpha) {
    const double nx_sq = vec_dot(x, x);
    if (nx_sq == 0.0) return h.frobenius_sq();
    const auto htx = h.tmatvec(x);
    const double nhtx = vec_norm(htx);
    return h.frobenius_sq() - nhtx * nhtx / nx_sq + alpha * vec_l1(x);
}

namespace detail {

// Joint sign flip so that sum(x) >= 0; on an exact tie the entry of largest
// magnitude is made positive. Fixes the orientation the cluster criterion
// "x_i > 0" depends on.
inline void canonicalize_sign(std::vector<double>& x, std::vector<double>& y) {
    double sum = 0.0;
    for (double v : x) sum += v;
    bool flip = sum < 0.0;
    if (sum == 0.0) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (std::fabs(x[i]) > std::fabs(x[arg])) arg = i;
        }
        flip = !x.empty() && x[arg] < 0.0;
    }
    if (flip) {
        for (double& v : x) v = -v;
        for (double& v : y) v = -v;
    }
}

}  // namespace detail

// Dominant singular triple by power iteration on H^T H (applied as two
// matrix-vector products per sweep). Deterministic start: the normalized
// column-sum vector, falling back to the heaviest column's basis vector.
inline DominantPair dominant_pair(const Matrix& h) {
    const std::string where = "sparse_svd.dominant_pair";
    const double frob = std::sqrt(h.frobenius_sq());
    if (!(frob > 0.0)) {
        throw ZeroMatrix(where + ": matrix is zero");
    }
    const std::size_t n = h.cols();

    std::vector<double> y = h.column_sums();
    double ny = vec_norm(y);
    if (ny <= 1e-12 * frob) {
        // Column sums cancel; start from the column with the largest norm.
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < n; ++j) {
            double col_sq = 0.0;
            for (std::size_t i = 0; i < h.rows(); ++i) col_sq += h(i, j) * h(i, j);
            if (col_sq > best) {
                best = col_sq;
                arg = j;
            }
        }
        y.assign(n, 0.0);
        y[arg] = 1.0;
        ny = 1.0;
    }
    for (double& v : y) v /= ny;

    constexpr double tol = 1e-10;
    constexpr std::size_t max_sweeps = 200000;
    std::vector<double> x(h.rows(), 0.0);
    double sigma = 0.0;
    auto g = h.matvec(y);
    std::size_t basis_cursor = 0;
    for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
        const double ng = vec_norm(g);
        if (ng <= 1e-15 * frob) {
            // y is (numerically) in the null space; restart from a basis vector.
            y.assign(n, 0.0);
            y[basis_cursor % n] = 1.0;
            ++basis_cursor;
            g = h.matvec(y);
            continue;
        }
        x = g;
        for (double& v : x) v /= ng;
        auto ht_x = h.tmatvec(x);
        sigma = vec_norm(ht_x);
        y = ht_x;
        for (double& v : y) v /= sigma;
        g = h.matvec(y);
        // Hy = sigma x within tol certifies the pair (H^T x = sigma y is exact).
        double residual_sq = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = g[i] - sigma * x[i];
            residual_sq += r * r;
        }
        if (std::sqrt(residual_sq) <= tol * frob) break;
    }
    detail::canonicalize_sign(x, y);
    return DominantPair{std::move(x), std::move(y), sigma};
}

// Exact minimizer of ||H - x y^T||_F^2 + alpha ||x||_1 over x: coordinatewise
// soft thresholding of g = H y at alpha/2, divided by ||y||^2.
inline std::vector<double> update_x(const Matrix& h, std::span<const double> y,
                                    double alpha) {
    const std::string where = "sparse_svd.update_x";
    if (!(alpha >= 0.0)) {
        throw ConfigError(where + ": alpha must be nonnegative");
    }
    const double ny_sq = vec_dot(y, y);
    if (!(ny_sq > 0.0)) {
        throw ZeroVector(where + ": y is zero");
    }
    auto x = h.matvec(y);
    const double threshold = 0.5 * alpha;
    for (double& g : x) {
        const double magnitude = std::fabs(g) - threshold;
        g = magnitude > 0.0 ? std::copysign(magnitude, g) / ny_sq : 0.0;
    }
    return x;
}

// y = H^T x / ||x||, the paper's step-2 update (not unit norm in general).
inline std::vector<double> update_y(const Matrix& h, std::span<const double> x) {
    const double nx = vec_norm(x);
    if (!(nx > 0.0)) {
        throw ZeroVector("sparse_svd.update_y: x is zero");
    }
    auto y = h.tmatvec(x);
    for (double& v : y) v /= nx;
    return y;
}

// Alternating minimization for one l1-sparse factor: start from the dominant
// singular pair, repeat the x and y updates until the x iterates settle, then
// normalize and orient. With alpha = 0 this reproduces the dominant pair.
inline SparseFactor procedure(const Matrix& h, const SparseSvdConfig& config,
                              ObjectiveTrace* trace = nullptr) {
    validate_sparse_svd_config(config);
    auto start = dominant_pair(h);  // throws ZeroMatrix on zero input

    SparseFactor factor;
    std::vector<double> x_prev = std::move(start.x);
    std::vector<double> y = std::move(start.y);
    std::vector<double> x;

    for (std::size_t t = 0; t < config.max_iterations; ++t) {
        if (trace) {
            trace->before_x_update.push_back(
                penalized_objective(h, x_prev, y, config.alpha));
        }
        x = update_x(h, y, config.alpha);
        factor.iterations = t + 1;
        if (trace) {
            trace->after_x_update.push_back(penalized_objective(h, x, y, config.alpha));
        }
        const double nx = vec_norm(x);
        if (nx == 0.0) {
            factor.zero_solution = true;
            break;
        }
        y = h.tmatvec(x);
        for (double& v : y) v /= nx;
        if (trace) {
            trace->gauge.push_back(gauge_objective(h, x, config.alpha));
        }
        double diff_sq = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - x_prev[i];
            diff_sq += d * d;
        }
        x_prev = x;
        if (std::sqrt(diff_sq) < config.epsilon) {
            factor.converged = true;
            break;
        }
    }

    if (factor.zero_solution) {
        factor.x.assign(h.rows(), 0.0);
    } else {
        factor.x = std::move(x_prev);
        const double nx = vec_norm(factor.x);
        for (double& v : factor.x) v /= nx;
    }
    const double ny = vec_norm(y);
    if (ny > 0.0) {
        for (double& v : y) v /= ny;
    }
    factor.y = std::move(y);
    factor.sigma =
        factor.zero_solution ? 0.0 : vec_dot(factor.x, h.matvec(factor.y));
    detail::canonicalize_sign(factor.x, factor.y);
    return factor;
}

}  // namespace pvvolt
