// Test-side oracles, independent of the library's computation paths:
// a dense SVD (Eigen), a quadrature-based gamma CDF, Kolmogorov-Smirnov
// distances, and the asymptotic standard errors of the gamma MLE.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "pvvolt/gamma_mle.hpp"
#include "pvvolt/matrix.hpp"

namespace oracles {

struct DenseSvdTriple {
    std::vector<double> x;
    std::vector<double> y;
    double sigma = 0.0;
};

inline Eigen::MatrixXd to_eigen(const pvvolt::Matrix& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
        }
    }
    return out;
}

// Dominant singular triple via Eigen's Jacobi SVD.
inline DenseSvdTriple dense_dominant_pair(const pvvolt::Matrix& m) {
    const Eigen::MatrixXd a = to_eigen(m);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    DenseSvdTriple out;
    out.sigma = svd.singularValues()(0);
    out.x.resize(m.rows());
    out.y.resize(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out.x[i] = svd.matrixU()(static_cast<Eigen::Index>(i), 0);
    }
    for (std::size_t j = 0; j < m.cols(); ++j) {
        out.y[j] = svd.matrixV()(static_cast<Eigen::Index>(j), 0);
    }
    return out;
}

inline std::vector<double> dense_singular_values(const pvvolt::Matrix& m) {
    const Eigen::MatrixXd a = to_eigen(m);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    std::vector<double> out(svd.singularValues().data(),
                            svd.singularValues().data() + svd.singularValues().size());
    return out;
}

inline double gamma_density(double w, double shape, double scale) {
    if (w <= 0.0) return 0.0;
    return std::exp((shape - 1.0) * std::log(w) - w / scale - shape * std::log(scale) -
                    std::lgamma(shape));
}

// Gamma CDF at each of the (ascending) evaluation points, by Simpson panels
// between consecutive points. The first segment from zero is subdivided to
// keep the panel error negligible at test tolerances.
inline std::vector<double> gamma_cdf_quadrature(std::span<const double> sorted_points,
                                                double shape, double scale) {
    const auto density = [&](double w) { return gamma_density(w, shape, scale); };
    const auto simpson = [&](double a, double b) {
        const double mid = 0.5 * (a + b);
        return (b - a) / 6.0 * (density(a) + 4.0 * density(mid) + density(b));
    };
    const auto integrate = [&](double a, double b, int panels) {
        double acc = 0.0;
        const double h = (b - a) / panels;
        for (int k = 0; k < panels; ++k) {
            acc += simpson(a + k * h, a + (k + 1) * h);
        }
        return acc;
    };

    std::vector<double> out(sorted_points.size(), 0.0);
    double cumulative = 0.0;
    double previous = 0.0;
    for (std::size_t i = 0; i < sorted_points.size(); ++i) {
        const double z = sorted_points[i];
        if (z > previous) {
            const int panels = i == 0 ? 4096 : 8;
            cumulative += integrate(previous, z, panels);
            previous = z;
        }
        out[i] = std::min(cumulative, 1.0);
    }
    return out;
}

// KS distance between an ascending sample and CDF values at those points.
inline double ks_distance_to_cdf(std::span<const double> sorted_sample,
                                 std::span<const double> cdf_values) {
    const double n = static_cast<double>(sorted_sample.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < sorted_sample.size(); ++i) {
        const double hi = (static_cast<double>(i) + 1.0) / n;
        const double lo = static_cast<double>(i) / n;
        worst = std::max(worst, std::fabs(hi - cdf_values[i]));
        worst = std::max(worst, std::fabs(lo - cdf_values[i]));
    }
    return worst;
}

// Two-sample KS distance (both samples ascending).
inline double ks_distance_two_sample(std::span<const double> a,
                                     std::span<const double> b) {
    double worst = 0.0;
    std::size_t ia = 0, ib = 0;
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    while (ia < a.size() && ib < b.size()) {
        if (a[ia] <= b[ib]) {
            ++ia;
        } else {
            ++ib;
        }
        worst = std::max(worst, std::fabs(static_cast<double>(ia) / na -
                                          static_cast<double>(ib) / nb));
    }
    return worst;
}

// Asymptotic standard errors of the gamma MLE (inverse Fisher information).
inline std::pair<double, double> gamma_mle_standard_errors(double shape, double scale,
                                                           std::size_t n) {
    const double psi1 = pvvolt::trigamma(shape);
    const double det = shape * psi1 - 1.0;
    const double var_shape = shape / (static_cast<double>(n) * det);
    const double var_scale =
        scale * scale * psi1 / (static_cast<double>(n) * det);
    return {std::sqrt(var_shape), std::sqrt(var_scale)};
}

}  // namespace oracles
