#pragma once

// Test-side oracles, kept independent of the library paths they check.

#include <cmath>
#include <map>
#include <vector>

#include "deepccg/types.hpp"

namespace testing_oracles {

/// Accuracy of the nearest-class-mean rule in raw input space; the
/// separability oracle for synthetic datasets.
inline double nearest_mean_accuracy(const std::vector<deepccg::Example>& data) {
    std::map<int, deepccg::Vec> sums;
    std::map<int, int> counts;
    for (const auto& e : data) {
        auto& s = sums[e.label];
        if (s.empty()) s.assign(e.x.size(), 0.0);
        for (std::size_t k = 0; k < e.x.size(); ++k) s[k] += e.x[k];
        ++counts[e.label];
    }
    for (auto& [c, s] : sums)
        for (double& v : s) v /= counts[c];

    int correct = 0;
    for (const auto& e : data) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& [c, mean] : sums) {
            double d = 0.0;
            for (std::size_t k = 0; k < e.x.size(); ++k)
                d += (e.x[k] - mean[k]) * (e.x[k] - mean[k]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == e.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// KL(p || q) of one-dimensional Gaussians by Simpson quadrature of
/// p log(p/q); quadrature oracle for the closed form.
inline double kl_gaussian_1d_quadrature(double mu_p, double var_p, double mu_q, double var_q) {
    const double sd_p = std::sqrt(var_p);
    const double lo = mu_p - 12.0 * sd_p;
    const double hi = mu_p + 12.0 * sd_p;
    const int n = 20000;  // even
    const double h = (hi - lo) / n;
    auto integrand = [&](double x) {
        const double log_p =
            -0.5 * std::log(2.0 * M_PI * var_p) - (x - mu_p) * (x - mu_p) / (2.0 * var_p);
        const double log_q =
            -0.5 * std::log(2.0 * M_PI * var_q) - (x - mu_q) * (x - mu_q) / (2.0 * var_q);
        return std::exp(log_p) * (log_p - log_q);
    };
    double acc = integrand(lo) + integrand(hi);
    for (int i = 1; i < n; ++i) acc += integrand(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace testing_oracles
