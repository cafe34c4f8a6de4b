#include "deepccg/ccg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deepccg/errors.hpp"
#include "deepccg/rng.hpp"

namespace deepccg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

void check_finite(const Vec& z) {
    for (double v : z)
        if (!std::isfinite(v)) throw NumericError("ccg: non-finite embedding");
}

/// log N(z; mean, scale * I)
double log_isotropic_normal(const Vec& z, const Vec& mean, double scale) {
    const auto d = static_cast<double>(z.size());
    double sq = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double diff = z[i] - mean[i];
        sq += diff * diff;
    }
    return -0.5 * d * (kLog2Pi + std::log(scale)) - 0.5 * sq / scale;
}

std::vector<int> sorted_unique(std::vector<int> classes) {
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    return classes;
}

}  // namespace

PosteriorSet::PosteriorSet(std::map<int, ClassPosterior> by_class, double prior_a, int dim)
    : by_class_(std::move(by_class)), prior_a_(prior_a), dim_(dim) {}

ClassPosterior PosteriorSet::at(int class_id, int dim) const {
    const auto it = by_class_.find(class_id);
    if (it != by_class_.end()) return it->second;
    ClassPosterior prior;
    prior.class_id = class_id;
    prior.mean.assign(static_cast<std::size_t>(dim), 0.0);
    prior.count = 0;
    prior.prior_a = prior_a_;
    return prior;
}

PosteriorSet fit_posteriors(const std::vector<std::pair<Vec, int>>& conditioning, double prior_a) {
    if (prior_a <= 0.0) throw ConfigError("ccg: prior_a must be positive");
    int dim = 0;
    std::map<int, ClassPosterior> by_class;
    for (const auto& [z, y] : conditioning) {
        if (dim == 0) dim = static_cast<int>(z.size());
        if (static_cast<int>(z.size()) != dim)
            throw ShapeError("ccg: conditioning embeddings have mixed dimensions");
        check_finite(z);
        auto& post = by_class[y];
        if (post.mean.empty()) {
            post.class_id = y;
            post.mean.assign(z.size(), 0.0);
            post.prior_a = prior_a;
        }
        for (std::size_t i = 0; i < z.size(); ++i) post.mean[i] += z[i];  // sum for now
        ++post.count;
    }
    for (auto& [y, post] : by_class) {
        const double denom = static_cast<double>(post.count) + 1.0 / prior_a;
        for (double& v : post.mean) v /= denom;
    }
    return PosteriorSet(std::move(by_class), prior_a, dim);
}

std::map<int, double> log_predictive(const PosteriorSet& post, const Vec& z,
                                     const std::vector<int>& allowed) {
    if (allowed.empty()) throw ContractViolation("ccg: allowed class set is empty");
    check_finite(z);
    const int dim = static_cast<int>(z.size());

    std::map<int, double> log_joint;
    double max_log = -std::numeric_limits<double>::infinity();
    for (int c : sorted_unique(allowed)) {
        const ClassPosterior cp = post.at(c, dim);
        if (static_cast<int>(cp.mean.size()) != dim)
            throw ShapeError("ccg: posterior dimension does not match query");
        const double lp = log_isotropic_normal(z, cp.mean, cp.predictive_scale());
        log_joint.emplace(c, lp);
        max_log = std::max(max_log, lp);
    }
    double sum = 0.0;
    for (const auto& [c, lp] : log_joint) sum += std::exp(lp - max_log);
    const double log_norm = max_log + std::log(sum);
    for (auto& [c, lp] : log_joint) lp -= log_norm;
    return log_joint;
}

std::map<int, McEstimate> predictive_oracle_mc(const PosteriorSet& post, const Vec& z,
                                               const std::vector<int>& allowed, long num_samples,
                                               std::uint64_t seed) {
    if (allowed.empty()) throw ContractViolation("ccg: allowed class set is empty");
    if (num_samples < 10000)
        throw ContractViolation("ccg: the Monte Carlo oracle needs at least 10^4 samples");
    check_finite(z);
    const int dim = static_cast<int>(z.size());
    const auto classes = sorted_unique(allowed);

    // Each class's marginal likelihood m_c(z) = E_{mu_c ~ posterior}
    // [N(z; mu_c, I)] is estimated by its own Monte Carlo mean; the
    // predictive is the ratio m_y / sum_c m_c, matching the closed-form
    // integral class by class. (Averaging the per-draw softmax instead
    // would estimate a different quantity.)
    Rng rng(seed);
    const std::size_t nc = classes.size();
    std::vector<std::vector<double>> log_w(nc);
    double global_max = -std::numeric_limits<double>::infinity();
    Vec mu(static_cast<std::size_t>(dim));
    for (std::size_t k = 0; k < nc; ++k) {
        const ClassPosterior cp = post.at(classes[k], dim);
        const double sd = std::sqrt(cp.variance_scale());
        log_w[k].resize(static_cast<std::size_t>(num_samples));
        for (long s = 0; s < num_samples; ++s) {
            for (int i = 0; i < dim; ++i)
                mu[static_cast<std::size_t>(i)] =
                    cp.mean[static_cast<std::size_t>(i)] + sd * normal01(rng);
            const double lw = log_isotropic_normal(z, mu, 1.0);  // unit likelihood covariance
            log_w[k][static_cast<std::size_t>(s)] = lw;
            global_max = std::max(global_max, lw);
        }
    }

    // Scaled marginal means and their variances (shared scale cancels in
    // the ratio); standard errors by the delta method with independent
    // per-class estimates.
    std::vector<double> m_hat(nc, 0.0), var_hat(nc, 0.0);
    for (std::size_t k = 0; k < nc; ++k) {
        double mean = 0.0, m2 = 0.0;
        for (long s = 0; s < num_samples; ++s) {
            const double w = std::exp(log_w[k][static_cast<std::size_t>(s)] - global_max);
            const double delta = w - mean;
            mean += delta / static_cast<double>(s + 1);
            m2 += delta * (w - mean);
        }
        m_hat[k] = mean;
        var_hat[k] = std::max(0.0, m2 / static_cast<double>(num_samples - 1)) /
                     static_cast<double>(num_samples);
    }
    double total = 0.0;
    for (double m : m_hat) total += m;

    std::map<int, McEstimate> out;
    for (std::size_t k = 0; k < nc; ++k) {
        McEstimate est;
        est.prob = m_hat[k] / total;
        double var = 0.0;
        for (std::size_t j = 0; j < nc; ++j) {
            const double der = j == k ? (total - m_hat[k]) / (total * total)
                                      : -m_hat[k] / (total * total);
            var += der * der * var_hat[j];
        }
        est.stderr = std::sqrt(var);
        out.emplace(classes[k], est);
    }
    return out;
}

LossReport loss_and_grad(const PosteriorSet& post, const std::vector<LossTarget>& targets) {
    LossReport report;
    report.per_example_dLdz.reserve(targets.size());
    report.per_example_logp.reserve(targets.size());
    for (const LossTarget& t : targets) {
        const auto classes = sorted_unique(t.task_classes);
        if (!std::binary_search(classes.begin(), classes.end(), t.label))
            throw ContractViolation("ccg: label " + std::to_string(t.label) +
                                    " not in its task's class set");
        const auto logp = log_predictive(post, t.z, classes);
        const int dim = static_cast<int>(t.z.size());

        // dlogp/dz = -(z - mean_y)/s_y + sum_c p(c|z) (z - mean_c)/s_c;
        // stored negated (descent on -log p).
        Vec dneg(t.z.size(), 0.0);
        {
            const ClassPosterior cp = post.at(t.label, dim);
            const double s = cp.predictive_scale();
            for (std::size_t i = 0; i < t.z.size(); ++i) dneg[i] += (t.z[i] - cp.mean[i]) / s;
        }
        for (const auto& [c, lp] : logp) {
            const ClassPosterior cp = post.at(c, dim);
            const double s = cp.predictive_scale();
            const double p = std::exp(lp);
            for (std::size_t i = 0; i < t.z.size(); ++i) dneg[i] -= p * (t.z[i] - cp.mean[i]) / s;
        }

        report.per_example_logp.push_back(logp.at(t.label));
        report.total_loss -= logp.at(t.label);
        report.per_example_dLdz.push_back(std::move(dneg));
    }
    return report;
}

int predict(const PosteriorSet& post, const Vec& z, const std::vector<int>& allowed) {
    const auto logp = log_predictive(post, z, allowed);
    int best = logp.begin()->first;
    double best_lp = logp.begin()->second;
    for (const auto& [c, lp] : logp) {
        if (lp > best_lp) {  // map iterates ascending, so ties keep the smaller label
            best = c;
            best_lp = lp;
        }
    }
    return best;
}

}  // namespace deepccg
