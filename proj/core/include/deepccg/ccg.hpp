#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "deepccg/types.hpp"

// Bayesian class-conditional Gaussian head over the representation space:
// per-class conjugate posteriors on the means, the closed-form posterior
// predictive, the log conditional marginal likelihood loss with analytic
// Z-gradients, and a Monte Carlo oracle for the predictive.
//
// The model: z | y ~ N(mu_y, I), mu_y ~ N(0, a*I), uniform class prior over
// the allowed set. With n_y conditioning embeddings of class y summing to
// S_y, the posterior is N(S_y / (n_y + 1/a), I / (n_y + 1/a)) and the
// predictive density of z under class y is N(mean_y, s_y * I) with
// s_y = 1 + 1/(n_y + 1/a). A finite prior scale a keeps classes with no
// conditioning data well defined (they fall back to the prior); as a grows
// this reproduces the improper-prior closed form (sample mean, variance
// 1/n) to vanishing error.

namespace deepccg {

struct ClassPosterior {
    int class_id = 0;
    Vec mean;
    long count = 0;       // number of conditioning embeddings
    double prior_a = 1e6;

    double variance_scale() const { return 1.0 / (static_cast<double>(count) + 1.0 / prior_a); }
    double predictive_scale() const { return 1.0 + variance_scale(); }
};

/// Per-class posteriors sharing one prior scale. Classes never observed
/// are served by the pure prior (count 0, zero mean).
class PosteriorSet {
public:
    PosteriorSet() = default;
    PosteriorSet(std::map<int, ClassPosterior> by_class, double prior_a, int dim);

    /// Posterior for class c, falling back to the prior for unseen classes.
    /// `dim` must be supplied when the set might be empty.
    ClassPosterior at(int class_id, int dim) const;

    bool contains(int class_id) const { return by_class_.count(class_id) != 0; }
    const std::map<int, ClassPosterior>& all() const { return by_class_; }
    double prior_a() const { return prior_a_; }
    int dim() const { return dim_; }

private:
    std::map<int, ClassPosterior> by_class_;
    double prior_a_ = 1e6;
    int dim_ = 0;  // 0 until known
};

/// Loss summary for a batch: total_loss is the negative sum of per-example
/// log predictives, and per_example_dLdz holds d(-log p)/dz (descent
/// convention; the trainer owns the single ascent negation).
struct LossReport {
    double total_loss = 0.0;
    std::vector<Vec> per_example_dLdz;
    std::vector<double> per_example_logp;
};

/// One (embedding, label, allowed classes) loss target.
struct LossTarget {
    Vec z;
    int label = 0;
    std::vector<int> task_classes;
};

/// Single-pass conjugate update from conditioning pairs.
PosteriorSet fit_posteriors(const std::vector<std::pair<Vec, int>>& conditioning, double prior_a);

/// log p(c | z) for every allowed class, computed in log space with
/// log-sum-exp stabilization. exp of the outputs sums to 1 over `allowed`.
std::map<int, double> log_predictive(const PosteriorSet& post, const Vec& z,
                                     const std::vector<int>& allowed);

struct McEstimate {
    double prob = 0.0;
    double stderr = 0.0;
};

/// Monte Carlo estimate of the posterior predictive: averages the softmax
/// of per-class likelihoods over mean draws from each class posterior.
/// Unbiased for the closed form computed by log_predictive.
std::map<int, McEstimate> predictive_oracle_mc(const PosteriorSet& post, const Vec& z,
                                               const std::vector<int>& allowed, long num_samples,
                                               std::uint64_t seed);

/// Per-example log predictives and analytic z-gradients; the posteriors
/// are treated as constants (no gradient flows into the conditioning set).
LossReport loss_and_grad(const PosteriorSet& post, const std::vector<LossTarget>& targets);

/// Argmax of log_predictive; ties broken toward the smallest class label.
int predict(const PosteriorSet& post, const Vec& z, const std::vector<int>& allowed);

}  // namespace deepccg
