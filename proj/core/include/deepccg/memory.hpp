#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "deepccg/rng.hpp"
#include "deepccg/types.hpp"

// Fixed-capacity episodic memory and the machinery for choosing what to
// keep: the KL selection objective, its mean-distance reduction with a
// lasso relaxation, an exhaustive oracle, the reservoir-sampling baseline,
// replay-set sampling, and the additive-shift robustness verifier.

namespace deepccg {

/// Diagonal-isotropic Gaussian N(mean, var_scale * I).
struct IsotropicGaussian {
    Vec mean;
    double var_scale = 1.0;
};

/// Exact KL(p || q) between isotropic Gaussians of shared dimension.
double kl_isotropic(const IsotropicGaussian& p, const IsotropicGaussian& q);

/// Exhaustively minimizes || mean(all candidates) - mean(subset) ||^2 over
/// subsets of size m; ties resolve to the lexicographically smallest index
/// set. Verification oracle only (cost C(n, m)). Returns sorted indices.
std::vector<std::size_t> brute_force_select(const std::vector<Vec>& candidate_zs, std::size_t m);

/// Squared distance between mean(all candidates) and mean(subset); the
/// selection objective both selectors minimize.
double selection_objective(const std::vector<Vec>& candidate_zs,
                           const std::vector<std::size_t>& subset);

/// Hyperparameters of the relaxed selection: l1 coefficient, iteration
/// budget and step size of the descent on the weights.
struct SelectionConfig {
    double lambda = 0.01;
    int steps = 100;
    double step_size = 0.05;
};

/// Relaxed subset selection: gradient descent on
///   L(beta) = lambda * ||beta||_1
///           + || mean(candidates) - (1/||beta||_1) sum_i beta_i z_i ||^2
/// with beta projected onto [0,1] after each step, followed by the top-m
/// weights (stable tie-break by candidate index) and a deterministic
/// single-swap refinement of that subset under the true objective. The
/// refinement is needed because the relaxed objective is scale-invariant
/// in beta and leaves an all-equal weight vector stationary, so the
/// weights alone cannot order candidates from a uniform start.
/// Returns sorted indices, size min(m, n).
std::vector<std::size_t> select_subset_indices(const std::vector<Vec>& candidate_zs, std::size_t m,
                                               const SelectionConfig& cfg);

/// Per-class memory replacement per the relaxed selection: candidates are
/// the class's batch examples followed by its stored examples, embedded as
/// embedded_zs (aligned). Keeps everything when the capacity m is not
/// binding. Stored task identifiers travel with the examples.
std::vector<Example> lasso_select(const std::vector<Example>& batch_class,
                                  const std::vector<Example>& memory_class,
                                  const std::vector<Vec>& embedded_zs, std::size_t m,
                                  const SelectionConfig& cfg);

/// Classic reservoir sampling update. seen_count is the number of stream
/// items seen so far, counting `item` itself (1-based position).
void reservoir_update(std::vector<Example>& buffer, const Example& item, long seen_count,
                      std::size_t capacity, Rng& rng);

/// Uniform without-replacement replay split: |R| = min(r, floor(|M|/2)) so
/// the conditioning remainder is never empty once memory is nonempty.
/// Returns (R, M \ R); their union is exactly the input.
std::pair<std::vector<Example>, std::vector<Example>> sample_replay(
    const std::vector<Example>& memory, std::size_t r, Rng& rng);

enum class ShiftNoise { gaussian, centered_uniform };

struct ShiftCheckResult {
    double empirical = 0.0;
    double predicted = 0.0;
    double stderr = 0.0;
};

/// Monte Carlo check of the additive-shift identity: with i.i.d. noise of
/// per-coordinate variance noise_var applied to every candidate point,
/// E[ || mean(shifted candidates) - mean(shifted subset) ||^2 ]
///   = || mean(candidates) - mean(subset) ||^2
///   + d * noise_var * (1/|subset| - 1/|candidates|).
/// The subset must be a nonempty subset of the candidate indices (the
/// cross term in the identity requires subset points to shift with their
/// candidates).
ShiftCheckResult shift_expectation_check(const std::vector<Vec>& candidate_zs,
                                         const std::vector<std::size_t>& subset_indices,
                                         double noise_var, int d, long trials, Rng& rng,
                                         ShiftNoise noise = ShiftNoise::gaussian);

/// Per-class lists of stored raw examples, each capped at
/// capacity_per_class. Examples keep their task identifiers and are
/// re-embedded on every use.
class MemoryBuffer {
public:
    explicit MemoryBuffer(std::size_t capacity_per_class) : capacity_(capacity_per_class) {}

    std::size_t capacity_per_class() const { return capacity_; }
    const std::map<int, std::vector<Example>>& slots() const { return slots_; }
    const std::vector<Example>* class_list(int cls) const;
    void set_class_list(int cls, std::vector<Example> list);
    std::vector<Example> flatten() const;  // class-ascending, stable within class
    std::size_t total_size() const;
    std::vector<int> classes() const;

private:
    std::size_t capacity_;
    std::map<int, std::vector<Example>> slots_;
};

}  // namespace deepccg
