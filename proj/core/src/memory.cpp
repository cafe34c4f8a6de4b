#include "deepccg/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "deepccg/errors.hpp"

namespace deepccg {

namespace {

Vec mean_of(const std::vector<Vec>& zs) {
    Vec m(zs.front().size(), 0.0);
    for (const Vec& z : zs)
        for (std::size_t i = 0; i < m.size(); ++i) m[i] += z[i];
    for (double& v : m) v /= static_cast<double>(zs.size());
    return m;
}

double squared_distance(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void check_same_dim(const std::vector<Vec>& zs) {
    for (const Vec& z : zs)
        if (z.size() != zs.front().size())
            throw ShapeError("memory: candidate embeddings have mixed dimensions");
}

}  // namespace

double kl_isotropic(const IsotropicGaussian& p, const IsotropicGaussian& q) {
    if (p.mean.size() != q.mean.size()) throw ShapeError("kl: dimension mismatch");
    if (p.var_scale <= 0.0 || q.var_scale <= 0.0)
        throw ContractViolation("kl: variance scales must be positive");
    const auto d = static_cast<double>(p.mean.size());
    const double ratio = p.var_scale / q.var_scale;
    return 0.5 * (d * ratio + squared_distance(p.mean, q.mean) / q.var_scale - d +
                  d * std::log(q.var_scale / p.var_scale));
}

std::vector<std::size_t> brute_force_select(const std::vector<Vec>& candidate_zs, std::size_t m) {
    const std::size_t n = candidate_zs.size();
    if (m > n) throw ContractViolation("brute_force_select: m exceeds candidate count");
    if (m == 0 || n == 0) throw ContractViolation("brute_force_select: empty selection");
    check_same_dim(candidate_zs);

    const Vec target = mean_of(candidate_zs);
    const std::size_t dim = target.size();

    // Enumerate size-m index sets in lexicographic order; strict improvement
    // keeps the lexicographically smallest optimum.
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::size_t> best = idx;
    double best_obj = std::numeric_limits<double>::infinity();
    Vec sum(dim);
    for (;;) {
        std::fill(sum.begin(), sum.end(), 0.0);
        for (std::size_t i : idx)
            for (std::size_t k = 0; k < dim; ++k) sum[k] += candidate_zs[i][k];
        double obj = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double diff = target[k] - sum[k] / static_cast<double>(m);
            obj += diff * diff;
        }
        if (obj < best_obj) {
            best_obj = obj;
            best = idx;
        }
        // next combination
        std::size_t i = m;
        while (i-- > 0) {
            if (idx[i] != i + n - m) {
                ++idx[i];
                for (std::size_t j = i + 1; j < m; ++j) idx[j] = idx[j - 1] + 1;
                break;
            }
            if (i == 0) return best;
        }
    }
}

double selection_objective(const std::vector<Vec>& candidate_zs,
                           const std::vector<std::size_t>& subset) {
    if (subset.empty()) throw ContractViolation("selection_objective: empty subset");
    const Vec target = mean_of(candidate_zs);
    Vec sub_mean(target.size(), 0.0);
    for (std::size_t i : subset)
        for (std::size_t k = 0; k < target.size(); ++k) sub_mean[k] += candidate_zs[i][k];
    for (double& v : sub_mean) v /= static_cast<double>(subset.size());
    return squared_distance(target, sub_mean);
}

namespace {

// One descent phase on the relaxed objective
//   L(beta) = lambda * ||beta||_1 + || target - u/S ||^2,
// u = sum_i beta_i z_i, S = max(||beta||_1, 1e-8), beta clamped to [0,1].
std::vector<double> lasso_weights(const std::vector<Vec>& zs, const Vec& target,
                                  const SelectionConfig& cfg) {
    const std::size_t n = zs.size();
    const std::size_t dim = target.size();
    std::vector<double> beta(n, 1.0);
    Vec u(dim), r(dim);
    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(u.begin(), u.end(), 0.0);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += std::abs(beta[i]);
            for (std::size_t k = 0; k < dim; ++k) u[k] += beta[i] * zs[i][k];
        }
        s = std::max(s, 1e-8);
        double r_dot_u = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            r[k] = target[k] - u[k] / s;
            r_dot_u += r[k] * u[k];
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double sign = beta[i] > 0.0 ? 1.0 : (beta[i] < 0.0 ? -1.0 : 0.0);
            double r_dot_z = 0.0;
            for (std::size_t k = 0; k < dim; ++k) r_dot_z += r[k] * zs[i][k];
            const double grad =
                cfg.lambda * sign - 2.0 * r_dot_z / s + 2.0 * sign * r_dot_u / (s * s);
            beta[i] = std::clamp(beta[i] - cfg.step_size * grad, 0.0, 1.0);
        }
    }
    return beta;
}

// Deterministic local search on the true objective over subsets of fixed
// size: steepest single-element swaps, escalating to pair swaps when no
// single swap improves. Terminates at a 2-swap local optimum or after
// max_passes moves.
std::vector<std::size_t> refine_subset(const std::vector<Vec>& zs, const Vec& target,
                                       const std::vector<std::size_t>& start, int max_passes) {
    const std::size_t n = zs.size();
    const std::size_t m = start.size();
    const std::size_t dim = target.size();

    std::vector<bool> in_subset(n, false);
    Vec sum(dim, 0.0);
    for (std::size_t i : start) {
        in_subset[i] = true;
        for (std::size_t k = 0; k < dim; ++k) sum[k] += zs[i][k];
    }
    auto objective = [&](const Vec& s) {
        double obj = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double diff = target[k] - s[k] / static_cast<double>(m);
            obj += diff * diff;
        }
        return obj;
    };
    auto members = [&](bool inside) {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < n; ++i)
            if (in_subset[i] == inside) out.push_back(i);
        return out;
    };

    double cur = objective(sum);
    Vec trial(dim);
    for (int pass = 0; pass < max_passes; ++pass) {
        const auto inside = members(true);
        const auto outside = members(false);

        double best_obj = cur;
        std::vector<std::size_t> best_out, best_in;
        for (std::size_t out : inside) {
            for (std::size_t in : outside) {
                for (std::size_t k = 0; k < dim; ++k)
                    trial[k] = sum[k] - zs[out][k] + zs[in][k];
                const double obj = objective(trial);
                if (obj < best_obj - 1e-15) {
                    best_obj = obj;
                    best_out = {out};
                    best_in = {in};
                }
            }
        }
        if (best_out.empty() && m >= 2 && outside.size() >= 2) {
            for (std::size_t a = 0; a < inside.size(); ++a)
                for (std::size_t b = a + 1; b < inside.size(); ++b)
                    for (std::size_t p = 0; p < outside.size(); ++p)
                        for (std::size_t q = p + 1; q < outside.size(); ++q) {
                            for (std::size_t k = 0; k < dim; ++k)
                                trial[k] = sum[k] - zs[inside[a]][k] - zs[inside[b]][k] +
                                           zs[outside[p]][k] + zs[outside[q]][k];
                            const double obj = objective(trial);
                            if (obj < best_obj - 1e-15) {
                                best_obj = obj;
                                best_out = {inside[a], inside[b]};
                                best_in = {outside[p], outside[q]};
                            }
                        }
        }
        if (best_out.empty()) break;  // local optimum for both move kinds
        for (std::size_t i : best_out) {
            in_subset[i] = false;
            for (std::size_t k = 0; k < dim; ++k) sum[k] -= zs[i][k];
        }
        for (std::size_t i : best_in) {
            in_subset[i] = true;
            for (std::size_t k = 0; k < dim; ++k) sum[k] += zs[i][k];
        }
        cur = best_obj;
    }
    return members(true);
}

}  // namespace

namespace {

std::vector<std::size_t> top_m_by_score(const std::vector<double>& score, std::size_t m,
                                        bool descending) {
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return descending ? score[a] > score[b] : score[a] < score[b];
        return a < b;
    });
    order.resize(m);
    return order;
}

// Forward greedy completion of a seed element: grow the subset one
// candidate at a time, each time adding the one whose inclusion brings the
// running mean closest to the target.
std::vector<std::size_t> greedy_start(const std::vector<Vec>& zs, const Vec& target,
                                      std::size_t m, std::size_t seed_index) {
    const std::size_t n = zs.size();
    const std::size_t dim = target.size();
    std::vector<bool> used(n, false);
    std::vector<std::size_t> subset = {seed_index};
    used[seed_index] = true;
    Vec sum = zs[seed_index];
    while (subset.size() < m) {
        std::size_t best = n;
        double best_obj = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (used[i]) continue;
            if (best == n) best = i;  // first unused as the fallback pick
            double obj = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff =
                    target[k] - (sum[k] + zs[i][k]) / static_cast<double>(subset.size() + 1);
                obj += diff * diff;
            }
            if (obj < best_obj) {
                best_obj = obj;
                best = i;
            }
        }
        used[best] = true;
        subset.push_back(best);
        for (std::size_t k = 0; k < dim; ++k) sum[k] += zs[best][k];
    }
    return subset;
}

}  // namespace

std::vector<std::size_t> select_subset_indices(const std::vector<Vec>& candidate_zs, std::size_t m,
                                               const SelectionConfig& cfg) {
    const std::size_t n = candidate_zs.size();
    if (n == 0 || m == 0) return {};
    if (n <= m) {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    check_same_dim(candidate_zs);

    const Vec target = mean_of(candidate_zs);
    const std::vector<double> beta = lasso_weights(candidate_zs, target, cfg);
    std::vector<double> proximity(n);
    for (std::size_t i = 0; i < n; ++i) proximity[i] = squared_distance(candidate_zs[i], target);

    // Swap-refine from several deterministic starts (relaxed weights,
    // target proximity, and a greedy completion of every candidate) and
    // keep the best final subset (ties resolve to the lexicographically
    // smaller one).
    std::vector<std::vector<std::size_t>> starts = {
        top_m_by_score(beta, m, /*descending=*/true),
        top_m_by_score(proximity, m, /*descending=*/false),
    };
    for (std::size_t i = 0; i < n; ++i) starts.push_back(greedy_start(candidate_zs, target, m, i));
    std::vector<std::size_t> best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        auto refined = refine_subset(candidate_zs, target, start, std::max(cfg.steps, 1));
        std::sort(refined.begin(), refined.end());
        const double obj = selection_objective(candidate_zs, refined);
        if (obj < best_obj - 1e-15 || (std::abs(obj - best_obj) <= 1e-15 && refined < best)) {
            best_obj = obj;
            best = std::move(refined);
        }
    }
    return best;
}

std::vector<Example> lasso_select(const std::vector<Example>& batch_class,
                                  const std::vector<Example>& memory_class,
                                  const std::vector<Vec>& embedded_zs, std::size_t m,
                                  const SelectionConfig& cfg) {
    std::vector<const Example*> candidates;
    candidates.reserve(batch_class.size() + memory_class.size());
    for (const Example& e : batch_class) candidates.push_back(&e);
    for (const Example& e : memory_class) candidates.push_back(&e);

    std::vector<Example> out;
    if (candidates.size() <= m) {  // capacity not binding; beta and embeddings unused
        out.reserve(candidates.size());
        for (const Example* e : candidates) out.push_back(*e);
        return out;
    }
    if (embedded_zs.size() != candidates.size())
        throw ShapeError("lasso_select: embeddings not aligned with candidates");
    const auto chosen = select_subset_indices(embedded_zs, m, cfg);
    out.reserve(chosen.size());
    for (std::size_t i : chosen) out.push_back(*candidates[i]);
    return out;
}

void reservoir_update(std::vector<Example>& buffer, const Example& item, long seen_count,
                      std::size_t capacity, Rng& rng) {
    if (seen_count < static_cast<long>(buffer.size()))
        throw ContractViolation("reservoir: seen_count below current buffer size");
    if (capacity == 0) return;
    if (buffer.size() < capacity) {
        buffer.push_back(item);
        return;
    }
    const auto u = uniform_index(rng, static_cast<std::uint64_t>(seen_count));
    if (u < capacity) buffer[static_cast<std::size_t>(u)] = item;
}

std::pair<std::vector<Example>, std::vector<Example>> sample_replay(
    const std::vector<Example>& memory, std::size_t r, Rng& rng) {
    const std::size_t take = std::min(r, memory.size() / 2);
    const auto chosen = sample_without_replacement(memory.size(), take, rng);
    std::vector<bool> picked(memory.size(), false);
    for (std::size_t i : chosen) picked[i] = true;
    std::vector<Example> replay, rest;
    replay.reserve(take);
    rest.reserve(memory.size() - take);
    for (std::size_t i : chosen) replay.push_back(memory[i]);
    for (std::size_t i = 0; i < memory.size(); ++i)
        if (!picked[i]) rest.push_back(memory[i]);
    return {std::move(replay), std::move(rest)};
}

ShiftCheckResult shift_expectation_check(const std::vector<Vec>& candidate_zs,
                                         const std::vector<std::size_t>& subset_indices,
                                         double noise_var, int d, long trials, Rng& rng,
                                         ShiftNoise noise) {
    if (candidate_zs.empty()) throw ContractViolation("shift check: no candidates");
    if (subset_indices.empty()) throw ContractViolation("shift check: empty subset");
    if (noise_var < 0.0) throw ContractViolation("shift check: negative noise variance");
    if (trials < 2) throw ContractViolation("shift check: needs at least 2 trials");
    check_same_dim(candidate_zs);
    if (static_cast<int>(candidate_zs.front().size()) != d)
        throw ShapeError("shift check: dimension does not match candidates");
    {
        std::vector<bool> seen(candidate_zs.size(), false);
        for (std::size_t i : subset_indices) {
            if (i >= candidate_zs.size() || seen[i])
                throw ContractViolation("shift check: subset is not a subset of the candidates");
            seen[i] = true;
        }
    }

    const std::size_t n = candidate_zs.size();
    const std::size_t m = subset_indices.size();
    const Vec target = mean_of(candidate_zs);
    Vec sub_mean(target.size(), 0.0);
    for (std::size_t i : subset_indices)
        for (std::size_t k = 0; k < target.size(); ++k) sub_mean[k] += candidate_zs[i][k];
    for (double& v : sub_mean) v /= static_cast<double>(m);

    ShiftCheckResult res;
    res.predicted = squared_distance(target, sub_mean) +
                    static_cast<double>(d) * noise_var *
                        (1.0 / static_cast<double>(m) - 1.0 / static_cast<double>(n));

    const double sd = std::sqrt(noise_var);
    const double half_width = sd * std::sqrt(3.0);  // centered uniform with matching variance
    std::vector<bool> in_subset(n, false);
    for (std::size_t i : subset_indices) in_subset[i] = true;

    double mean_acc = 0.0, m2 = 0.0;
    Vec all_shift(target.size()), sub_shift(target.size()), eps(target.size());
    for (long t = 0; t < trials; ++t) {
        std::fill(all_shift.begin(), all_shift.end(), 0.0);
        std::fill(sub_shift.begin(), sub_shift.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < eps.size(); ++k)
                eps[k] = noise == ShiftNoise::gaussian
                             ? sd * normal01(rng)
                             : uniform_range(rng, -half_width, half_width);
            for (std::size_t k = 0; k < eps.size(); ++k) {
                const double shifted = candidate_zs[i][k] + eps[k];
                all_shift[k] += shifted;
                if (in_subset[i]) sub_shift[k] += shifted;
            }
        }
        double sq = 0.0;
        for (std::size_t k = 0; k < target.size(); ++k) {
            const double diff =
                all_shift[k] / static_cast<double>(n) - sub_shift[k] / static_cast<double>(m);
            sq += diff * diff;
        }
        const double delta = sq - mean_acc;
        mean_acc += delta / static_cast<double>(t + 1);
        m2 += delta * (sq - mean_acc);
    }
    res.empirical = mean_acc;
    res.stderr = std::sqrt(std::max(0.0, m2 / static_cast<double>(trials - 1)) /
                           static_cast<double>(trials));
    return res;
}

const std::vector<Example>* MemoryBuffer::class_list(int cls) const {
    const auto it = slots_.find(cls);
    return it == slots_.end() ? nullptr : &it->second;
}

void MemoryBuffer::set_class_list(int cls, std::vector<Example> list) {
    if (list.size() > capacity_)
        throw ContractViolation("memory: class list exceeds per-class capacity");
    if (list.empty()) {
        slots_.erase(cls);
        return;
    }
    slots_[cls] = std::move(list);
}

std::vector<Example> MemoryBuffer::flatten() const {
    std::vector<Example> out;
    out.reserve(total_size());
    for (const auto& [cls, list] : slots_) out.insert(out.end(), list.begin(), list.end());
    return out;
}

std::size_t MemoryBuffer::total_size() const {
    std::size_t n = 0;
    for (const auto& [cls, list] : slots_) n += list.size();
    return n;
}

std::vector<int> MemoryBuffer::classes() const {
    std::vector<int> out;
    out.reserve(slots_.size());
    for (const auto& [cls, list] : slots_) out.push_back(cls);
    return out;
}

}  // namespace deepccg
