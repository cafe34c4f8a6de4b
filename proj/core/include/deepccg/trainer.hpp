#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "deepccg/ccg.hpp"
#include "deepccg/memory.hpp"
#include "deepccg/mlp.hpp"
#include "deepccg/rng.hpp"
#include "deepccg/types.hpp"

// Online continual learners over a batch stream: the conditional-marginal-
// likelihood method with KL-minimizing memory selection, the
// experience-replay baseline with a softmax head and reservoir memory, and
// the two crossover ablations. Memory always stores raw inputs and
// re-embeds them on every use, so the classifier follows the current
// representation in a single posterior refit.

namespace deepccg {

enum class Method { deepccg, er_reservoir, deepccg_reservoir, deepccg_standard_head };
enum class Scenario { task_inc, class_inc };

const char* to_string(Method m);
const char* to_string(Scenario s);
Method method_from_string(const std::string& name);

/// Uses the Gaussian-head loss and posterior predictions.
bool uses_ccg_head(Method m);
/// Stores memory in a flat reservoir instead of per-class selection.
bool uses_reservoir_memory(Method m);

/// Fully connected layer + softmax over class logits.
struct LinearHead {
    int num_classes = 0;
    int dim = 0;
    std::vector<double> weights;  // row-major, num_classes x dim
    std::vector<double> biases;
};

LinearHead init_head(int num_classes, int dim, std::uint64_t seed);

struct TrainerConfig {
    double eta = 0.1;               // learning rate, SGD only
    std::size_t replay_size = 10;   // r
    double prior_a = 1e6;
    std::size_t mem_per_class = 10; // m
    SelectionConfig selection;
};

/// Probe of how much one update moved the first task's embeddings and its
/// test accuracy.
struct ProbeRecord {
    long step_index = 0;
    double mean_rep_shift = 0.0;
    double acc_delta = 0.0;
};

/// Single-owner learner state: embedding parameters, memory, head (for
/// standard-head methods) and the rng driving replay/reservoir draws.
class Learner {
public:
    Learner(Method method, MlpParams params, TrainerConfig cfg, int num_classes,
            std::uint64_t seed);

    /// One full update on a batch with its task's class set: gradient
    /// phase then memory phase. Both phases are also exposed separately so
    /// callers can measure representation shift between them.
    void step(const Batch& batch, const std::vector<int>& task_classes);
    void gradient_update(const Batch& batch, const std::vector<int>& task_classes);
    void memory_update(const Batch& batch, const std::vector<int>& task_classes);

    /// Unweighted mean of per-task test accuracies. Task-incremental
    /// restricts predictions to each task's classes; class-incremental
    /// allows every class seen in training. Gaussian-head methods refit
    /// posteriors from the entire current memory (no replay split).
    double evaluate(const std::vector<TaskSpec>& tasks, Scenario scenario) const;
    double task_accuracy(const TaskSpec& task, Scenario scenario) const;

    const MlpParams& params() const { return params_; }
    Method method() const { return method_; }
    const TrainerConfig& config() const { return cfg_; }
    const std::set<int>& seen_classes() const { return seen_classes_; }
    const MemoryBuffer& class_memory() const { return class_memory_; }
    const std::vector<Example>& reservoir() const { return reservoir_; }
    long reservoir_seen() const { return reservoir_seen_; }
    const LinearHead& head() const { return head_; }

    /// All stored examples regardless of memory layout.
    std::vector<Example> memory_contents() const;

private:
    void register_task(const Batch& batch, const std::vector<int>& task_classes);
    const std::vector<int>& classes_of_task(int task_id) const;
    void gradient_update_ccg(const Batch& batch);
    void gradient_update_standard(const Batch& batch);
    std::vector<int> allowed_for(const TaskSpec& task, Scenario scenario) const;
    int predict_with_head(const Vec& z, const std::vector<int>& allowed) const;

    Method method_;
    MlpParams params_;
    TrainerConfig cfg_;
    MemoryBuffer class_memory_;
    std::vector<Example> reservoir_;
    long reservoir_seen_ = 0;
    std::size_t reservoir_capacity_ = 0;
    std::set<int> seen_classes_;
    std::map<int, std::vector<int>> task_classes_;
    LinearHead head_;
    Rng rng_;
};

/// Mean L2 embedding distance of the first task's test set between two
/// states plus the change in that task's accuracy. Both states must share
/// the network architecture.
ProbeRecord rep_shift_probe(const Learner& before, const Learner& after,
                            const TaskSpec& first_task, Scenario scenario, long step_index);

}  // namespace deepccg
