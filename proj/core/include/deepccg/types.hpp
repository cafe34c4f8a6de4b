#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepccg {

using Vec = std::vector<double>;

/// One labelled data point. `task_id` is -1 until a task builder assigns
/// it; afterwards it is immutable and travels with the example (memory
/// buffers keep it so stored examples remember their origin task).
struct Example {
    Vec x;
    int label = 0;
    int task_id = -1;
};

using Batch = std::vector<Example>;

/// A task: a class subset plus its train/test examples.
struct TaskSpec {
    int task_id = 0;
    std::vector<int> classes;  // sorted ascending
    std::vector<Example> train_examples;
    std::vector<Example> test_examples;
};

enum class Regime { disjoint, window };

inline const char* to_string(Regime r) {
    return r == Regime::disjoint ? "disjoint" : "window";
}

/// An ordered non-stationary stream specification. `class_order` records
/// the seeded class permutation used by the window regime (identity order
/// for disjoint tasks) so a run can be reproduced from its metadata.
struct TaskSequence {
    std::vector<TaskSpec> tasks;
    int batch_size = 10;
    Regime regime = Regime::disjoint;
    int window_len = 0;  // l; meaningful only for the window regime
    std::vector<int> class_order;
};

/// Synthetic dataset description: K isotropic Gaussian clusters with
/// seeded random means of norm class_mean_scale and per-coordinate
/// standard deviation class_cov_scale.
struct SynthSpec {
    int d_in = 2;
    int num_classes = 2;
    int per_class_count = 2;
    double class_mean_scale = 3.0;
    double class_cov_scale = 0.1;
};

}  // namespace deepccg
