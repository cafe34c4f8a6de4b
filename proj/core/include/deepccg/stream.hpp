#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "deepccg/rng.hpp"
#include "deepccg/types.hpp"

// Non-stationary classification streams: synthetic/CSV datasets split into
// disjoint-task or shifting-window sequences with held-out test data.

namespace deepccg {

/// Generates spec.per_class_count examples per class. Class means are
/// random directions scaled to norm class_mean_scale; candidates closer
/// than class_mean_scale to an already placed mean are rejected (up to a
/// bounded number of retries) so nearest-mean separability holds at small
/// noise. Deterministic given the seed. Examples have task_id unset.
std::vector<Example> synth_gaussian_dataset(const SynthSpec& spec, std::uint64_t seed);

/// Parses the dataset CSV format: header "y,x0,...,x{d-1}", one example
/// per row, '.' decimal separator, LF or CRLF line endings. Labels must be
/// non-negative integers. Throws ParseError naming the 1-based data row on
/// ragged rows, non-numeric cells or negative labels. An empty body is a
/// valid empty dataset.
std::vector<Example> load_csv_dataset(std::istream& in);

/// Writes the same CSV format with shortest-round-trip number formatting,
/// so load(write(data)) reproduces x bit-exactly.
void write_csv_dataset(std::ostream& out, const std::vector<Example>& data);

/// Partitions classes evenly over num_tasks tasks (sorted class order,
/// contiguous chunks) with a stratified per-class train/test split.
/// test_fraction defaults to 0.2; each class keeps at least one train and
/// one test example. Throws ConfigError when the class count is not
/// divisible by num_tasks or a class has fewer than 2 examples.
TaskSequence build_disjoint_tasks(const std::vector<Example>& data, int num_tasks,
                                  double test_fraction, std::uint64_t seed);

/// Shifting-window tasks over a seeded class permutation c_0..c_{K-1}:
/// task i covers classes c_i..c_{i+window_len}, giving K - window_len
/// tasks. Each class's train (and test) pool is dealt in equal
/// floor(pool/occurrences) slices to the windows containing it, so no
/// example appears in two tasks. Throws ConfigError when any class would
/// contribute zero train or test examples to one of its windows.
TaskSequence build_shifting_window(const std::vector<Example>& data, int window_len,
                                   double test_fraction, std::uint64_t seed);

/// Serves one task at a time, in task order, as seeded-shuffled batches of
/// seq.batch_size (the last batch of a task may be smaller). Replaying
/// with the same seed yields the identical batch order.
class BatchStream {
public:
    BatchStream(const TaskSequence& seq, std::uint64_t seed);

    /// Next (batch, task_id), or nullopt at end of stream.
    std::optional<std::pair<Batch, int>> next();

private:
    const TaskSequence* seq_;
    std::vector<std::vector<std::size_t>> order_;  // per-task shuffled train indices
    std::size_t task_ = 0;
    std::size_t pos_ = 0;
};

}  // namespace deepccg
