#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "deepccg/memory.hpp"
#include "deepccg/trainer.hpp"
#include "deepccg/types.hpp"

// Experiment configuration (JSON-shaped text), seeded multi-run execution
// and CSV metrics emission.

namespace deepccg {

struct ProbeConfig {
    bool enabled = false;
    int stride = 1;
};

/// One experiment = dataset x regime x scenario x methods x seeds plus the
/// shared hyperparameters. Defaults follow the experimental protocol:
/// batch size 10, replay size 10, learning rate 0.1, memory per class 10
/// (task-incremental) or 30 (class-incremental).
struct ExperimentConfig {
    // dataset: exactly one of the two is set
    std::optional<SynthSpec> synth;
    std::optional<std::string> csv_path;

    Regime regime = Regime::disjoint;
    int num_tasks = 0;    // disjoint regime
    int window_len = 0;   // window regime

    Scenario scenario = Scenario::task_inc;
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds;

    int batch_size = 10;
    std::size_t replay_size = 10;
    std::size_t mem_per_class = 10;
    double eta = 0.1;
    double prior_a = 1e6;
    SelectionConfig selection;
    std::vector<int> mlp_dims;  // full dims; defaulted to [d_in, 64, 64, 16]
    ProbeConfig probe;
    double test_fraction = 0.2;
    bool standardize = false;
};

/// Parses and validates the JSON config document. Missing optional fields
/// take the documented defaults; unknown keys and type mismatches raise
/// ParseError naming the offending key path.
ExperimentConfig parse_config(const std::string& text);

/// Reads a file into parse_config.
ExperimentConfig load_config_file(const std::string& path);

/// Parses the gen-data config: the synth spec fields plus an optional
/// "seed" (default 0). Same strictness as parse_config.
std::pair<SynthSpec, std::uint64_t> parse_gendata_config(const std::string& text);

struct RunSummary {
    std::string run_id;  // "<method>_s<seed>"
    Method method;
    Scenario scenario;
    Regime regime;
    std::uint64_t seed = 0;
    double average_accuracy = 0.0;
    double wall_time_seconds = 0.0;
};

struct ProbeRow {
    std::string run_id;
    long step = 0;
    double mean_rep_shift = 0.0;
    double acc_delta = 0.0;
};

struct MetricsReport {
    std::vector<RunSummary> rows;
    std::vector<ProbeRow> probe_rows;
};

/// Executes every (method, seed) run: builds the stream, iterates each
/// batch exactly once, evaluates, and writes metrics.csv (and probe.csv
/// when probing) atomically into out_dir. Identical configs reproduce
/// those files byte for byte; wall times go to a separate timings.csv
/// since they cannot be deterministic. Prints a per-method mean +/-
/// standard error summary to `log`.
MetricsReport run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                             std::uint64_t seed_offset, std::ostream& log);

/// The deterministic CSV renderings (LF line endings, '.' decimals,
/// fixed column order).
std::string metrics_csv(const MetricsReport& report);
std::string probe_csv(const MetricsReport& report);

/// Shortest-round-trip decimal formatting used in every CSV.
std::string format_number(double v);

}  // namespace deepccg
