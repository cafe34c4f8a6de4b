#include "deepccg/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "deepccg/errors.hpp"
#include "deepccg/stream.hpp"

namespace deepccg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ParseError("config: " + what + " at '" + path + "'");
}

void reject_unknown_keys(const json& obj, const std::string& path,
                         std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return key == k; }) == allowed.end())
            fail(path, "unknown key '" + key + "'");
    }
}

const json* find(const json& obj, const char* key) {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<int>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected a boolean");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

SynthSpec parse_synth(const json& obj, const std::string& path) {
    if (!obj.is_object()) fail(path, "expected an object");
    reject_unknown_keys(obj, path,
                        {"d_in", "num_classes", "per_class_count", "class_mean_scale",
                         "class_cov_scale"});
    SynthSpec spec;
    if (const json* v = find(obj, "d_in")) spec.d_in = as_int(*v, path + ".d_in");
    if (const json* v = find(obj, "num_classes"))
        spec.num_classes = as_int(*v, path + ".num_classes");
    if (const json* v = find(obj, "per_class_count"))
        spec.per_class_count = as_int(*v, path + ".per_class_count");
    if (const json* v = find(obj, "class_mean_scale"))
        spec.class_mean_scale = as_number(*v, path + ".class_mean_scale");
    if (const json* v = find(obj, "class_cov_scale"))
        spec.class_cov_scale = as_number(*v, path + ".class_cov_scale");
    return spec;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ParseError("config: top level must be an object");
    reject_unknown_keys(root, "<root>",
                        {"dataset", "regime", "scenario", "methods", "seeds", "batch_size",
                         "replay_size", "mem_per_class", "eta", "prior_a", "selection",
                         "mlp_dims", "probe", "test_fraction", "standardize"});

    ExperimentConfig cfg;

    const json* dataset = find(root, "dataset");
    if (!dataset) fail("<root>", "missing required key 'dataset'");
    if (!dataset->is_object()) fail("dataset", "expected an object");
    reject_unknown_keys(*dataset, "dataset", {"synth", "csv"});
    const json* synth = find(*dataset, "synth");
    const json* csv = find(*dataset, "csv");
    if ((synth != nullptr) == (csv != nullptr))
        fail("dataset", "exactly one of 'synth' or 'csv' is required");
    if (synth) cfg.synth = parse_synth(*synth, "dataset.synth");
    if (csv) cfg.csv_path = as_string(*csv, "dataset.csv");

    const json* regime = find(root, "regime");
    if (!regime) fail("<root>", "missing required key 'regime'");
    if (!regime->is_object()) fail("regime", "expected an object");
    reject_unknown_keys(*regime, "regime", {"disjoint", "window"});
    const json* disjoint = find(*regime, "disjoint");
    const json* window = find(*regime, "window");
    if ((disjoint != nullptr) == (window != nullptr))
        fail("regime", "exactly one of 'disjoint' or 'window' is required");
    if (disjoint) {
        cfg.regime = Regime::disjoint;
        cfg.num_tasks = as_int(*disjoint, "regime.disjoint");
    } else {
        cfg.regime = Regime::window;
        cfg.window_len = as_int(*window, "regime.window");
    }

    const json* scenario = find(root, "scenario");
    if (!scenario) fail("<root>", "missing required key 'scenario'");
    const std::string scen = as_string(*scenario, "scenario");
    if (scen == "task_inc")
        cfg.scenario = Scenario::task_inc;
    else if (scen == "class_inc")
        cfg.scenario = Scenario::class_inc;
    else
        fail("scenario", "must be 'task_inc' or 'class_inc'");

    const json* methods = find(root, "methods");
    if (!methods) fail("<root>", "missing required key 'methods'");
    if (!methods->is_array() || methods->empty()) fail("methods", "expected a nonempty array");
    for (const json& m : *methods) {
        try {
            cfg.methods.push_back(method_from_string(as_string(m, "methods[]")));
        } catch (const ConfigError& e) {
            fail("methods", e.what());
        }
    }

    const json* seeds = find(root, "seeds");
    if (!seeds) fail("<root>", "missing required key 'seeds'");
    if (!seeds->is_array() || seeds->empty()) fail("seeds", "expected a nonempty array");
    for (const json& s : *seeds) {
        if (!s.is_number_integer() || s.get<long long>() < 0)
            fail("seeds", "expected non-negative integers");
        cfg.seeds.push_back(s.get<std::uint64_t>());
    }

    if (const json* v = find(root, "batch_size")) cfg.batch_size = as_int(*v, "batch_size");
    if (const json* v = find(root, "replay_size")) {
        const int r = as_int(*v, "replay_size");
        if (r < 0) fail("replay_size", "must be non-negative");
        cfg.replay_size = static_cast<std::size_t>(r);
    }
    // Default memory budget depends on the scenario (10 task-inc, 30 class-inc).
    cfg.mem_per_class = cfg.scenario == Scenario::task_inc ? 10 : 30;
    if (const json* v = find(root, "mem_per_class")) {
        const int m = as_int(*v, "mem_per_class");
        if (m <= 0) fail("mem_per_class", "must be positive");
        cfg.mem_per_class = static_cast<std::size_t>(m);
    }
    if (const json* v = find(root, "eta")) cfg.eta = as_number(*v, "eta");
    if (const json* v = find(root, "prior_a")) cfg.prior_a = as_number(*v, "prior_a");
    if (const json* sel = find(root, "selection")) {
        if (!sel->is_object()) fail("selection", "expected an object");
        reject_unknown_keys(*sel, "selection", {"lambda", "steps", "step_size"});
        if (const json* v = find(*sel, "lambda"))
            cfg.selection.lambda = as_number(*v, "selection.lambda");
        if (const json* v = find(*sel, "steps")) cfg.selection.steps = as_int(*v, "selection.steps");
        if (const json* v = find(*sel, "step_size"))
            cfg.selection.step_size = as_number(*v, "selection.step_size");
    }
    if (const json* v = find(root, "mlp_dims")) {
        if (!v->is_array() || v->size() < 2) fail("mlp_dims", "expected an array of >= 2 sizes");
        for (const json& d : *v) cfg.mlp_dims.push_back(as_int(d, "mlp_dims[]"));
    }
    if (const json* probe = find(root, "probe")) {
        if (!probe->is_object()) fail("probe", "expected an object");
        reject_unknown_keys(*probe, "probe", {"enabled", "stride"});
        if (const json* v = find(*probe, "enabled"))
            cfg.probe.enabled = as_bool(*v, "probe.enabled");
        if (const json* v = find(*probe, "stride")) cfg.probe.stride = as_int(*v, "probe.stride");
    }
    if (const json* v = find(root, "test_fraction"))
        cfg.test_fraction = as_number(*v, "test_fraction");
    if (const json* v = find(root, "standardize")) cfg.standardize = as_bool(*v, "standardize");

    // cross-field validation
    if (cfg.batch_size <= 0) fail("batch_size", "must be positive");
    if (cfg.eta < 0.0) fail("eta", "must be non-negative");
    if (cfg.prior_a <= 0.0) fail("prior_a", "must be positive");
    if (cfg.selection.lambda < 0.0) fail("selection.lambda", "must be non-negative");
    if (cfg.selection.steps < 1) fail("selection.steps", "must be >= 1");
    if (cfg.selection.step_size <= 0.0) fail("selection.step_size", "must be positive");
    if (cfg.regime == Regime::disjoint && cfg.num_tasks <= 0)
        fail("regime.disjoint", "must be positive");
    if (cfg.regime == Regime::window && cfg.window_len < 1)
        fail("regime.window", "must be >= 1");
    if (cfg.test_fraction <= 0.0 || cfg.test_fraction >= 1.0)
        fail("test_fraction", "must be in (0, 1)");
    if (cfg.probe.stride < 1) fail("probe.stride", "must be >= 1");
    for (int d : cfg.mlp_dims)
        if (d <= 0) fail("mlp_dims", "sizes must be positive");
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::pair<SynthSpec, std::uint64_t> parse_gendata_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("gen-data config: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ParseError("gen-data config: top level must be an object");
    reject_unknown_keys(root, "<root>",
                        {"d_in", "num_classes", "per_class_count", "class_mean_scale",
                         "class_cov_scale", "seed"});
    std::uint64_t seed = 0;
    if (const json* v = find(root, "seed")) {
        if (!v->is_number_integer() || v->get<long long>() < 0)
            fail("seed", "expected a non-negative integer");
        seed = v->get<std::uint64_t>();
    }
    json spec = root;
    spec.erase("seed");
    return {parse_synth(spec, "<root>"), seed};
}

std::string format_number(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<Example> build_dataset(const ExperimentConfig& cfg, std::uint64_t data_seed) {
    if (cfg.synth) return synth_gaussian_dataset(*cfg.synth, data_seed);
    std::ifstream in(*cfg.csv_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open dataset '" + *cfg.csv_path + "'");
    return load_csv_dataset(in);
}

TaskSequence build_sequence(const ExperimentConfig& cfg, const std::vector<Example>& data,
                            std::uint64_t seed) {
    TaskSequence seq =
        cfg.regime == Regime::disjoint
            ? build_disjoint_tasks(data, cfg.num_tasks, cfg.test_fraction, seed)
            : build_shifting_window(data, cfg.window_len, cfg.test_fraction, seed);
    seq.batch_size = cfg.batch_size;
    return seq;
}

// Per-feature standardization fit on the first task's train split only, so
// later-task statistics never leak backwards in time.
void standardize_in_place(TaskSequence& seq) {
    const auto& fit_set = seq.tasks.front().train_examples;
    const std::size_t dim = fit_set.front().x.size();
    Vec mean(dim, 0.0), var(dim, 0.0);
    for (const Example& e : fit_set)
        for (std::size_t k = 0; k < dim; ++k) mean[k] += e.x[k];
    for (double& v : mean) v /= static_cast<double>(fit_set.size());
    for (const Example& e : fit_set)
        for (std::size_t k = 0; k < dim; ++k) {
            const double d = e.x[k] - mean[k];
            var[k] += d * d;
        }
    Vec scale(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        const double sd = std::sqrt(var[k] / static_cast<double>(fit_set.size()));
        scale[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    for (TaskSpec& task : seq.tasks) {
        for (auto* list : {&task.train_examples, &task.test_examples})
            for (Example& e : *list)
                for (std::size_t k = 0; k < dim; ++k) e.x[k] = (e.x[k] - mean[k]) * scale[k];
    }
}

std::vector<int> default_dims(int d_in) { return {d_in, 64, 64, 16}; }

int count_classes(const std::vector<Example>& data) {
    std::set<int> classes;
    for (const Example& e : data) classes.insert(e.label);
    return classes.empty() ? 0 : *classes.rbegin() + 1;
}

struct SingleRunResult {
    double average_accuracy = 0.0;
    std::vector<ProbeRecord> probes;
};

SingleRunResult run_single(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
    const auto data = build_dataset(cfg, mix_seed(seed, 1));
    TaskSequence seq = build_sequence(cfg, data, mix_seed(seed, 2));
    if (cfg.standardize) standardize_in_place(seq);

    const int d_in = static_cast<int>(seq.tasks.front().train_examples.front().x.size());
    std::vector<int> dims = cfg.mlp_dims.empty() ? default_dims(d_in) : cfg.mlp_dims;
    if (dims.front() != d_in)
        throw ConfigError("mlp_dims[0] = " + std::to_string(dims.front()) +
                          " does not match the dataset dimension " + std::to_string(d_in));

    TrainerConfig tc;
    tc.eta = cfg.eta;
    tc.replay_size = cfg.replay_size;
    tc.prior_a = cfg.prior_a;
    tc.mem_per_class = cfg.mem_per_class;
    tc.selection = cfg.selection;
    Learner learner(method, init_mlp(dims, mix_seed(seed, 3)), tc, count_classes(data),
                    mix_seed(seed, 4));

    SingleRunResult result;
    BatchStream stream(seq, mix_seed(seed, 5));
    long step_index = 0;
    const int first_task_id = seq.tasks.front().task_id;
    while (auto item = stream.next()) {
        const auto& [batch, task_id] = *item;
        const auto& task_classes = seq.tasks[static_cast<std::size_t>(task_id)].classes;
        const bool probe_now = cfg.probe.enabled && task_id != first_task_id &&
                               step_index % cfg.probe.stride == 0;
        if (probe_now) {
            const Learner before = learner;
            learner.gradient_update(batch, task_classes);
            result.probes.push_back(rep_shift_probe(before, learner, seq.tasks.front(),
                                                    cfg.scenario, step_index));
            learner.memory_update(batch, task_classes);
        } else {
            learner.step(batch, task_classes);
        }
        ++step_index;
    }
    result.average_accuracy = learner.evaluate(seq.tasks, cfg.scenario);
    return result;
}

void write_atomically(const std::filesystem::path& target, const std::string& contents) {
    const std::filesystem::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << contents;
        if (!out.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, target);
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
    std::string out = "run_id,method,scenario,regime,seed,average_accuracy\n";
    for (const RunSummary& row : report.rows) {
        out += row.run_id;
        out += ',';
        out += to_string(row.method);
        out += ',';
        out += to_string(row.scenario);
        out += ',';
        out += to_string(row.regime);
        out += ',';
        out += std::to_string(row.seed);
        out += ',';
        out += format_number(row.average_accuracy);
        out += '\n';
    }
    return out;
}

std::string probe_csv(const MetricsReport& report) {
    std::string out = "run_id,step,mean_rep_shift,acc_delta\n";
    for (const ProbeRow& row : report.probe_rows) {
        out += row.run_id;
        out += ',';
        out += std::to_string(row.step);
        out += ',';
        out += format_number(row.mean_rep_shift);
        out += ',';
        out += format_number(row.acc_delta);
        out += '\n';
    }
    return out;
}

MetricsReport run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                             std::uint64_t seed_offset, std::ostream& log) {
    namespace fs = std::filesystem;
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + out_dir + "'");

    MetricsReport report;
    std::string timings = "run_id,wall_time_seconds\n";
    for (Method method : config.methods) {
        for (std::uint64_t seed : config.seeds) {
            const std::uint64_t effective_seed = seed + seed_offset;
            const auto started = std::chrono::steady_clock::now();
            const SingleRunResult run = run_single(config, method, effective_seed);
            const std::chrono::duration<double> elapsed =
                std::chrono::steady_clock::now() - started;

            RunSummary row;
            row.run_id = std::string(to_string(method)) + "_s" + std::to_string(effective_seed);
            row.method = method;
            row.scenario = config.scenario;
            row.regime = config.regime;
            row.seed = effective_seed;
            row.average_accuracy = run.average_accuracy;
            row.wall_time_seconds = elapsed.count();
            timings += row.run_id + "," + format_number(row.wall_time_seconds) + "\n";
            for (const ProbeRecord& p : run.probes)
                report.probe_rows.push_back({row.run_id, p.step_index, p.mean_rep_shift,
                                             p.acc_delta});
            report.rows.push_back(std::move(row));
        }
    }

    const fs::path metrics_path = dir / "metrics.csv";
    const fs::path probe_path = dir / "probe.csv";
    const fs::path timings_path = dir / "timings.csv";
    try {
        write_atomically(metrics_path, metrics_csv(report));
        if (config.probe.enabled) write_atomically(probe_path, probe_csv(report));
        write_atomically(timings_path, timings);
    } catch (...) {
        for (const fs::path& p : {metrics_path, probe_path, timings_path}) {
            std::error_code rm;
            fs::remove(p, rm);
            fs::remove(fs::path(p.string() + ".tmp"), rm);
        }
        throw;
    }

    // Table-style summary: per-method mean +/- standard error across seeds.
    for (Method method : config.methods) {
        std::vector<double> accs;
        for (const RunSummary& row : report.rows)
            if (row.method == method) accs.push_back(row.average_accuracy);
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const double stderr_ =
            accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1) /
                                        static_cast<double>(accs.size()))
                            : 0.0;
        log << to_string(method) << ": " << mean << " +/- " << stderr_ << " (" << accs.size()
            << (accs.size() == 1 ? " seed)" : " seeds)") << "\n";
    }
    return report;
}

}  // namespace deepccg
