#include "deepccg/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "deepccg/errors.hpp"

namespace deepccg {

namespace {

double vec_norm(const Vec& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

double vec_dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

Vec random_mean(int dim, double scale, Rng& rng) {
    Vec m(static_cast<std::size_t>(dim));
    double n = 0.0;
    while (n < 1e-12) {  // re-draw the degenerate all-zero direction
        for (auto& e : m) e = normal01(rng);
        n = vec_norm(m);
    }
    for (auto& e : m) e *= scale / n;
    return m;
}

void validate_synth_spec(const SynthSpec& spec) {
    if (spec.d_in <= 0) throw ConfigError("synth: d_in must be positive");
    if (spec.num_classes <= 0) throw ConfigError("synth: num_classes must be positive");
    if (spec.per_class_count < 2)
        throw ConfigError("synth: per_class_count must be >= 2 so a train/test split exists");
    if (spec.class_mean_scale <= 0.0) throw ConfigError("synth: class_mean_scale must be positive");
    if (spec.class_cov_scale <= 0.0) throw ConfigError("synth: class_cov_scale must be positive");
}

}  // namespace

std::vector<Example> synth_gaussian_dataset(const SynthSpec& spec, std::uint64_t seed) {
    validate_synth_spec(spec);
    Rng rng(seed);

    // Place class means first, with rejection so no two means are closer
    // than class_mean_scale (best candidate kept if the retry budget runs
    // out, e.g. many classes in very low dimension).
    std::vector<Vec> means;
    means.reserve(static_cast<std::size_t>(spec.num_classes));
    constexpr int kMaxTries = 200;
    for (int c = 0; c < spec.num_classes; ++c) {
        Vec best;
        double best_sep = -1.0;
        for (int attempt = 0; attempt < kMaxTries; ++attempt) {
            Vec cand = random_mean(spec.d_in, spec.class_mean_scale, rng);
            double sep = std::numeric_limits<double>::infinity();
            for (const Vec& m : means) sep = std::min(sep, vec_dist(cand, m));
            if (sep > best_sep) {
                best_sep = sep;
                best = std::move(cand);
            }
            if (best_sep >= spec.class_mean_scale) break;
        }
        means.push_back(std::move(best));
    }

    std::vector<Example> out;
    out.reserve(static_cast<std::size_t>(spec.num_classes) * spec.per_class_count);
    for (int c = 0; c < spec.num_classes; ++c) {
        for (int i = 0; i < spec.per_class_count; ++i) {
            Example ex;
            ex.label = c;
            ex.x.resize(static_cast<std::size_t>(spec.d_in));
            for (int k = 0; k < spec.d_in; ++k)
                ex.x[static_cast<std::size_t>(k)] =
                    means[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] +
                    spec.class_cov_scale * normal01(rng);
            out.push_back(std::move(ex));
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

double parse_double_field(const std::string& field, std::size_t row, const std::string& col) {
    const char* begin = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || end != begin + field.size() || !std::isfinite(v))
        throw ParseError("csv: non-numeric value '" + field + "' in column " + col + " at row " +
                         std::to_string(row));
    return v;
}

}  // namespace

std::vector<Example> load_csv_dataset(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw ParseError("csv: missing header line");
    header = strip_cr(header);

    const auto cols = split_fields(header);
    if (cols.size() < 2 || cols[0] != "y")
        throw ParseError("csv: header must be \"y,x0,...,x{d-1}\", got \"" + header + "\"");
    for (std::size_t i = 1; i < cols.size(); ++i) {
        if (cols[i] != "x" + std::to_string(i - 1))
            throw ParseError("csv: expected header column \"x" + std::to_string(i - 1) +
                             "\", got \"" + cols[i] + "\"");
    }
    const std::size_t dim = cols.size() - 1;

    std::vector<Example> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        line = strip_cr(line);
        ++row;
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != dim + 1)
            throw ParseError("csv: expected " + std::to_string(dim + 1) + " fields, got " +
                             std::to_string(fields.size()) + " at row " + std::to_string(row));
        Example ex;
        const double y = parse_double_field(fields[0], row, "y");
        if (y < 0.0 || y != std::floor(y))
            throw ParseError("csv: label must be a non-negative integer at row " +
                             std::to_string(row));
        ex.label = static_cast<int>(y);
        ex.x.resize(dim);
        for (std::size_t i = 0; i < dim; ++i)
            ex.x[i] = parse_double_field(fields[i + 1], row, "x" + std::to_string(i));
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_csv_dataset(std::ostream& out, const std::vector<Example>& data) {
    const std::size_t dim = data.empty() ? 0 : data.front().x.size();
    out << "y";
    for (std::size_t i = 0; i < dim; ++i) out << ",x" << i;
    out << "\n";
    for (const Example& ex : data) {
        if (ex.x.size() != dim) throw ShapeError("csv: ragged example dimensions");
        out << ex.label;
        for (double v : ex.x) out << "," << format_double(v);
        out << "\n";
    }
}

namespace {

// Per-class example indices, keyed by sorted class label.
std::map<int, std::vector<std::size_t>> group_by_class(const std::vector<Example>& data) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
    return by_class;
}

std::size_t test_count(std::size_t n, double test_fraction) {
    // At least one test and one train example per class.
    const auto raw = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    return std::clamp<std::size_t>(raw, 1, n - 1);
}

struct ClassSplit {
    std::vector<std::size_t> train;  // shuffled
    std::vector<std::size_t> test;   // shuffled
};

std::map<int, ClassSplit> split_classes(const std::vector<Example>& data, double test_fraction,
                                        Rng& rng) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ConfigError("test_fraction must be in (0, 1)");
    std::map<int, ClassSplit> splits;
    for (auto& [cls, indices] : group_by_class(data)) {
        if (indices.size() < 2)
            throw ConfigError("class " + std::to_string(cls) +
                              " has fewer than 2 examples; cannot split train/test");
        std::vector<std::size_t> shuffled = indices;
        shuffle_in_place(shuffled, rng);
        const std::size_t n_test = test_count(shuffled.size(), test_fraction);
        ClassSplit split;
        split.test.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
        split.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test), shuffled.end());
        splits.emplace(cls, std::move(split));
    }
    return splits;
}

Example with_task(const Example& ex, int task_id) {
    Example out = ex;
    out.task_id = task_id;
    return out;
}

}  // namespace

TaskSequence build_disjoint_tasks(const std::vector<Example>& data, int num_tasks,
                                  double test_fraction, std::uint64_t seed) {
    if (num_tasks <= 0) throw ConfigError("num_tasks must be positive");
    if (data.empty()) throw ConfigError("dataset is empty");

    Rng rng(mix_seed(seed, 101));
    auto splits = split_classes(data, test_fraction, rng);

    std::vector<int> classes;
    for (const auto& [cls, split] : splits) classes.push_back(cls);
    if (classes.size() % static_cast<std::size_t>(num_tasks) != 0)
        throw ConfigError("class count " + std::to_string(classes.size()) +
                          " is not divisible by num_tasks " + std::to_string(num_tasks));
    const std::size_t per_task = classes.size() / static_cast<std::size_t>(num_tasks);

    TaskSequence seq;
    seq.regime = Regime::disjoint;
    seq.class_order = classes;  // identity (sorted) ordering
    for (int t = 0; t < num_tasks; ++t) {
        TaskSpec task;
        task.task_id = t;
        for (std::size_t k = 0; k < per_task; ++k) {
            const int cls = classes[static_cast<std::size_t>(t) * per_task + k];
            task.classes.push_back(cls);
            for (std::size_t idx : splits[cls].train)
                task.train_examples.push_back(with_task(data[idx], t));
            for (std::size_t idx : splits[cls].test)
                task.test_examples.push_back(with_task(data[idx], t));
        }
        seq.tasks.push_back(std::move(task));
    }
    return seq;
}

TaskSequence build_shifting_window(const std::vector<Example>& data, int window_len,
                                   double test_fraction, std::uint64_t seed) {
    if (window_len < 1) throw ConfigError("window_len must be >= 1");
    if (data.empty()) throw ConfigError("dataset is empty");

    Rng rng(mix_seed(seed, 202));
    auto splits = split_classes(data, test_fraction, rng);

    std::vector<int> order;
    for (const auto& [cls, split] : splits) order.push_back(cls);
    const int num_classes = static_cast<int>(order.size());
    if (window_len >= num_classes)
        throw ConfigError("window_len " + std::to_string(window_len) +
                          " must be smaller than the class count " + std::to_string(num_classes));
    shuffle_in_place(order, rng);

    const int num_tasks = num_classes - window_len;  // each window is full

    // Position of each class in the seeded order and its window occurrence
    // count: class at position p belongs to windows max(0, p-l)..min(p, T-1).
    auto window_range = [&](int pos) {
        const int lo = std::max(0, pos - window_len);
        const int hi = std::min(pos, num_tasks - 1);
        return std::pair<int, int>(lo, hi);
    };

    TaskSequence seq;
    seq.regime = Regime::window;
    seq.window_len = window_len;
    seq.class_order = order;
    seq.tasks.resize(static_cast<std::size_t>(num_tasks));
    for (int t = 0; t < num_tasks; ++t) {
        seq.tasks[static_cast<std::size_t>(t)].task_id = t;
        std::vector<int> cls(order.begin() + t, order.begin() + t + window_len + 1);
        std::sort(cls.begin(), cls.end());
        seq.tasks[static_cast<std::size_t>(t)].classes = std::move(cls);
    }

    for (int pos = 0; pos < num_classes; ++pos) {
        const int cls = order[static_cast<std::size_t>(pos)];
        const auto [lo, hi] = window_range(pos);
        const std::size_t occurrences = static_cast<std::size_t>(hi - lo + 1);
        const ClassSplit& split = splits[cls];
        const std::size_t train_share = split.train.size() / occurrences;
        const std::size_t test_share = split.test.size() / occurrences;
        if (train_share == 0 || test_share == 0)
            throw ConfigError("class " + std::to_string(cls) + " has too few examples to cover " +
                              std::to_string(occurrences) + " windows without reuse");
        for (int w = lo; w <= hi; ++w) {
            TaskSpec& task = seq.tasks[static_cast<std::size_t>(w)];
            const std::size_t slot = static_cast<std::size_t>(w - lo);
            for (std::size_t k = 0; k < train_share; ++k)
                task.train_examples.push_back(
                    with_task(data[split.train[slot * train_share + k]], w));
            for (std::size_t k = 0; k < test_share; ++k)
                task.test_examples.push_back(with_task(data[split.test[slot * test_share + k]], w));
        }
    }
    return seq;
}

BatchStream::BatchStream(const TaskSequence& seq, std::uint64_t seed) : seq_(&seq) {
    if (seq.batch_size <= 0) throw ConfigError("batch_size must be positive");
    order_.resize(seq.tasks.size());
    for (std::size_t t = 0; t < seq.tasks.size(); ++t) {
        Rng rng(mix_seed(seed, 303 + t));
        auto& idx = order_[t];
        idx.resize(seq.tasks[t].train_examples.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        shuffle_in_place(idx, rng);
    }
}

std::optional<std::pair<Batch, int>> BatchStream::next() {
    while (task_ < order_.size() && pos_ >= order_[task_].size()) {
        ++task_;
        pos_ = 0;
    }
    if (task_ >= order_.size()) return std::nullopt;

    const TaskSpec& task = seq_->tasks[task_];
    const auto& idx = order_[task_];
    const std::size_t take =
        std::min<std::size_t>(static_cast<std::size_t>(seq_->batch_size), idx.size() - pos_);
    Batch batch;
    batch.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        batch.push_back(task.train_examples[idx[pos_ + i]]);
    pos_ += take;
    return std::make_pair(std::move(batch), task.task_id);
}

}  // namespace deepccg
