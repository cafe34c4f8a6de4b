#include "deepccg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deepccg/errors.hpp"

namespace deepccg {

const char* to_string(Method m) {
    switch (m) {
        case Method::deepccg: return "deepccg";
        case Method::er_reservoir: return "er_reservoir";
        case Method::deepccg_reservoir: return "deepccg_reservoir";
        case Method::deepccg_standard_head: return "deepccg_standard_head";
    }
    return "?";
}

const char* to_string(Scenario s) {
    return s == Scenario::task_inc ? "task_inc" : "class_inc";
}

Method method_from_string(const std::string& name) {
    if (name == "deepccg") return Method::deepccg;
    if (name == "er_reservoir") return Method::er_reservoir;
    if (name == "deepccg_reservoir") return Method::deepccg_reservoir;
    if (name == "deepccg_standard_head") return Method::deepccg_standard_head;
    throw ConfigError("unknown method '" + name + "'");
}

bool uses_ccg_head(Method m) {
    return m == Method::deepccg || m == Method::deepccg_reservoir;
}

bool uses_reservoir_memory(Method m) {
    return m == Method::er_reservoir || m == Method::deepccg_reservoir;
}

LinearHead init_head(int num_classes, int dim, std::uint64_t seed) {
    if (num_classes <= 0 || dim <= 0) throw ConfigError("head: sizes must be positive");
    LinearHead head;
    head.num_classes = num_classes;
    head.dim = dim;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    Rng rng(seed);
    head.weights.resize(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(dim));
    for (auto& w : head.weights) w = uniform_range(rng, -bound, bound);
    head.biases.assign(static_cast<std::size_t>(num_classes), 0.0);
    return head;
}

namespace {

std::vector<Vec> inputs_of(const std::vector<Example>& examples) {
    std::vector<Vec> xs;
    xs.reserve(examples.size());
    for (const Example& e : examples) xs.push_back(e.x);
    return xs;
}

std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

Learner::Learner(Method method, MlpParams params, TrainerConfig cfg, int num_classes,
                 std::uint64_t seed)
    : method_(method),
      params_(std::move(params)),
      cfg_(cfg),
      class_memory_(cfg.mem_per_class),
      rng_(mix_seed(seed, 7)) {
    if (cfg_.eta < 0.0) throw ConfigError("trainer: learning rate must be non-negative");
    if (cfg_.prior_a <= 0.0) throw ConfigError("trainer: prior_a must be positive");
    if (num_classes <= 0) throw ConfigError("trainer: num_classes must be positive");
    if (uses_reservoir_memory(method_))
        reservoir_capacity_ = cfg_.mem_per_class * static_cast<std::size_t>(num_classes);
    if (!uses_ccg_head(method_))
        head_ = init_head(num_classes, params_.output_dim(), mix_seed(seed, 8));
}

std::vector<Example> Learner::memory_contents() const {
    return uses_reservoir_memory(method_) ? reservoir_ : class_memory_.flatten();
}

void Learner::register_task(const Batch& batch, const std::vector<int>& task_classes) {
    if (batch.empty()) throw ContractViolation("trainer: empty batch");
    const auto classes = sorted_unique(task_classes);
    if (classes.empty()) throw ContractViolation("trainer: empty task class set");
    const int task_id = batch.front().task_id;
    for (const Example& e : batch) {
        if (e.task_id != task_id)
            throw ContractViolation("trainer: batch mixes task identifiers");
        if (!std::binary_search(classes.begin(), classes.end(), e.label))
            throw ContractViolation("trainer: batch label outside the task's class set");
        if (!uses_ccg_head(method_) && e.label >= head_.num_classes)
            throw ContractViolation("trainer: label exceeds the head's class count");
    }
    task_classes_[task_id] = classes;
    for (int c : classes) seen_classes_.insert(c);
}

const std::vector<int>& Learner::classes_of_task(int task_id) const {
    const auto it = task_classes_.find(task_id);
    if (it == task_classes_.end())
        throw ContractViolation("trainer: example from a task never seen in training");
    return it->second;
}

void Learner::step(const Batch& batch, const std::vector<int>& task_classes) {
    gradient_update(batch, task_classes);
    memory_update(batch, task_classes);
}

void Learner::gradient_update(const Batch& batch, const std::vector<int>& task_classes) {
    register_task(batch, task_classes);
    if (uses_ccg_head(method_))
        gradient_update_ccg(batch);
    else
        gradient_update_standard(batch);
}

void Learner::gradient_update_ccg(const Batch& batch) {
    // Split memory into replay and conditioning halves, fit the posteriors
    // on the conditioning embeddings, then ascend the summed log
    // conditional marginal likelihood of batch + replay.
    const auto memory = memory_contents();
    auto [replay, rest] = sample_replay(memory, cfg_.replay_size, rng_);

    std::vector<std::pair<Vec, int>> conditioning;
    if (!rest.empty()) {
        const auto rest_zs = embed(params_, inputs_of(rest));
        conditioning.reserve(rest.size());
        for (std::size_t i = 0; i < rest.size(); ++i)
            conditioning.emplace_back(rest_zs[i], rest[i].label);
    }
    const PosteriorSet post = fit_posteriors(conditioning, cfg_.prior_a);

    std::vector<Example> combined = batch;
    combined.insert(combined.end(), replay.begin(), replay.end());
    auto [zs, cache] = forward(params_, inputs_of(combined));

    std::vector<LossTarget> targets;
    targets.reserve(combined.size());
    for (std::size_t i = 0; i < combined.size(); ++i) {
        LossTarget t;
        t.z = zs[i];
        t.label = combined[i].label;
        t.task_classes = classes_of_task(combined[i].task_id);
        targets.push_back(std::move(t));
    }
    const LossReport report = loss_and_grad(post, targets);

    if (cfg_.eta == 0.0) return;  // decoupled: memory phase still runs
    const Gradient descent = backward(params_, cache, report.per_example_dLdz);
    // Single negation site: the head reports descent gradients of the
    // negative log-likelihood; the update rule ascends the log-likelihood.
    // Averaged over batch + replay so eta is a per-example rate, matching
    // the cross-entropy convention of the baseline.
    params_ = sgd_step(params_, scaled(descent, -1.0 / static_cast<double>(combined.size())),
                       cfg_.eta);
}

void Learner::gradient_update_standard(const Batch& batch) {
    // Batch plus a uniform replay sample, masked cross-entropy averaged
    // over the union, trained end to end through head and encoder.
    const auto memory = memory_contents();
    std::vector<Example> combined = batch;
    if (!memory.empty()) {
        const std::size_t take = std::min(cfg_.replay_size, memory.size());
        for (std::size_t i : sample_without_replacement(memory.size(), take, rng_))
            combined.push_back(memory[i]);
    }

    auto [zs, cache] = forward(params_, inputs_of(combined));
    const auto dim = static_cast<std::size_t>(head_.dim);
    const double inv_count = 1.0 / static_cast<double>(combined.size());

    std::vector<Vec> dzs(combined.size(), Vec(dim, 0.0));
    std::vector<double> dw(head_.weights.size(), 0.0);
    std::vector<double> db(head_.biases.size(), 0.0);
    for (std::size_t i = 0; i < combined.size(); ++i) {
        const auto& allowed = classes_of_task(combined[i].task_id);
        const Vec& z = zs[i];

        double max_logit = -std::numeric_limits<double>::infinity();
        std::vector<double> logits(allowed.size());
        for (std::size_t k = 0; k < allowed.size(); ++k) {
            const auto c = static_cast<std::size_t>(allowed[k]);
            double acc = head_.biases[c];
            const double* row = &head_.weights[c * dim];
            for (std::size_t j = 0; j < dim; ++j) acc += row[j] * z[j];
            logits[k] = acc;
            max_logit = std::max(max_logit, acc);
        }
        double denom = 0.0;
        for (double l : logits) denom += std::exp(l - max_logit);

        for (std::size_t k = 0; k < allowed.size(); ++k) {
            const auto c = static_cast<std::size_t>(allowed[k]);
            const double p = std::exp(logits[k] - max_logit) / denom;
            const double dlogit =
                (p - (allowed[k] == combined[i].label ? 1.0 : 0.0)) * inv_count;
            db[c] += dlogit;
            double* w_row = &dw[c * dim];
            const double* row = &head_.weights[c * dim];
            for (std::size_t j = 0; j < dim; ++j) {
                w_row[j] += dlogit * z[j];
                dzs[i][j] += dlogit * row[j];
            }
        }
    }

    if (cfg_.eta == 0.0) return;
    const Gradient descent = backward(params_, cache, dzs);
    params_ = sgd_step(params_, scaled(descent, -1.0), cfg_.eta);
    for (std::size_t i = 0; i < head_.weights.size(); ++i)
        head_.weights[i] -= cfg_.eta * dw[i];
    for (std::size_t i = 0; i < head_.biases.size(); ++i) head_.biases[i] -= cfg_.eta * db[i];
}

void Learner::memory_update(const Batch& batch, const std::vector<int>& task_classes) {
    (void)task_classes;
    if (uses_reservoir_memory(method_)) {
        for (const Example& e : batch) {
            ++reservoir_seen_;
            reservoir_update(reservoir_, e, reservoir_seen_, reservoir_capacity_, rng_);
        }
        return;
    }

    // Relaxed KL selection per class over batch + stored candidates,
    // embedded with the post-update parameters.
    std::map<int, std::vector<Example>> batch_by_class;
    for (const Example& e : batch) batch_by_class[e.label].push_back(e);

    std::vector<int> classes = class_memory_.classes();
    for (const auto& [cls, list] : batch_by_class) classes.push_back(cls);
    for (int cls : sorted_unique(classes)) {
        static const std::vector<Example> kEmpty;
        const auto* stored = class_memory_.class_list(cls);
        const auto& batch_part =
            batch_by_class.count(cls) ? batch_by_class[cls] : kEmpty;
        const auto& memory_part = stored ? *stored : kEmpty;
        if (batch_part.empty() && memory_part.empty()) continue;

        std::vector<Example> candidates = batch_part;
        candidates.insert(candidates.end(), memory_part.begin(), memory_part.end());
        std::vector<Vec> zs;
        if (candidates.size() > cfg_.mem_per_class)
            zs = embed(params_, inputs_of(candidates));
        class_memory_.set_class_list(
            cls, lasso_select(batch_part, memory_part, zs, cfg_.mem_per_class, cfg_.selection));
    }
}

std::vector<int> Learner::allowed_for(const TaskSpec& task, Scenario scenario) const {
    if (scenario == Scenario::task_inc) return task.classes;
    return std::vector<int>(seen_classes_.begin(), seen_classes_.end());
}

int Learner::predict_with_head(const Vec& z, const std::vector<int>& allowed) const {
    const auto dim = static_cast<std::size_t>(head_.dim);
    int best = allowed.front();
    double best_logit = -std::numeric_limits<double>::infinity();
    for (int c : allowed) {  // ascending, so ties keep the smaller label
        double acc = head_.biases[static_cast<std::size_t>(c)];
        const double* row = &head_.weights[static_cast<std::size_t>(c) * dim];
        for (std::size_t j = 0; j < dim; ++j) acc += row[j] * z[j];
        if (acc > best_logit) {
            best_logit = acc;
            best = c;
        }
    }
    return best;
}

double Learner::task_accuracy(const TaskSpec& task, Scenario scenario) const {
    if (task.test_examples.empty())
        throw ContractViolation("evaluate: task " + std::to_string(task.task_id) +
                                " has no test examples");
    const auto allowed = sorted_unique(allowed_for(task, scenario));
    if (allowed.empty()) throw ContractViolation("evaluate: empty allowed class set");
    const auto zs = embed(params_, inputs_of(task.test_examples));

    std::size_t correct = 0;
    if (uses_ccg_head(method_)) {
        // The decision rule is fully determined by one posterior refit over
        // the entire memory under the current embedding.
        std::vector<std::pair<Vec, int>> conditioning;
        const auto memory = memory_contents();
        const auto mem_zs = embed(params_, inputs_of(memory));
        conditioning.reserve(memory.size());
        for (std::size_t i = 0; i < memory.size(); ++i)
            conditioning.emplace_back(mem_zs[i], memory[i].label);
        const PosteriorSet post = fit_posteriors(conditioning, cfg_.prior_a);
        for (std::size_t i = 0; i < zs.size(); ++i)
            if (predict(post, zs[i], allowed) == task.test_examples[i].label) ++correct;
    } else {
        for (std::size_t i = 0; i < zs.size(); ++i)
            if (predict_with_head(zs[i], allowed) == task.test_examples[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(task.test_examples.size());
}

double Learner::evaluate(const std::vector<TaskSpec>& tasks, Scenario scenario) const {
    if (tasks.empty()) throw ContractViolation("evaluate: no tasks");
    double sum = 0.0;
    for (const TaskSpec& task : tasks) sum += task_accuracy(task, scenario);
    return sum / static_cast<double>(tasks.size());
}

ProbeRecord rep_shift_probe(const Learner& before, const Learner& after,
                            const TaskSpec& first_task, Scenario scenario, long step_index) {
    if (before.params().dims != after.params().dims)
        throw ContractViolation("probe: states do not share an architecture");
    if (first_task.test_examples.empty()) throw ContractViolation("probe: empty probe set");

    const auto xs = inputs_of(first_task.test_examples);
    const auto z_before = embed(before.params(), xs);
    const auto z_after = embed(after.params(), xs);
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < z_before[i].size(); ++k) {
            const double d = z_after[i][k] - z_before[i][k];
            sq += d * d;
        }
        total += std::sqrt(sq);
    }

    ProbeRecord rec;
    rec.step_index = step_index;
    rec.mean_rep_shift = total / static_cast<double>(xs.size());
    rec.acc_delta = after.task_accuracy(first_task, scenario) -
                    before.task_accuracy(first_task, scenario);
    return rec;
}

}  // namespace deepccg
