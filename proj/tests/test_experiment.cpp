#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deepccg/errors.hpp"
#include "deepccg/experiment.hpp"

using namespace deepccg;

namespace {

const char* kMinimalConfig = R"({
  "dataset": {"synth": {"d_in": 4, "num_classes": 4, "per_class_count": 20,
                         "class_mean_scale": 6.0, "class_cov_scale": 0.1}},
  "regime": {"disjoint": 2},
  "scenario": "task_inc",
  "methods": ["deepccg"],
  "seeds": [0]
})";

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("parse_config applies defaults") {
    const ExperimentConfig cfg = parse_config(kMinimalConfig);
    CHECK(cfg.batch_size == 10);
    CHECK(cfg.replay_size == 10);
    CHECK(cfg.eta == 0.1);
    CHECK(cfg.prior_a == 1e6);
    CHECK(cfg.mem_per_class == 10);  // task-incremental default
    CHECK(cfg.selection.lambda == 0.01);
    CHECK(cfg.selection.steps == 100);
    CHECK(cfg.selection.step_size == 0.05);
    CHECK(cfg.test_fraction == 0.2);
    CHECK_FALSE(cfg.probe.enabled);
    CHECK(cfg.mlp_dims.empty());  // resolved per dataset at run time
    REQUIRE(cfg.synth.has_value());
    CHECK(cfg.synth->num_classes == 4);

    // class-incremental flips the memory default to 30
    std::string class_inc = kMinimalConfig;
    class_inc.replace(class_inc.find("task_inc"), 8, "class_inc");
    CHECK(parse_config(class_inc).mem_per_class == 30);
}

TEST_CASE("parse_config rejects malformed documents") {
    SUBCASE("unknown key is named") {
        std::string bad = kMinimalConfig;
        bad.replace(bad.find("\"methods\""), 9, "\"methods_\"");
        CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("methods_"), ParseError);

        const char* typo = R"({
          "dataset": {"synth": {}}, "regime": {"disjoint": 2},
          "scenario": "task_inc", "methods": ["deepccg"], "seeds": [0],
          "batch_sise": 10})";
        CHECK_THROWS_WITH_AS(parse_config(typo), doctest::Contains("batch_sise"), ParseError);
    }
    SUBCASE("empty seeds") {
        std::string bad = kMinimalConfig;
        bad.replace(bad.find("[0]"), 3, "[]");
        CHECK_THROWS_AS(parse_config(bad), ParseError);
    }
    SUBCASE("type mismatch names the key path") {
        const char* bad = R"({
          "dataset": {"synth": {}}, "regime": {"disjoint": 2},
          "scenario": "task_inc", "methods": ["deepccg"], "seeds": [0],
          "selection": {"lambda": "high"}})";
        CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("selection.lambda"),
                             ParseError);
    }
    SUBCASE("dataset must pick exactly one source") {
        const char* both = R"({
          "dataset": {"synth": {}, "csv": "x.csv"}, "regime": {"disjoint": 2},
          "scenario": "task_inc", "methods": ["deepccg"], "seeds": [0]})";
        CHECK_THROWS_AS(parse_config(both), ParseError);
        const char* neither = R"({
          "dataset": {}, "regime": {"disjoint": 2},
          "scenario": "task_inc", "methods": ["deepccg"], "seeds": [0]})";
        CHECK_THROWS_AS(parse_config(neither), ParseError);
    }
    SUBCASE("unknown method") {
        std::string bad = kMinimalConfig;
        bad.replace(bad.find("deepccg\"]"), 9, "deepccg2\"]");
        CHECK_THROWS_AS(parse_config(bad), ParseError);
    }
    SUBCASE("missing required key") {
        CHECK_THROWS_WITH_AS(parse_config(R"({"regime": {"disjoint": 2}})"),
                             doctest::Contains("dataset"), ParseError);
    }
    SUBCASE("invalid JSON") {
        CHECK_THROWS_AS(parse_config("{"), ParseError);
    }
}

TEST_CASE("gen-data config parsing") {
    const auto [spec, seed] = parse_gendata_config(
        R"({"d_in": 3, "num_classes": 2, "per_class_count": 5, "seed": 9})");
    CHECK(spec.d_in == 3);
    CHECK(spec.num_classes == 2);
    CHECK(spec.per_class_count == 5);
    CHECK(seed == 9);
    CHECK_THROWS_AS(parse_gendata_config(R"({"d_im": 3})"), ParseError);
}

TEST_CASE("run_experiment writes deterministic CSV metrics") {
    ExperimentConfig cfg = parse_config(kMinimalConfig);
    cfg.seeds = {0, 1};
    cfg.probe.enabled = true;

    TempDir dir_a("deepccg_test_run_a");
    TempDir dir_b("deepccg_test_run_b");
    std::ostringstream log_a, log_b;
    const MetricsReport a = run_experiment(cfg, dir_a.path.string(), 0, log_a);
    const MetricsReport b = run_experiment(cfg, dir_b.path.string(), 0, log_b);

    REQUIRE(a.rows.size() == 2);  // one summary row per (method, seed)
    CHECK(a.rows[0].run_id == "deepccg_s0");
    CHECK(a.rows[1].run_id == "deepccg_s1");
    for (const auto& row : a.rows) {
        CHECK(row.average_accuracy >= 0.0);
        CHECK(row.average_accuracy <= 1.0);
        CHECK(row.wall_time_seconds > 0.0);
    }

    const std::string metrics_a = read_file(dir_a.path / "metrics.csv");
    const std::string metrics_b = read_file(dir_b.path / "metrics.csv");
    CHECK(metrics_a == metrics_b);  // byte-identical reruns
    CHECK(read_file(dir_a.path / "probe.csv") == read_file(dir_b.path / "probe.csv"));
    CHECK(metrics_a.find("run_id,method,scenario,regime,seed,average_accuracy\n") == 0);
    CHECK(metrics_a.find("\r") == std::string::npos);  // LF only

    // probe cadence: one row per post-first-task step at stride 1.
    // 4 classes, 20 per class, 0.2 test fraction -> 16 train per class,
    // 2 classes per task -> 32 train per task -> 4 batches of 10 in task 1.
    std::size_t task1_probe_rows = 0;
    for (const auto& row : a.probe_rows)
        if (row.run_id == "deepccg_s0") ++task1_probe_rows;
    CHECK(task1_probe_rows == 4);

    // summary text mentions the method and a +/- column
    CHECK(log_a.str().find("deepccg:") != std::string::npos);
    CHECK(log_a.str().find("+/-") != std::string::npos);
}

TEST_CASE("run_experiment honors the seed offset") {
    ExperimentConfig cfg = parse_config(kMinimalConfig);
    TempDir dir("deepccg_test_offset");
    std::ostringstream log;
    const MetricsReport rep = run_experiment(cfg, dir.path.string(), 5, log);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].seed == 5);
    CHECK(rep.rows[0].run_id == "deepccg_s5");
}

TEST_CASE("csv renderers use stable column order and LF endings") {
    MetricsReport rep;
    rep.rows.push_back({"m_s0", Method::deepccg, Scenario::task_inc, Regime::disjoint, 0, 0.5,
                        1.25});
    rep.probe_rows.push_back({"m_s0", 3, 0.125, -0.0625});
    CHECK(metrics_csv(rep) ==
          "run_id,method,scenario,regime,seed,average_accuracy\n"
          "m_s0,deepccg,task_inc,disjoint,0,0.5\n");
    CHECK(probe_csv(rep) ==
          "run_id,step,mean_rep_shift,acc_delta\n"
          "m_s0,3,0.125,-0.0625\n");
}
