#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "kronest/config.hpp"
#include "kronest/error.hpp"
#include "kronest/io.hpp"
#include "kronest/simlab.hpp"

using namespace kronest;

namespace {

ExperimentSpec spec_from(const std::string& json) { return parse_run_config(json).spec; }

std::string read_config(const std::string& name) { return read_file(std::filesystem::path(KRONEST_CONFIG_DIR) / name); }

const char* kSmallRobustness = R"({
  "name": "small",
  "kind": "robustness",
  "model": "trace",
  "shape": {"p1": 3, "q1": 3, "p2": 3, "q2": 3, "rank": 1},
  "truth": {"recipe": "ones", "support": 3},
  "n": [200],
  "predictors": ["N", "t2.5"],
  "noises": ["0.1N", "0.1t1.5"],
  "methods": ["SRGD", "ScGD", "RGD", "HuberGD"],
  "replications": 2,
  "seed": 77,
  "levels": {"left": 4, "right": 4},
  "schedules": [{"eta": 0.05, "iterations": 40}],
  "init": {"radius": 1.0}
})";

std::vector<std::string> csv_lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        out.push_back(line);
    }
    return out;
}

} // namespace

TEST_SUITE("simlab")
{

TEST_CASE("slope of an exact line")
{
    std::vector<double> xs;
    std::vector<double> ys;
    for (double n : {250.0, 500.0, 1000.0, 2000.0}) {
        xs.push_back(std::log(n));
        ys.push_back(-0.5 * std::log(n) + 1.7);
    }
    const SlopeFit f = fit_slope(xs, ys);
    CHECK(f.slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(1.7).epsilon(1e-12));
    CHECK(f.stderr_slope < 1e-7);
}

TEST_CASE("slope preconditions")
{
    CHECK_THROWS_AS(fit_slope({1.0, 2.0}, {1.0, 2.0}), ParameterError);
    CHECK_THROWS_AS(fit_slope({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), ParameterError);
    CHECK_THROWS_AS(fit_slope({1.0, 2.0, 3.0}, {1.0, 2.0}), ParameterError);
}

TEST_CASE("noisy lines recover the slope within two standard errors")
{
    Rng rng(5);
    int covered = 0;
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (int i = 0; i < 25; ++i) {
            const double x = 5.0 + 0.1 * i;
            xs.push_back(x);
            ys.push_back(-0.3 * x + 0.5 + 0.05 * rng.normal());
        }
        const SlopeFit f = fit_slope(xs, ys);
        covered += std::abs(f.slope + 0.3) <= 2.0 * f.stderr_slope ? 1 : 0;
    }
    // Nominal coverage of a 2-stderr band with 23 degrees of freedom is about 94%.
    CHECK(covered >= static_cast<int>(0.9 * trials));
}

TEST_CASE("median, quantiles and the bootstrap interval")
{
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25) == 2.0);
    CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.0) == 1.0);
    CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 1.0) == 5.0);
    CHECK_THROWS_AS(median({}), ParameterError);

    Rng rng(6);
    std::vector<double> v;
    for (int i = 0; i < 101; ++i) {
        v.push_back(rng.normal());
    }
    const auto a = bootstrap_median_ci(v, 1000, 9);
    const auto b = bootstrap_median_ci(v, 1000, 9);
    CHECK(a == b);
    CHECK(a.first <= median(v));
    CHECK(median(v) <= a.second);
    CHECK(a.second - a.first < 1.0);
    const std::vector<double> flat(10, 2.5);
    CHECK(bootstrap_median_ci(flat, 50, 1) == std::pair<double, double>{2.5, 2.5});
}

TEST_CASE("cells cover the grid product with distinct labels")
{
    const ExperimentSpec spec = spec_from(kSmallRobustness);
    const std::vector<Cell> cells = expand_cells(spec);
    REQUIRE(cells.size() == 4);
    std::set<std::string> labels;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        CHECK(cells[i].index == i);
        labels.insert(cells[i].label);
    }
    CHECK(labels.size() == 4);
    CHECK(labels.count("small/x=N/e=0.1N") == 1);
    CHECK(labels.count("small/x=t2.5/e=0.1t1.5") == 1);

    ExperimentSpec phase = spec;
    phase.kind = ExperimentKind::phase_transition;
    phase.eps = {0.2, 1.0};
    phase.n = {100, 200, 400};
    phase.predictors = {TailSpec::student_t(2.5)};
    const std::vector<Cell> pc = expand_cells(phase);
    REQUIRE(pc.size() == 6);
    CHECK(pc[0].noise.dof == doctest::Approx(1.25));
    CHECK(pc[5].noise.dof == doctest::Approx(2.05));
    CHECK(pc[5].n == 400);
}

TEST_CASE("task seeds differ across cells and replications")
{
    std::set<std::uint64_t> seen;
    for (int rep = 0; rep < 20; ++rep) {
        for (std::size_t cell = 0; cell < 20; ++cell) {
            seen.insert(task_seed(123, rep, cell));
        }
    }
    CHECK(seen.size() == 400);
    CHECK(task_seed(123, 4, 7) == task_seed(123, 4, 7));
}

TEST_CASE("reports account for every cell and reruns reproduce records bitwise")
{
    const ExperimentSpec spec = spec_from(kSmallRobustness);
    const ExperimentReport report = run_experiment(spec);
    CHECK(report.records.size() == 4 * 2 * 4);
    CHECK(report.summaries.size() == 4 * 4);
    for (const Summary& s : report.summaries) {
        CHECK(s.count + s.failures == 2);
    }
    const std::vector<Cell> cells = expand_cells(spec);
    for (const Record& r : report.records) {
        CHECK(r.ok());
        CHECK(r.rel_error >= 0.0);
    }

    // Pick the last record of cell 3 and rerun only that task.
    const Record& target = report.records.back();
    const auto cell = std::find_if(cells.begin(), cells.end(), [&](const Cell& c) { return c.label == target.experiment; });
    REQUIRE(cell != cells.end());
    const std::vector<Record> again = run_replication(spec, *cell, target.rep, target.seed, report.pilot_tau);
    const auto match = std::find_if(again.begin(), again.end(), [&](const Record& r) { return r.method == target.method; });
    REQUIRE(match != again.end());
    CHECK(match->rel_error == target.rel_error);
    CHECK(match->iters == target.iters);

    const ExperimentReport twice = run_experiment(spec);
    CHECK(records_to_csv(report) == records_to_csv(twice));
    CHECK(summary_to_json(report) == summary_to_json(twice));
}

TEST_CASE("failures are logged and counted")
{
    ExperimentSpec spec = spec_from(kSmallRobustness);
    spec.methods = {Method::rgd};
    spec.schedules = {Schedule{1e4, 20}};
    spec.trajectory_every = 1;
    const ExperimentReport report = run_experiment(spec);
    CHECK(report.records.size() == 4 * 2);
    int failed = 0;
    for (const Record& r : report.records) {
        if (!r.ok()) {
            ++failed;
            CHECK(r.status.size() > std::string("failed:").size());
            CHECK(std::isnan(r.rel_error));
        }
    }
    CHECK(failed > 0);
    int counted = 0;
    for (const Summary& s : report.summaries) {
        counted += s.failures;
        CHECK(s.count + s.failures == 2);
    }
    CHECK(counted == failed);
    const auto j = nlohmann::json::parse(summary_to_json(report));
    CHECK(j["failures"].get<int>() == failed);
}

TEST_CASE("CSV and JSON schemas")
{
    ExperimentSpec spec = spec_from(kSmallRobustness);
    spec.trajectory_every = 10;
    const ExperimentReport report = run_experiment(spec);
    const std::vector<std::string> lines = csv_lines(records_to_csv(report));
    REQUIRE(lines.size() == report.records.size() + 1);
    CHECK(lines[0] == "experiment,method,model,eps,kappa,n,rep,seed,rel_error,iters,status,wall_ms");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        CHECK(std::count(lines[i].begin(), lines[i].end(), ',') == 11);
    }
    const std::vector<std::string> traj = csv_lines(trajectories_to_csv(report));
    CHECK(traj[0] == "experiment,method,kappa,iteration,mean_rel_error,reps");
    CHECK(traj.size() > 1);

    const auto j = nlohmann::json::parse(summary_to_json(report));
    CHECK(j["experiment"] == "small");
    CHECK(j["kind"] == "robustness");
    CHECK(j["records"].get<std::size_t>() == report.records.size());
    REQUIRE(j["cells"].size() == report.summaries.size());
    for (const auto& c : j["cells"]) {
        for (const char* key : {"experiment", "method", "eps", "kappa", "n", "count", "failures", "mean", "median", "q1",
                                "q3", "median_ci95"}) {
            CHECK(c.contains(key));
        }
        CHECK(c["q1"].get<double>() <= c["median"].get<double>());
        CHECK(c["median"].get<double>() <= c["q3"].get<double>());
    }
    CHECK(j["slopes"].is_array());
}

TEST_CASE("validation")
{
    ExperimentSpec spec = spec_from(kSmallRobustness);
    CHECK_NOTHROW(spec.validate());
    ExperimentSpec bad = spec;
    bad.replications = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.n.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = spec;
    bad.methods.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}

TEST_SUITE("simlab_examples")
{

TEST_CASE("phase transition slopes steepen with eps and track the theory")
{
    const ExperimentSpec spec = spec_from(R"({
      "name": "slopes",
      "kind": "phase_transition",
      "model": "trace",
      "shape": {"p1": 4, "q1": 4, "p2": 4, "q2": 4, "rank": 1},
      "truth": {"recipe": "ones", "support": 3},
      "eps": [0.2, 0.6, 1.0],
      "n": [250, 500, 1000, 2000],
      "predictors": ["t2.5"],
      "methods": ["SRGD"],
      "replications": 10,
      "seed": 31,
      "levels": {"left": 5, "right": 5},
      "schedules": [{"eta": 0.01, "iterations": 200}],
      "tau": {"base": "power", "constant": 1.0},
      "init": {"truth_init": true}
    })");
    const ExperimentReport report = run_experiment(spec);
    REQUIRE(report.slopes.size() == 3);
    for (const SlopeRow& s : report.slopes) {
        CAPTURE(s.eps);
        CAPTURE(s.fit.slope);
        CHECK(s.theory == doctest::Approx(-s.eps / (1.0 + s.eps)).epsilon(1e-15));
    }
    CHECK(report.slopes[0].theory == doctest::Approx(-1.0 / 6.0));
    for (std::size_t i = 1; i < 3; ++i) {
        const SlopeFit& a = report.slopes[i - 1].fit;
        const SlopeFit& b = report.slopes[i].fit;
        CHECK(b.slope <= a.slope + a.stderr_slope + b.stderr_slope);
    }
}

TEST_CASE("balanced conditioning: SRGD and RGD trajectories agree")
{
    ExperimentSpec spec = parse_run_config(read_config("exp2_conditioning.json")).spec;
    spec.kappa = {1.0};
    spec.methods = {Method::srgd, Method::rgd};
    spec.replications = 5;
    const ExperimentReport report = run_experiment(spec);
    std::map<int, double> srgd;
    std::map<int, double> rgd;
    for (const TrajectoryRow& t : report.trajectories) {
        (t.method == Method::srgd ? srgd : rgd)[t.iteration] = t.mean_rel_error;
    }
    REQUIRE(srgd.size() > 10);
    REQUIRE(srgd.size() == rgd.size());
    for (const auto& [it, e] : srgd) {
        CAPTURE(it);
        CHECK(std::abs(e - rgd[it]) <= 0.2 * std::max(e, rgd[it]));
    }
}

TEST_CASE("light tails: all four methods within 2x of the best median")
{
    ExperimentSpec spec = parse_run_config(read_config("exp3_robustness.json")).spec;
    spec.predictors = {TailSpec::gaussian()};
    spec.noises = {TailSpec::gaussian(0.1)};
    spec.replications = 10;
    const ExperimentReport report = run_experiment(spec);
    double best = std::numeric_limits<double>::infinity();
    for (const Summary& s : report.summaries) {
        best = std::min(best, s.median);
    }
    for (const Summary& s : report.summaries) {
        CAPTURE(to_string(s.method));
        CHECK(s.median <= 2.0 * best);
    }
}

}
