#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kronest/generate.hpp"
#include "kronest/init.hpp"
#include "kronest/optimizer.hpp"

namespace kronest {

enum class ExperimentKind { phase_transition, conditioning, robustness, glm_ablation, bilinear_robustness };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view name);

/// How the truncation level of each method is chosen.
///  base: power        c * n^{1/(1+eps)}
///        sqrt_n_log_d c * sqrt(n / log d), d = max(d1, d2)
///  mode: fixed        base * multiplier[method]
///        cv           per replication K-fold CV on base * log_grid(lo, hi, points)
///        cv_pilot     CV once per (cell, method) on an independent pilot sample;
///                     the chosen tau is then used for every replication
enum class TauBase { power, sqrt_n_log_d };
enum class TauMode { fixed, cv, cv_pilot };

struct TauRule {
    TauBase base = TauBase::sqrt_n_log_d;
    double constant = 1.0;
    TauMode mode = TauMode::fixed;
    std::map<Method, double> multiplier; // missing methods use 1
    double cv_lo = 0.05;
    double cv_hi = 20.0;
    int cv_points = 6;
    int cv_folds = 5;

    double base_value(Index n, double eps, Index d) const;
    double multiplier_for(Method m) const;
};

/// Stage-one settings. When truth_init is set the ground-truth factors are
/// used and the convex initializer is skipped.
struct InitRule {
    bool truth_init = false;
    double c_x = 1.0;      // tau_x = c_x sqrt(n / log m)
    double c_yx = 1.0;     // tau_yx = c_yx sqrt(n / log m)
    double radius = 0.1;   // absolute; scaled by sqrt(log m / n) when radius_scaled
    bool radius_scaled = true;
    DantzigOptions dantzig;
    LassoOptions lasso;
};

/// One optimizer budget. Several schedules make a method report its best error.
struct Schedule {
    double eta = 0.01;
    int iterations = 200;
};

struct ExperimentSpec {
    std::string name;
    ExperimentKind kind = ExperimentKind::phase_transition;
    ModelFamily family = ModelFamily::trace;
    KroneckerShape shape;
    TruthSpec truth;
    std::vector<double> eps;       // phase transition: noise t_{1.05 + eps} * noise_scale
    double noise_scale = 1.0;
    std::vector<Index> n;
    std::vector<double> kappa;     // replaces truth.kappa
    std::vector<TailSpec> predictors;
    std::vector<TailSpec> inactive_predictors; // empty: homogeneous design
    std::vector<TailSpec> noises;
    std::vector<Method> methods;
    int replications = 1;
    std::uint64_t seed = 1;
    std::optional<SparsityLevels> levels;
    std::vector<Schedule> schedules{Schedule{}};
    int trajectory_every = 0;
    TauRule tau;
    InitRule init;

    void validate() const;
};

/// One grid point. Fields not varied by the experiment hold their fixed value.
struct Cell {
    std::size_t index = 0;
    std::string label;
    double eps = 0.0;
    double kappa = 1.0;
    Index n = 0;
    TailSpec predictor;
    std::optional<TailSpec> inactive_predictor;
    TailSpec noise;
};

std::vector<Cell> expand_cells(const ExperimentSpec& spec);

struct Record {
    std::string experiment; // cell label
    Method method = Method::srgd;
    ModelFamily model = ModelFamily::trace;
    double eps = 0.0;
    double kappa = 1.0;
    Index n = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    double rel_error = 0.0; // NaN when failed
    int iters = 0;
    std::string status;     // FitStatus name, or "failed:<reason>"
    double wall_ms = 0.0;
    double tau = 0.0;
    std::vector<TrajectoryPoint> trajectory;

    bool ok() const noexcept { return status.rfind("failed", 0) != 0; }
};

struct Summary {
    std::string experiment;
    Method method = Method::srgd;
    double eps = 0.0;
    double kappa = 1.0;
    Index n = 0;
    int count = 0;
    int failures = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double median_ci_lo = 0.0; // 95% basic bootstrap
    double median_ci_hi = 0.0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
};

struct SlopeRow {
    Method method = Method::srgd;
    double eps = 0.0;
    double theory = 0.0; // -eps / (1 + eps)
    SlopeFit fit;
};

struct TrajectoryRow {
    std::string experiment;
    Method method = Method::srgd;
    double kappa = 1.0;
    int iteration = 0;
    double mean_rel_error = 0.0;
    int reps = 0;
};

struct ExperimentReport {
    std::string name;
    ExperimentKind kind = ExperimentKind::phase_transition;
    std::vector<Record> records;
    std::vector<Summary> summaries;
    std::vector<SlopeRow> slopes;
    std::vector<TrajectoryRow> trajectories;
    std::map<std::string, double> pilot_tau; // "cell|method" -> tau, cv_pilot mode only

    const Summary* find(std::string_view experiment, Method method) const;
};

struct RunOptions {
    int workers = 1;
    bool timing = false;
    /// Called after each finished (cell, replication) with (done, total).
    std::function<void(std::size_t, std::size_t)> progress;
};

/// Seed of one (cell, replication) task.
std::uint64_t task_seed(std::uint64_t base, int rep, std::size_t cell);

/// Runs every method on one (cell, replication) from its recorded seed.
/// `pilot_tau` supplies taus chosen in cv_pilot mode.
std::vector<Record> run_replication(const ExperimentSpec& spec, const Cell& cell, int rep, std::uint64_t seed,
                                    const std::map<std::string, double>& pilot_tau = {}, bool timing = false);

ExperimentReport run_experiment(const ExperimentSpec& spec, const RunOptions& options = {});
ExperimentReport run_phase_transition(const ExperimentSpec& spec, const RunOptions& options = {});
ExperimentReport run_conditioning(const ExperimentSpec& spec, const RunOptions& options = {});
ExperimentReport run_robustness(const ExperimentSpec& spec, const RunOptions& options = {});

/// Ordinary least squares y = slope * x + intercept with the slope's standard error.
SlopeFit fit_slope(const std::vector<double>& xs, const std::vector<double>& ys);

/// 95% basic bootstrap interval for the median.
std::pair<double, double> bootstrap_median_ci(const std::vector<double>& values, int resamples, std::uint64_t seed);

double median(std::vector<double> values);
double quantile(std::vector<double> values, double q);

// Serialization.
std::string records_to_csv(const ExperimentReport& report);
std::string trajectories_to_csv(const ExperimentReport& report);
std::string summary_to_json(const ExperimentReport& report);

} // namespace kronest
