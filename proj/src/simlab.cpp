#include "kronest/simlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kronest/error.hpp"
#include "kronest/io.hpp"

namespace kronest {

namespace {

constexpr std::uint64_t kPilotSalt = 0x9e11a7c0ffee5eedULL;
constexpr int kBootstrapResamples = 1000;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string pilot_key(std::size_t cell, Method m) { return std::to_string(cell) + "|" + std::string(to_string(m)); }

GeneratorConfig generator_for(const ExperimentSpec& spec, const Cell& cell)
{
    GeneratorConfig gen;
    gen.family = spec.family;
    gen.shape = spec.shape;
    gen.truth = spec.truth;
    gen.truth.kappa = cell.kappa;
    gen.predictor = cell.predictor;
    gen.inactive_predictor = cell.inactive_predictor;
    gen.noise = cell.noise;
    return gen;
}

Index max_dim(const KroneckerShape& s) { return std::max(s.d1(), s.d2()); }

InitConfig init_config_for(const InitRule& rule, const Dataset& data)
{
    const auto m = static_cast<double>(std::max<Index>(data.design().rows(), 2));
    const auto n = static_cast<double>(data.size());
    InitConfig cfg;
    cfg.tau_x = rule.c_x * std::sqrt(n / std::log(m));
    cfg.tau_yx = rule.c_yx * std::sqrt(n / std::log(m));
    cfg.radius = rule.radius_scaled ? rule.radius * std::sqrt(std::log(m) / n) : rule.radius;
    cfg.dantzig = rule.dantzig;
    cfg.lasso = rule.lasso;
    return cfg;
}

SparsityLevels levels_for(const ExperimentSpec& spec)
{
    return spec.levels ? *spec.levels : SparsityLevels::full(spec.shape);
}

OptimizerConfig optimizer_for(const ExperimentSpec& spec, Method method, const Schedule& s, double tau)
{
    OptimizerConfig cfg;
    cfg.eta = s.eta;
    cfg.iterations = s.iterations;
    cfg.trunc = std::isfinite(tau) ? Truncation::at(tau) : Truncation::none();
    cfg.levels = spec.levels;
    cfg.method = method;
    cfg.trajectory_every = spec.trajectory_every;
    return cfg;
}

struct Prepared {
    GroundTruth truth;
    Dataset data;
    FactorPair f0;
};

Prepared prepare(const ExperimentSpec& spec, const Cell& cell, std::uint64_t seed)
{
    Rng rng(seed);
    const GeneratorConfig gen = generator_for(spec, cell);
    Prepared p{make_truth(gen, rng), {}, {}};
    p.data = generate_dataset(gen, p.truth, cell.n, rng);
    if (spec.init.truth_init) {
        p.f0 = p.truth.factors;
    } else {
        p.f0 = robust_initialize(p.data, init_config_for(spec.init, p.data), levels_for(spec)).factors;
    }
    return p;
}

std::vector<double> cv_grid(const TauRule& rule, double base)
{
    std::vector<double> grid = log_grid(rule.cv_lo, rule.cv_hi, rule.cv_points);
    for (double& g : grid) {
        g *= base;
    }
    return grid;
}

std::string sanitize(std::string s)
{
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') {
            c = ';';
        }
    }
    return s;
}

std::string format_label(const ExperimentSpec& spec, const Cell& c)
{
    std::string label = spec.name;
    if (spec.predictors.size() > 1) {
        label += "/x=" + c.predictor.label();
    }
    if (spec.inactive_predictors.size() > 1 && c.inactive_predictor) {
        label += "/xbar=" + c.inactive_predictor->label();
    }
    if (spec.kind != ExperimentKind::phase_transition && spec.noises.size() > 1) {
        label += "/e=" + c.noise.label();
    }
    return label;
}

std::map<std::string, double> run_pilots(const ExperimentSpec& spec, const std::vector<Cell>& cells, int workers)
{
    std::map<std::string, double> out;
    if (spec.tau.mode != TauMode::cv_pilot) {
        return out;
    }
    const auto total = static_cast<std::int64_t>(cells.size() * spec.methods.size());
    std::vector<double> taus(static_cast<std::size_t>(total), kNaN);
    std::vector<std::string> errors(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::int64_t t = 0; t < total; ++t) {
        const auto ci = static_cast<std::size_t>(t) / spec.methods.size();
        const Method method = spec.methods[static_cast<std::size_t>(t) % spec.methods.size()];
        const Cell& cell = cells[ci];
        if (method == Method::scgd) {
            taus[static_cast<std::size_t>(t)] = std::numeric_limits<double>::infinity();
            continue;
        }
        try {
            const Prepared p = prepare(spec, cell, mix_seed(spec.seed ^ kPilotSalt, ci));
            const double base = spec.tau.base_value(cell.n, cell.eps, max_dim(spec.shape));
            const OptimizerConfig cfg = optimizer_for(spec, method, spec.schedules.front(), base);
            taus[static_cast<std::size_t>(t)] =
                cross_validate_tau(cv_grid(spec.tau, base), spec.tau.cv_folds, p.f0, p.data, cfg).tau;
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(t)] = e.what();
        }
    }
    for (std::int64_t t = 0; t < total; ++t) {
        const auto ci = static_cast<std::size_t>(t) / spec.methods.size();
        const Method method = spec.methods[static_cast<std::size_t>(t) % spec.methods.size()];
        if (!errors[static_cast<std::size_t>(t)].empty()) {
            throw Error("pilot CV for " + cells[ci].label + " " + std::string(to_string(method)) +
                        " failed: " + errors[static_cast<std::size_t>(t)]);
        }
        out[pilot_key(ci, method)] = taus[static_cast<std::size_t>(t)];
        spdlog::debug("pilot tau {} {} = {}", cells[ci].label, to_string(method), taus[static_cast<std::size_t>(t)]);
    }
    return out;
}

void summarize(const ExperimentSpec& spec, const std::vector<Cell>& cells, ExperimentReport& report)
{
    for (const Cell& cell : cells) {
        for (Method method : spec.methods) {
            Summary s;
            s.experiment = cell.label;
            s.method = method;
            s.eps = cell.eps;
            s.kappa = cell.kappa;
            s.n = cell.n;
            std::vector<double> errs;
            std::vector<const Record*> traj;
            for (const Record& r : report.records) {
                if (r.experiment != cell.label || r.method != method || r.eps != cell.eps || r.kappa != cell.kappa ||
                    r.n != cell.n) {
                    continue;
                }
                if (r.ok()) {
                    errs.push_back(r.rel_error);
                    traj.push_back(&r);
                } else {
                    ++s.failures;
                }
            }
            s.count = static_cast<int>(errs.size());
            if (!errs.empty()) {
                s.mean = std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
                s.median = median(errs);
                s.q1 = quantile(errs, 0.25);
                s.q3 = quantile(errs, 0.75);
                const auto ci = bootstrap_median_ci(
                    errs, kBootstrapResamples, mix_seed(spec.seed, cell.index * 16 + static_cast<std::size_t>(method)));
                s.median_ci_lo = ci.first;
                s.median_ci_hi = ci.second;
            } else {
                s.mean = s.median = s.q1 = s.q3 = s.median_ci_lo = s.median_ci_hi = kNaN;
            }
            report.summaries.push_back(s);

            if (spec.trajectory_every > 0 && !traj.empty()) {
                std::size_t len = 0;
                for (const Record* r : traj) {
                    len = std::max(len, r->trajectory.size());
                }
                for (std::size_t k = 0; k < len; ++k) {
                    TrajectoryRow row;
                    row.experiment = cell.label;
                    row.method = method;
                    row.kappa = cell.kappa;
                    double acc = 0.0;
                    for (const Record* r : traj) {
                        if (r->trajectory.size() == len && r->trajectory[k].rel_error) {
                            row.iteration = r->trajectory[k].iteration;
                            acc += *r->trajectory[k].rel_error;
                            ++row.reps;
                        }
                    }
                    if (row.reps > 0) {
                        row.mean_rel_error = acc / row.reps;
                        report.trajectories.push_back(row);
                    }
                }
            }
        }
    }

    if (spec.kind != ExperimentKind::phase_transition) {
        return;
    }
    for (Method method : spec.methods) {
        for (double eps : spec.eps) {
            std::vector<double> xs;
            std::vector<double> ys;
            for (const Summary& s : report.summaries) {
                if (s.method == method && s.eps == eps && s.count > 0 && s.mean > 0.0) {
                    xs.push_back(std::log(static_cast<double>(s.n)));
                    ys.push_back(std::log(s.mean));
                }
            }
            if (xs.size() < 3) {
                spdlog::warn("{}: only {} usable n values for eps={}, no slope", spec.name, xs.size(), eps);
                continue;
            }
            SlopeRow row;
            row.method = method;
            row.eps = eps;
            row.theory = -eps / (1.0 + eps);
            row.fit = fit_slope(xs, ys);
            report.slopes.push_back(row);
        }
    }
}

} // namespace

std::string_view to_string(ExperimentKind kind)
{
    switch (kind) {
    case ExperimentKind::phase_transition:
        return "phase_transition";
    case ExperimentKind::conditioning:
        return "conditioning";
    case ExperimentKind::robustness:
        return "robustness";
    case ExperimentKind::glm_ablation:
        return "glm_ablation";
    case ExperimentKind::bilinear_robustness:
        return "bilinear_robustness";
    }
    return "unknown";
}

ExperimentKind parse_experiment_kind(std::string_view name)
{
    for (auto k : {ExperimentKind::phase_transition, ExperimentKind::conditioning, ExperimentKind::robustness,
                   ExperimentKind::glm_ablation, ExperimentKind::bilinear_robustness}) {
        if (name == to_string(k)) {
            return k;
        }
    }
    throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

double TauRule::base_value(Index n, double eps, Index d) const
{
    switch (base) {
    case TauBase::power:
        return constant * std::pow(static_cast<double>(n), 1.0 / (1.0 + eps));
    case TauBase::sqrt_n_log_d:
        return sqrt_n_over_log_d(n, d, constant);
    }
    return constant;
}

double TauRule::multiplier_for(Method m) const
{
    const auto it = multiplier.find(m);
    return it == multiplier.end() ? 1.0 : it->second;
}

void ExperimentSpec::validate() const
{
    if (name.empty()) {
        throw ConfigError("experiment name is empty");
    }
    shape.validate();
    if (replications < 1) {
        throw ConfigError("replications must be >= 1");
    }
    if (n.empty() || kappa.empty() || predictors.empty() || methods.empty() || schedules.empty()) {
        throw ConfigError("n, kappa, predictors, methods and schedules must be nonempty");
    }
    if (kind == ExperimentKind::phase_transition) {
        if (eps.empty()) {
            throw ConfigError("phase_transition needs a nonempty eps grid");
        }
        if (family == ModelFamily::logistic) {
            throw ConfigError("phase_transition needs the trace or bilinear family");
        }
        for (double e : eps) {
            if (!(e > 0.0)) {
                throw ConfigError("eps values must be positive");
            }
        }
    } else if (noises.empty() && family != ModelFamily::logistic) {
        throw ConfigError("noises must be nonempty");
    }
    for (Index v : n) {
        if (v < 2) {
            throw ConfigError("sample sizes must be >= 2");
        }
    }
    for (const Schedule& s : schedules) {
        if (!(s.eta > 0.0) || s.iterations < 0) {
            throw ConfigError("schedules need eta > 0 and iterations >= 0");
        }
    }
    if (levels) {
        levels->validate(shape);
    }
    if (!(tau.constant > 0.0)) {
        throw ConfigError("tau constant must be positive");
    }
    for (const auto& [m, v] : tau.multiplier) {
        if (!(v > 0.0)) {
            throw ConfigError("tau multiplier for " + std::string(to_string(m)) + " must be positive");
        }
    }
    if (tau.mode != TauMode::fixed) {
        if (tau.cv_folds < 2 || tau.cv_points < 1 || !(tau.cv_lo > 0.0) || !(tau.cv_hi >= tau.cv_lo)) {
            throw ConfigError("invalid tau CV settings");
        }
    }
    if (!(init.c_x > 0.0) || !(init.c_yx > 0.0) || !(init.radius >= 0.0)) {
        throw ConfigError("init needs c_x, c_yx > 0 and radius >= 0");
    }
    for (const Cell& c : expand_cells(*this)) {
        generator_for(*this, c).validate();
    }
}

std::vector<Cell> expand_cells(const ExperimentSpec& spec)
{
    const bool phase = spec.kind == ExperimentKind::phase_transition;
    const std::vector<double> eps = phase ? spec.eps : std::vector<double>{0.0};
    std::vector<std::optional<TailSpec>> inactive;
    for (const TailSpec& t : spec.inactive_predictors) {
        inactive.emplace_back(t);
    }
    if (inactive.empty()) {
        inactive.emplace_back(std::nullopt);
    }
    // Logistic responses carry no additive noise.
    const bool noiseless = phase || (spec.family == ModelFamily::logistic && spec.noises.empty());
    const std::vector<TailSpec> noises = noiseless ? std::vector<TailSpec>{TailSpec{}} : spec.noises;

    std::vector<Cell> cells;
    for (double e : eps) {
        for (Index n : spec.n) {
            for (double k : spec.kappa) {
                for (const TailSpec& x : spec.predictors) {
                    for (const auto& xbar : inactive) {
                        for (const TailSpec& noise : noises) {
                            Cell c;
                            c.index = cells.size();
                            c.eps = e;
                            c.kappa = k;
                            c.n = n;
                            c.predictor = x;
                            c.inactive_predictor = xbar;
                            c.noise = phase ? TailSpec::student_t(1.05 + e, spec.noise_scale) : noise;
                            c.label = format_label(spec, c);
                            cells.push_back(std::move(c));
                        }
                    }
                }
            }
        }
    }
    return cells;
}

std::uint64_t task_seed(std::uint64_t base, int rep, std::size_t cell)
{
    return mix_seed(base ^ static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(cell));
}

std::vector<Record> run_replication(const ExperimentSpec& spec, const Cell& cell, int rep, std::uint64_t seed,
                                    const std::map<std::string, double>& pilot_tau, bool timing)
{
    using Clock = std::chrono::steady_clock;
    std::vector<Record> out;
    auto blank = [&](Method m) {
        Record r;
        r.experiment = cell.label;
        r.method = m;
        r.model = spec.family;
        r.eps = cell.eps;
        r.kappa = cell.kappa;
        r.n = cell.n;
        r.rep = rep;
        r.seed = seed;
        r.rel_error = kNaN;
        return r;
    };

    const auto prep_start = Clock::now();
    Prepared p;
    try {
        p = prepare(spec, cell, seed);
    } catch (const Error& e) {
        spdlog::warn("{} rep {}: setup failed: {}", cell.label, rep, e.what());
        for (Method m : spec.methods) {
            Record r = blank(m);
            r.status = sanitize(std::string("failed:init:") + e.what());
            out.push_back(std::move(r));
        }
        return out;
    }
    const double prep_ms = std::chrono::duration<double, std::milli>(Clock::now() - prep_start).count();

    const double base = spec.tau.base_value(cell.n, cell.eps, max_dim(spec.shape));
    for (Method method : spec.methods) {
        const auto start = Clock::now();
        Record r = blank(method);
        try {
            double tau = base * spec.tau.multiplier_for(method);
            if (method == Method::scgd) {
                tau = std::numeric_limits<double>::infinity();
            } else if (spec.tau.mode == TauMode::cv) {
                const OptimizerConfig cfg = optimizer_for(spec, method, spec.schedules.front(), base);
                tau = cross_validate_tau(cv_grid(spec.tau, base), spec.tau.cv_folds, p.f0, p.data, cfg).tau;
            } else if (spec.tau.mode == TauMode::cv_pilot) {
                const auto it = pilot_tau.find(pilot_key(cell.index, method));
                if (it == pilot_tau.end()) {
                    throw Error("no pilot tau for " + cell.label);
                }
                tau = it->second;
            }
            r.tau = tau;
            bool any = false;
            std::string last_failure;
            for (const Schedule& s : spec.schedules) {
                FitResult fr = fit(p.f0, p.data, optimizer_for(spec, method, s, tau), &p.truth.theta);
                if (!fr.ok()) {
                    last_failure = fr.reason;
                    continue;
                }
                const double err = relative_error(fr.theta, p.truth.theta);
                if (!any || err < r.rel_error) {
                    any = true;
                    r.rel_error = err;
                    r.iters = fr.iterations;
                    r.status = std::string(to_string(fr.status));
                    r.trajectory = std::move(fr.trajectory);
                }
            }
            if (!any) {
                r.status = sanitize("failed:" + last_failure);
                spdlog::warn("{} rep {} {}: {}", cell.label, rep, to_string(method), last_failure);
            }
        } catch (const Error& e) {
            r.status = sanitize(std::string("failed:") + e.what());
            spdlog::warn("{} rep {} {}: {}", cell.label, rep, to_string(method), e.what());
        }
        if (timing) {
            r.wall_ms = prep_ms + std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        }
        out.push_back(std::move(r));
    }
    return out;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const RunOptions& options)
{
    spec.validate();
    const int workers = std::max(1, options.workers);
    const std::vector<Cell> cells = expand_cells(spec);

    ExperimentReport report;
    report.name = spec.name;
    report.kind = spec.kind;
    report.pilot_tau = run_pilots(spec, cells, workers);

    const std::size_t reps = static_cast<std::size_t>(spec.replications);
    const auto total = static_cast<std::int64_t>(cells.size() * reps);
    std::vector<std::vector<Record>> results(static_cast<std::size_t>(total));
    std::size_t done = 0;
    spdlog::info("{}: {} cells x {} replications x {} methods", spec.name, cells.size(), reps, spec.methods.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::int64_t t = 0; t < total; ++t) {
        const std::size_t ci = static_cast<std::size_t>(t) / reps;
        const int rep = static_cast<int>(static_cast<std::size_t>(t) % reps);
        results[static_cast<std::size_t>(t)] =
            run_replication(spec, cells[ci], rep, task_seed(spec.seed, rep, ci), report.pilot_tau, options.timing);
#pragma omp critical(kronest_progress)
        {
            ++done;
            if (options.progress) {
                options.progress(done, static_cast<std::size_t>(total));
            }
        }
    }
    for (auto& batch : results) {
        for (auto& r : batch) {
            report.records.push_back(std::move(r));
        }
    }
    summarize(spec, cells, report);
    return report;
}

ExperimentReport run_phase_transition(const ExperimentSpec& spec, const RunOptions& options)
{
    if (spec.kind != ExperimentKind::phase_transition) {
        throw ConfigError("run_phase_transition: spec kind is " + std::string(to_string(spec.kind)));
    }
    return run_experiment(spec, options);
}

ExperimentReport run_conditioning(const ExperimentSpec& spec, const RunOptions& options)
{
    if (spec.kind != ExperimentKind::conditioning) {
        throw ConfigError("run_conditioning: spec kind is " + std::string(to_string(spec.kind)));
    }
    return run_experiment(spec, options);
}

ExperimentReport run_robustness(const ExperimentSpec& spec, const RunOptions& options)
{
    if (spec.kind != ExperimentKind::robustness && spec.kind != ExperimentKind::glm_ablation &&
        spec.kind != ExperimentKind::bilinear_robustness) {
        throw ConfigError("run_robustness: spec kind is " + std::string(to_string(spec.kind)));
    }
    return run_experiment(spec, options);
}

const Summary* ExperimentReport::find(std::string_view experiment, Method method) const
{
    for (const Summary& s : summaries) {
        if (s.experiment == experiment && s.method == method) {
            return &s;
        }
    }
    return nullptr;
}

SlopeFit fit_slope(const std::vector<double>& xs, const std::vector<double>& ys)
{
    if (xs.size() != ys.size()) {
        throw ParameterError("fit_slope: x and y lengths differ");
    }
    if (xs.size() < 3) {
        throw ParameterError("fit_slope: need at least 3 points, got " + std::to_string(xs.size()));
    }
    const auto n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw ParameterError("fit_slope: x values have zero variance");
    }
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - f.intercept - f.slope * xs[i];
        ssr += r * r;
    }
    f.stderr_slope = std::sqrt(ssr / (n - 2.0) / sxx);
    return f;
}

double quantile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw ParameterError("quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::pair<double, double> bootstrap_median_ci(const std::vector<double>& values, int resamples, std::uint64_t seed)
{
    if (values.empty() || resamples < 1) {
        throw ParameterError("bootstrap needs a nonempty sample and at least one resample");
    }
    const double m = median(values);
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> meds(static_cast<std::size_t>(resamples));
    std::vector<double> draw(values.size());
    for (auto& md : meds) {
        for (auto& d : draw) {
            d = values[pick(rng.engine())];
        }
        md = median(draw);
    }
    return {2.0 * m - quantile(meds, 0.975), 2.0 * m - quantile(meds, 0.025)};
}

} // namespace kronest
