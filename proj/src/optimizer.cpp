#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "kronest/error.hpp"
#include "kronest/optimizer.hpp"

namespace kronest {

std::string_view to_string(Method method)
{
    switch (method) {
    case Method::srgd:
        return "SRGD";
    case Method::scgd:
        return "ScGD";
    case Method::rgd:
        return "RGD";
    case Method::huber_gd:
        return "HuberGD";
    }
    return "unknown";
}

Method parse_method(std::string_view name)
{
    for (Method m : {Method::srgd, Method::scgd, Method::rgd, Method::huber_gd}) {
        if (name == to_string(m)) {
            return m;
        }
    }
    throw ParameterError("unknown method '" + std::string(name) + "' (expected SRGD, ScGD, RGD or HuberGD)");
}

std::string_view to_string(FitStatus status)
{
    switch (status) {
    case FitStatus::converged:
        return "converged";
    case FitStatus::budget_exhausted:
        return "budget_exhausted";
    case FitStatus::failed:
        return "failed";
    }
    return "unknown";
}

void OptimizerConfig::validate() const
{
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw ParameterError("eta must be positive and finite");
    }
    if (!(trunc.tau > 0.0)) {
        throw ParameterError("tau must be positive");
    }
    if (iterations < 0) {
        throw ParameterError("iterations must be non-negative");
    }
    if (trajectory_every < 0) {
        throw ParameterError("trajectory_every must be non-negative");
    }
    if (!(tolerance >= 0.0)) {
        throw ParameterError("tolerance must be non-negative");
    }
    if (!(divergence_factor > 1.0)) {
        throw ParameterError("divergence_factor must exceed 1");
    }
}

FactorPair srgd_step(const FactorPair& f, const Dataset& batch, const OptimizerConfig& config)
{
    const Index k = f.rank();
    ContractionSpec spec;
    bool scaled = false;
    switch (config.method) {
    case Method::srgd:
    case Method::scgd:
        spec.left_post = gram_inv_sqrt(f.right);
        spec.right_post = gram_inv_sqrt(f.left);
        spec.truncation = config.method == Method::srgd ? config.trunc : Truncation::none();
        scaled = true;
        break;
    case Method::rgd:
        spec.left_post = Matrix::Identity(k, k);
        spec.right_post = Matrix::Identity(k, k);
        spec.truncation = config.trunc;
        break;
    case Method::huber_gd:
        spec.left_post = Matrix::Identity(k, k);
        spec.right_post = Matrix::Identity(k, k);
        spec.residual_clip = config.trunc.tau;
        break;
    }
    const GradientPair g = average_gradient_terms(batch.oracle(), batch, f, spec, config.execution);
    FactorPair out;
    if (scaled) {
        out.left = f.left - config.eta * g.left * spec.left_post;
        out.right = f.right - config.eta * g.right * spec.right_post;
    } else {
        out.left = f.left - config.eta * g.left;
        out.right = f.right - config.eta * g.right;
    }
    return out;
}

FitResult fit(const FactorPair& f0, const Dataset& data, const OptimizerConfig& config, const Matrix* truth)
{
    config.validate();
    if (!f0.conforms(data.shape)) {
        throw ShapeError("fit: initial factors do not match the data shape");
    }
    if (truth != nullptr && (truth->rows() != data.shape.rows() || truth->cols() != data.shape.cols())) {
        throw ShapeError("fit: truth does not match the data shape");
    }
    const ModelOracle oracle = data.oracle();
    const KroneckerShape& shape = data.shape;

    FitResult result;
    result.factors = f0;
    double initial_loss = 0.0;

    auto record = [&](int iteration) {
        TrajectoryPoint pt;
        pt.iteration = iteration;
        pt.loss = empirical_loss(oracle, result.factors, data);
        if (truth != nullptr) {
            pt.rel_error = relative_error(compose(result.factors, shape), *truth);
        }
        result.trajectory.push_back(pt);
        return pt.loss;
    };
    auto fail = [&](std::string reason) {
        result.status = FitStatus::failed;
        result.reason = std::move(reason);
    };

    if (!f0.all_finite()) {
        fail("NonFinite: initial factors");
    }
    if (result.ok()) {
        initial_loss = record(0);
    }
    const double loss_floor = std::numeric_limits<double>::min();
    int j = 0;
    while (result.ok() && j < config.iterations) {
        FactorPair next;
        try {
            next = srgd_step(result.factors, data, config);
            if (config.levels && !config.levels->disabled(shape)) {
                next = scaled_hard_threshold(next, *config.levels);
            }
        } catch (const NearSingularGram& e) {
            fail(std::string("NearSingularGram: ") + e.what());
            break;
        }
        if (!next.all_finite()) {
            fail("NonFinite: iterate " + std::to_string(j + 1));
            break;
        }
        double change = std::numeric_limits<double>::infinity();
        if (config.tolerance > 0.0) {
            const Matrix before = result.factors.left * result.factors.right.transpose();
            const Matrix after = next.left * next.right.transpose();
            change = (after - before).norm() / std::max(before.norm(), loss_floor);
        }
        result.factors = std::move(next);
        ++j;
        const bool converged = change <= config.tolerance;
        const bool checkpoint = config.trajectory_every > 0 && j % config.trajectory_every == 0;
        if (checkpoint || converged || j == config.iterations) {
            const double loss = record(j);
            if (!std::isfinite(loss) || loss > config.divergence_factor * std::max(initial_loss, loss_floor)) {
                fail("Diverged: loss " + std::to_string(loss) + " at iteration " + std::to_string(j));
                break;
            }
        }
        if (converged) {
            result.status = FitStatus::converged;
            break;
        }
    }
    result.iterations = j;
    result.theta = compose(result.factors, shape);
    return result;
}

std::vector<double> log_grid(double lo, double hi, int points)
{
    if (!(lo > 0.0) || !(hi >= lo) || points < 1) {
        throw ParameterError("log_grid needs 0 < lo <= hi and at least one point");
    }
    std::vector<double> out;
    if (points == 1) {
        out.push_back(lo);
        return out;
    }
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (int i = 0; i < points; ++i) {
        out.push_back(i == 0 ? lo : i == points - 1 ? hi : std::exp(a + (b - a) * i / (points - 1)));
    }
    return out;
}

CvResult cross_validate_tau(const std::vector<double>& grid, int folds, const FactorPair& f0, const Dataset& data,
                            const OptimizerConfig& config)
{
    if (grid.empty()) {
        throw ParameterError("cross_validate_tau: empty grid");
    }
    if (folds < 2 || folds > data.size()) {
        throw ParameterError("cross_validate_tau: folds must be between 2 and the sample size");
    }
    for (double t : grid) {
        if (!(t > 0.0)) {
            throw ParameterError("cross_validate_tau: grid values must be positive");
        }
    }
    const Index n = data.size();
    const auto fold_begin = [&](int k) { return static_cast<Index>(n * k / folds); };
    const ModelOracle oracle = data.oracle();

    const int tasks = static_cast<int>(grid.size()) * folds;
    std::vector<double> losses(static_cast<std::size_t>(tasks), 0.0);
    std::vector<std::string> errors(static_cast<std::size_t>(tasks));
#pragma omp parallel for schedule(dynamic, 1)
    for (int task = 0; task < tasks; ++task) {
        const std::size_t g = static_cast<std::size_t>(task / folds);
        const int k = task % folds;
        std::vector<Index> train;
        std::vector<Index> held;
        for (Index i = 0; i < n; ++i) {
            (i >= fold_begin(k) && i < fold_begin(k + 1) ? held : train).push_back(i);
        }
        try {
            OptimizerConfig cfg = config;
            cfg.trunc = Truncation::at(grid[g]);
            cfg.trajectory_every = 0;
            const FitResult r = fit(f0, data.subset(train), cfg);
            if (!r.ok()) {
                errors[static_cast<std::size_t>(task)] = r.reason;
                continue;
            }
            const Dataset test = data.subset(held);
            losses[static_cast<std::size_t>(task)] = empirical_loss(oracle, r.factors, test);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(task)] = e.what();
        }
    }

    CvResult out;
    bool any = false;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CvRow row;
        row.tau = grid[g];
        double acc = 0.0;
        for (int k = 0; k < folds; ++k) {
            const std::size_t task = g * static_cast<std::size_t>(folds) + static_cast<std::size_t>(k);
            if (!errors[task].empty() && !row.failed) {
                row.failed = true;
                row.reason = "fold " + std::to_string(k) + ": " + errors[task];
            }
            acc += losses[task];
        }
        row.mean_loss = row.failed ? std::numeric_limits<double>::quiet_NaN() : acc / folds;
        if (!row.failed && std::isfinite(row.mean_loss) &&
            (!any || row.mean_loss < best || (row.mean_loss == best && row.tau > out.tau))) {
            any = true;
            best = row.mean_loss;
            out.tau = row.tau;
        }
        out.table.push_back(std::move(row));
    }
    if (!any) {
        throw Error("cross_validate_tau: every candidate tau failed");
    }
    return out;
}

} // namespace kronest
