#include <algorithm>
#include <cmath>
#include <exception>
#include <vector>

#include "kronest/error.hpp"
#include "kronest/init.hpp"

namespace kronest {

namespace {

constexpr int kCheckEvery = 10;
constexpr int kFarkasEvery = 500;
constexpr int kMaxRhoChanges = 10;

Vector soft_threshold(const Vector& v, double t)
{
    return v.unaryExpr([t](double x) { return std::copysign(std::max(std::abs(x) - t, 0.0), x); });
}

// Largest |eigenvalue| of a symmetric matrix, from a deterministic start.
double spectral_norm_estimate(const Matrix& a, int steps)
{
    const Index m = a.rows();
    Vector v(m);
    for (Index i = 0; i < m; ++i) {
        v(i) = 1.0 + 0.25 * std::sin(static_cast<double>(i + 1));
    }
    v.normalize();
    double est = 0.0;
    for (int k = 0; k < steps; ++k) {
        Vector w = a * v;
        est = w.norm();
        if (est == 0.0) {
            return 0.0;
        }
        v = w / est;
    }
    return est;
}

// b^T w - R ||w||_1 after rescaling w so that ||A w||_inf <= 1.
double dual_value(const Matrix& a, const Vector& b, double radius, const Vector& w)
{
    const double scale = std::max(1.0, (a * w).cwiseAbs().maxCoeff());
    return (b.dot(w) - radius * w.lpNorm<1>()) / scale;
}

// A nonzero w with A w = 0 and b^T w > R ||w||_1 proves the constraint set empty.
bool farkas_certificate(const Matrix& a, const Vector& b, double radius, const Vector& u)
{
    const double mass = u.lpNorm<1>();
    if (!(mass > 0.0) || !std::isfinite(mass)) {
        return false;
    }
    for (double sign : {1.0, -1.0}) {
        const Vector w = sign * u / mass;
        const double gap = b.dot(w) - radius;
        const double leak = (a * w).cwiseAbs().maxCoeff();
        if (gap > 1e-6 * (1.0 + b.cwiseAbs().maxCoeff()) && leak * 1e3 < gap) {
            return true;
        }
    }
    return false;
}

struct Polished {
    Vector theta;
    double objective = 0.0;
    double lower_bound = 0.0;
    double violation = 0.0;
};

// Guess the optimal vertex from the support of theta and the active
// constraints, solve for it exactly and certify it with the matching dual.
bool polish(const Matrix& a, const Vector& b, double radius, const Vector& theta, Polished& out)
{
    const double big = theta.cwiseAbs().maxCoeff();
    if (!(big > 0.0)) {
        return false;
    }
    const Vector r = a * theta - b;
    const double slack = 1e-5 * (1.0 + b.cwiseAbs().maxCoeff());
    std::vector<Index> support;
    std::vector<Index> active;
    for (Index j = 0; j < theta.size(); ++j) {
        if (std::abs(theta(j)) > 1e-7 * big) {
            support.push_back(j);
        }
        if (std::abs(r(j)) >= radius - slack) {
            active.push_back(j);
        }
    }
    if (active.empty() || active.size() > 4 * support.size() + 8) {
        return false;
    }
    const auto ns = static_cast<Index>(support.size());
    const auto na = static_cast<Index>(active.size());
    Matrix sub(na, ns);
    Vector rhs(na);
    Vector sign_s(ns);
    for (Index i = 0; i < na; ++i) {
        for (Index j = 0; j < ns; ++j) {
            sub(i, j) = a(active[i], support[j]);
        }
        rhs(i) = b(active[i]) + std::copysign(radius, r(active[i]));
    }
    for (Index j = 0; j < ns; ++j) {
        sign_s(j) = theta(support[j]) > 0.0 ? 1.0 : -1.0;
    }
    const Eigen::ColPivHouseholderQR<Matrix> qr(sub);
    const Vector ts = qr.solve(rhs);
    const Vector ws = sub.transpose().colPivHouseholderQr().solve(sign_s);
    if (!ts.allFinite() || !ws.allFinite()) {
        return false;
    }
    out.theta = Vector::Zero(theta.size());
    Vector w = Vector::Zero(theta.size());
    for (Index j = 0; j < ns; ++j) {
        out.theta(support[j]) = ts(j);
    }
    for (Index i = 0; i < na; ++i) {
        w(active[i]) = ws(i);
    }
    out.objective = out.theta.lpNorm<1>();
    out.violation = std::max(0.0, (a * out.theta - b).cwiseAbs().maxCoeff() - radius);
    out.lower_bound = std::max(dual_value(a, b, radius, w), dual_value(a, b, radius, -w));
    return true;
}

} // namespace

std::string_view to_string(SolverStatus status)
{
    switch (status) {
    case SolverStatus::converged:
        return "converged";
    case SolverStatus::max_iterations:
        return "max_iterations";
    }
    return "unknown";
}

DantzigResult dantzig_select(const Matrix& sigma, const Vector& target, double radius, const DantzigOptions& options)
{
    const Index m = sigma.rows();
    if (sigma.cols() != m || target.size() != m) {
        throw ShapeError("dantzig_select: sigma must be square and match the target length");
    }
    if (!(radius >= 0.0) || !std::isfinite(radius)) {
        throw ParameterError("dantzig_select: radius must be finite and non-negative");
    }
    if (!(options.tolerance > 0.0) || !(options.gap_tolerance > 0.0) || options.max_iterations < 1 || options.rho_scale <= 0.0) {
        throw ParameterError("dantzig_select: invalid solver options");
    }
    if (!sigma.allFinite() || !target.allFinite()) {
        throw ParameterError("dantzig_select: non-finite input");
    }

    DantzigResult result;
    result.theta = Vector::Zero(m);
    const double b_inf = target.cwiseAbs().maxCoeff();
    if (b_inf <= radius) {
        result.status = SolverStatus::converged;
        return result;
    }

    const double norm_est = spectral_norm_estimate(sigma, options.power_iterations);
    const double row_bound = sigma.cwiseAbs().rowwise().sum().maxCoeff();
    if (!(norm_est > 0.0)) {
        throw InfeasibleProblem("dantzig_select: sigma is zero but the target exceeds the radius");
    }
    const double a_norm = std::min(1.02 * norm_est, row_bound);
    const double mu = a_norm * a_norm;
    double rho = options.rho_scale / a_norm;
    int rho_changes_left = kMaxRhoChanges;

    Vector theta = Vector::Zero(m);
    Vector a_theta = Vector::Zero(m);
    Vector u = Vector::Zero(m);
    Vector z(m);
    const double scale = 1.0 + b_inf;
    double best_lb = 0.0;

    int k = 0;
    for (; k < options.max_iterations; ++k) {
        const Vector v = a_theta - target + u / rho;
        z = v.cwiseMax(-radius).cwiseMin(radius);
        const Vector step = sigma * (v - z);
        const Vector prev = theta;
        theta = soft_threshold(theta - step / mu, 1.0 / (rho * mu));
        a_theta.noalias() = sigma * theta;
        const Vector primal = a_theta - target - z;
        u += rho * primal;

        if ((k + 1) % kCheckEvery != 0) {
            continue;
        }
        const double primal_res = primal.cwiseAbs().maxCoeff();
        const double move = (theta - prev).cwiseAbs().maxCoeff();
        const double obj = theta.lpNorm<1>();
        best_lb = std::max({best_lb, dual_value(sigma, target, radius, -u), dual_value(sigma, target, radius, u)});
        const double violation = std::max(0.0, (a_theta - target).cwiseAbs().maxCoeff() - radius);
        if (primal_res <= options.tolerance * scale && violation <= options.tolerance * scale &&
            move <= options.tolerance * (1.0 + theta.cwiseAbs().maxCoeff()) &&
            obj - best_lb <= options.gap_tolerance * (1.0 + obj)) {
            ++k;
            result.status = SolverStatus::converged;
            break;
        }
        if ((k + 1) % kFarkasEvery == 0) {
            if (farkas_certificate(sigma, target, radius, u)) {
                throw InfeasibleProblem("dantzig_select: constraint set is empty");
            }
            Polished p;
            if (polish(sigma, target, radius, theta, p) && p.violation <= 0.1 * options.tolerance * scale &&
                p.objective - std::max(best_lb, p.lower_bound) <= options.gap_tolerance * (1.0 + p.objective)) {
                result.status = SolverStatus::converged;
                result.iterations = k + 1;
                result.theta = p.theta;
                result.objective = p.objective;
                result.lower_bound = std::max(best_lb, p.lower_bound);
                result.violation = p.violation;
                return result;
            }
        }
        // Residual balancing, a bounded number of times; endless rho changes can cycle.
        if ((k + 1) % 100 == 0 && rho_changes_left > 0) {
            const double dual_res = rho * mu * move;
            if (primal_res > 10.0 * dual_res) {
                rho *= 2.0;
                --rho_changes_left;
            } else if (dual_res > 10.0 * primal_res) {
                rho /= 2.0;
                --rho_changes_left;
            }
        }
    }
    if (result.status != SolverStatus::converged && farkas_certificate(sigma, target, radius, u)) {
        throw InfeasibleProblem("dantzig_select: constraint set is empty");
    }
    result.iterations = k;
    result.theta = theta;
    result.objective = theta.lpNorm<1>();
    result.lower_bound = std::max({best_lb, dual_value(sigma, target, radius, -u), dual_value(sigma, target, radius, u)});
    result.violation = std::max(0.0, (sigma * theta - target).cwiseAbs().maxCoeff() - radius);
    return result;
}

Matrix dantzig_select_rows(const Matrix& sigma, const Matrix& target, double radius, const DantzigOptions& options,
                           std::vector<DantzigResult>* diagnostics)
{
    if (target.cols() != sigma.rows()) {
        throw ShapeError("dantzig_select_rows: target has " + std::to_string(target.cols()) + " columns, sigma is " +
                         std::to_string(sigma.rows()) + " x " + std::to_string(sigma.cols()));
    }
    const Index rows = target.rows();
    std::vector<DantzigResult> results(static_cast<std::size_t>(rows));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(rows));
#pragma omp parallel for schedule(dynamic, 1)
    for (Index r = 0; r < rows; ++r) {
        try {
            results[static_cast<std::size_t>(r)] = dantzig_select(sigma, target.row(r).transpose(), radius, options);
        } catch (...) {
            errors[static_cast<std::size_t>(r)] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    Matrix theta(rows, sigma.rows());
    for (Index r = 0; r < rows; ++r) {
        theta.row(r) = results[static_cast<std::size_t>(r)].theta.transpose();
    }
    if (diagnostics != nullptr) {
        *diagnostics = std::move(results);
    }
    return theta;
}

} // namespace kronest
