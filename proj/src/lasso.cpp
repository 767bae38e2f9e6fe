#include <algorithm>
#include <cmath>

#include "kronest/error.hpp"
#include "kronest/init.hpp"

namespace kronest {

namespace {

Vector soft_threshold(const Vector& v, double t)
{
    return v.unaryExpr([t](double x) { return std::copysign(std::max(std::abs(x) - t, 0.0), x); });
}

struct LogisticLoss {
    const Matrix& xs;
    const Vector& ys;

    double value(const Vector& theta) const
    {
        const Vector t = xs.transpose() * theta;
        double acc = 0.0;
        for (Index i = 0; i < t.size(); ++i) {
            acc += ModelOracle::cumulant(t(i)) - ys(i) * t(i);
        }
        return acc / static_cast<double>(t.size());
    }

    Vector gradient(const Vector& theta) const
    {
        Vector r = xs.transpose() * theta;
        for (Index i = 0; i < r.size(); ++i) {
            r(i) = ModelOracle::link(r(i)) - ys(i);
        }
        return xs * r / static_cast<double>(r.size());
    }
};

} // namespace

double logistic_lasso_objective(const Matrix& xs, const Vector& ys, const Vector& theta, double radius)
{
    return LogisticLoss{xs, ys}.value(theta) + radius * theta.lpNorm<1>();
}

LassoResult robust_lasso(const Matrix& xs, const Vector& ys, double tau_x, double radius, const LassoOptions& options)
{
    if (ys.size() != xs.cols()) {
        throw ShapeError("robust_lasso: " + std::to_string(ys.size()) + " responses for " +
                         std::to_string(xs.cols()) + " samples");
    }
    if (xs.cols() == 0) {
        throw ParameterError("robust_lasso: empty sample");
    }
    if (!(tau_x > 0.0) || !(radius >= 0.0) || !std::isfinite(radius)) {
        throw ParameterError("robust_lasso: tau_x must be positive and the radius finite and non-negative");
    }
    if (!(options.tolerance > 0.0) || options.max_iterations < 1) {
        throw ParameterError("robust_lasso: invalid solver options");
    }
    const Matrix xt = xs.cwiseMax(-tau_x).cwiseMin(tau_x);
    const LogisticLoss loss{xt, ys};
    const Index m = xt.rows();

    // g'' <= 1/4, so ||X||^2 / (4n) bounds the curvature; start below it and backtrack.
    double lip = std::max(1e-12, xt.squaredNorm() / (4.0 * static_cast<double>(xt.cols())) / static_cast<double>(m));

    Vector theta = Vector::Zero(m);
    Vector y = theta;
    double t = 1.0;
    LassoResult result;
    int k = 0;
    double residual = 0.0;
    for (; k < options.max_iterations; ++k) {
        const Vector g = loss.gradient(y);
        const double fy = loss.value(y);
        Vector next;
        while (true) {
            next = soft_threshold(y - g / lip, radius / lip);
            const Vector d = next - y;
            if (loss.value(next) <= fy + g.dot(d) + 0.5 * lip * d.squaredNorm() + 1e-15 * std::abs(fy)) {
                break;
            }
            lip *= 2.0;
            if (!std::isfinite(lip)) {
                throw ParameterError("robust_lasso: step size search failed");
            }
        }
        const Vector diff = next - theta;
        if ((y - next).dot(diff) > 0.0) {
            // Momentum points uphill; restart from the last iterate.
            t = 1.0;
            y = theta;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * diff;
        theta = next;
        t = t_next;

        residual = (theta - soft_threshold(theta - loss.gradient(theta), radius)).cwiseAbs().maxCoeff();
        if (residual <= options.tolerance) {
            ++k;
            result.status = SolverStatus::converged;
            break;
        }
    }
    if (result.status != SolverStatus::converged) {
        residual = (theta - soft_threshold(theta - loss.gradient(theta), radius)).cwiseAbs().maxCoeff();
    }
    result.theta = theta;
    result.iterations = k;
    result.residual = residual;
    result.objective = loss.value(theta) + radius * theta.lpNorm<1>();
    return result;
}

} // namespace kronest
