#include <cmath>

#include "kronest/error.hpp"
#include "kronest/init.hpp"

namespace kronest {

FactorPair init_factors(const Matrix& theta_hat, const KroneckerShape& shape, const SparsityLevels& levels)
{
    shape.validate();
    levels.validate(shape);
    if (theta_hat.rows() != shape.rows() || theta_hat.cols() != shape.cols()) {
        throw ShapeError("init_factors: estimate is " + std::to_string(theta_hat.rows()) + " x " +
                         std::to_string(theta_hat.cols()) + ", expected " + std::to_string(shape.rows()) + " x " +
                         std::to_string(shape.cols()));
    }
    if (!theta_hat.allFinite()) {
        throw DegenerateInit("init_factors: estimate has non-finite entries");
    }
    if (theta_hat.cwiseAbs().maxCoeff() == 0.0) {
        throw DegenerateInit("init_factors: estimate is identically zero");
    }
    const Matrix p = permute(theta_hat, shape);
    Eigen::JacobiSVD<Matrix> svd(p);
    const Vector& s = svd.singularValues();
    const double floor = 1e-12 * s(0);
    if (s(shape.rank - 1) <= floor) {
        throw DegenerateInit("init_factors: estimate has rank below " + std::to_string(shape.rank));
    }
    FactorPair f = factorize(theta_hat, shape, shape.rank);
    if (levels.disabled(shape)) {
        return f;
    }
    FactorPair out = scaled_hard_threshold(f, levels);
    if (out.left.cwiseAbs().maxCoeff() == 0.0 || out.right.cwiseAbs().maxCoeff() == 0.0) {
        throw DegenerateInit("init_factors: thresholding removed every row");
    }
    return out;
}

FactorPair init_factors(const Vector& theta_hat, const KroneckerShape& shape, const SparsityLevels& levels)
{
    if (theta_hat.size() != shape.rows() * shape.cols()) {
        throw ShapeError("init_factors: estimate has length " + std::to_string(theta_hat.size()));
    }
    return init_factors(unvec(theta_hat, shape.rows(), shape.cols()), shape, levels);
}

void InitConfig::validate() const
{
    if (!(tau_x > 0.0) || !(tau_yx > 0.0)) {
        throw ParameterError("init: truncation levels must be positive");
    }
    if (!(radius >= 0.0) || !std::isfinite(radius)) {
        throw ParameterError("init: radius must be finite and non-negative");
    }
}

InitResult robust_initialize(const Dataset& data, const InitConfig& config, const SparsityLevels& levels)
{
    config.validate();
    const KroneckerShape& shape = data.shape;
    InitResult result;
    const Matrix xs = data.design();
    switch (data.family) {
    case ModelFamily::trace: {
        const Matrix sx = truncated_covariance(xs, config.tau_x);
        const Vector syx = truncated_cross_covariance(data.y, xs, config.tau_yx);
        const DantzigResult ds = dantzig_select(sx, syx, config.radius, config.dantzig);
        result.theta_hat = unvec(ds.theta, shape.rows(), shape.cols());
        result.status = ds.status;
        result.iterations = ds.iterations;
        break;
    }
    case ModelFamily::logistic: {
        const LassoResult ls = robust_lasso(xs, data.y, config.tau_x, config.radius, config.lasso);
        result.theta_hat = unvec(ls.theta, shape.rows(), shape.cols());
        result.status = ls.status;
        result.iterations = ls.iterations;
        break;
    }
    case ModelFamily::bilinear: {
        const Matrix sx = truncated_covariance(xs, config.tau_x);
        const Matrix syx = truncated_cross_covariance(data.response_design(), xs, config.tau_yx);
        std::vector<DantzigResult> diag;
        // Rows index vec(Y^T), columns vec(X^T); this is Theta in the natural layout.
        result.theta_hat = dantzig_select_rows(sx, syx, config.radius, config.dantzig, &diag);
        result.status = SolverStatus::converged;
        for (const auto& d : diag) {
            result.iterations = std::max(result.iterations, d.iterations);
            if (d.status != SolverStatus::converged) {
                result.status = d.status;
            }
        }
        break;
    }
    }
    result.factors = init_factors(result.theta_hat, shape, levels);
    return result;
}

} // namespace kronest
