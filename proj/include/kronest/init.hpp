#pragma once

#include <string_view>
#include <vector>

#include "kronest/models.hpp"
#include "kronest/robust_grad.hpp"
#include "kronest/sht.hpp"

namespace kronest {

// ---------------------------------------------------------------------------
// Truncated second-moment estimators. Samples are the columns of `xs`.

/// n^-1 sum_i T(x_i x_i^T, tau).
Matrix truncated_covariance(const Matrix& xs, double tau, Execution exec = Execution::parallel);
/// n^-1 sum_i T(y_i x_i, tau).
Vector truncated_cross_covariance(const Vector& ys, const Matrix& xs, double tau);
/// n^-1 sum_i T(y_i x_i^T, tau); columns of `ys` are the vector responses.
Matrix truncated_cross_covariance(const Matrix& ys, const Matrix& xs, double tau);

/// c * sqrt(n / log d), the scale used for every truncation default.
double sqrt_n_over_log_d(Index n, Index d, double c = 1.0);

// ---------------------------------------------------------------------------
// Convex solvers.

enum class SolverStatus { converged, max_iterations };

std::string_view to_string(SolverStatus status);

struct DantzigOptions {
    double tolerance = 1e-8;     // primal and dual residuals
    double gap_tolerance = 1e-6; // ||theta||_1 minus the certified lower bound
    int max_iterations = 50000;
    int power_iterations = 50;
    double rho_scale = 1.0;
};

struct DantzigResult {
    Vector theta;
    SolverStatus status = SolverStatus::max_iterations;
    int iterations = 0;
    double objective = 0.0;   // ||theta||_1
    double lower_bound = 0.0; // certified by a dual feasible point
    double violation = 0.0;   // max(0, ||Sigma theta - sigma||_inf - radius)
};

/// min ||theta||_1 s.t. ||sigma theta - target||_inf <= radius, by linearized
/// ADMM on the split z = sigma theta - target. `sigma` must be symmetric.
/// Throws InfeasibleProblem when a Farkas certificate shows the constraint set is empty.
DantzigResult dantzig_select(const Matrix& sigma, const Vector& target, double radius, const DantzigOptions& options = {});

/// Row-decoupled matrix form: min ||Theta||_1 s.t. ||target - Theta sigma||_inf <= radius.
/// Each row is an independent Dantzig problem; rows are solved in parallel.
Matrix dantzig_select_rows(const Matrix& sigma, const Matrix& target, double radius, const DantzigOptions& options,
                           std::vector<DantzigResult>* diagnostics = nullptr);

struct LassoOptions {
    double tolerance = 1e-6;
    int max_iterations = 20000;
};

struct LassoResult {
    Vector theta;
    SolverStatus status = SolverStatus::max_iterations;
    int iterations = 0;
    double residual = 0.0; // ||theta - S_R(theta - grad f(theta))||_inf
    double objective = 0.0;
};

/// n^-1 sum_i [g(<x_i, theta>) - y_i <x_i, theta>] + radius ||theta||_1 with logistic g.
double logistic_lasso_objective(const Matrix& xs, const Vector& ys, const Vector& theta, double radius);

/// Robust logistic Lasso on truncated predictors T(x_i, tau_x), solved by FISTA
/// with backtracking and adaptive restart.
LassoResult robust_lasso(const Matrix& xs, const Vector& ys, double tau_x, double radius,
                         const LassoOptions& options = {});

// ---------------------------------------------------------------------------
// Initial factors.

/// Permute the (p x q) estimate, take its rank-K SVD factors and apply scaled
/// hard thresholding. Throws DegenerateInit if the estimate is zero or has
/// fewer than K nonzero singular values.
FactorPair init_factors(const Matrix& theta_hat, const KroneckerShape& shape, const SparsityLevels& levels);
/// Column-major vector form of the above.
FactorPair init_factors(const Vector& theta_hat, const KroneckerShape& shape, const SparsityLevels& levels);

struct InitConfig {
    double tau_x = 1.0;
    double tau_yx = 1.0;
    double radius = 0.0;
    DantzigOptions dantzig;
    LassoOptions lasso;

    void validate() const;
};

struct InitResult {
    FactorPair factors;
    Matrix theta_hat; // p x q
    SolverStatus status = SolverStatus::converged;
    int iterations = 0;
};

/// Stage one of the two-stage pipeline: robust Dantzig selector (trace,
/// bilinear) or robust Lasso (logistic), followed by init_factors.
InitResult robust_initialize(const Dataset& data, const InitConfig& config, const SparsityLevels& levels);

} // namespace kronest
