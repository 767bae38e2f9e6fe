#include <algorithm>
#include <cmath>

#include "kronest/error.hpp"
#include "kronest/init.hpp"

namespace kronest {

namespace {

constexpr Index kSampleTile = 32;

inline double clip(double v, double tau) noexcept { return std::min(std::max(v, -tau), tau); }

void check_tau(double tau)
{
    if (!(tau > 0.0)) {
        throw ParameterError("truncation level must be positive");
    }
}

// Upper triangle of column k, samples [begin, end) in ascending order.
inline void accumulate_column(const Matrix& xs, Matrix& acc, Index k, Index begin, Index end, double tau)
{
    double* out = acc.col(k).data();
    for (Index i = begin; i < end; ++i) {
        const double* x = xs.col(i).data();
        const double xk = x[k];
        for (Index j = 0; j <= k; ++j) {
            out[j] += clip(x[j] * xk, tau);
        }
    }
}

} // namespace

Matrix truncated_covariance(const Matrix& xs, double tau, Execution exec)
{
    check_tau(tau);
    const Index m = xs.rows();
    const Index n = xs.cols();
    if (n == 0) {
        throw ParameterError("truncated_covariance: empty sample");
    }
    Matrix acc = Matrix::Zero(m, m);
    if (exec == Execution::serial_reference) {
        for (Index i = 0; i < n; ++i) {
            for (Index k = 0; k < m; ++k) {
                accumulate_column(xs, acc, k, i, i + 1, tau);
            }
        }
    } else {
        // Each entry still sums its samples in ascending order, so the result
        // is bit-identical to the serial reference.
        for (Index begin = 0; begin < n; begin += kSampleTile) {
            const Index end = std::min(n, begin + kSampleTile);
#pragma omp parallel for schedule(dynamic, 16)
            for (Index k = 0; k < m; ++k) {
                accumulate_column(xs, acc, k, begin, end, tau);
            }
        }
    }
    const double scale = static_cast<double>(n);
    for (Index k = 0; k < m; ++k) {
        for (Index j = 0; j <= k; ++j) {
            acc(j, k) /= scale;
            acc(k, j) = acc(j, k);
        }
    }
    return acc;
}

Vector truncated_cross_covariance(const Vector& ys, const Matrix& xs, double tau)
{
    check_tau(tau);
    if (ys.size() != xs.cols()) {
        throw ShapeError("truncated_cross_covariance: " + std::to_string(ys.size()) + " responses for " +
                         std::to_string(xs.cols()) + " samples");
    }
    if (xs.cols() == 0) {
        throw ParameterError("truncated_cross_covariance: empty sample");
    }
    Vector acc = Vector::Zero(xs.rows());
    for (Index i = 0; i < xs.cols(); ++i) {
        for (Index j = 0; j < xs.rows(); ++j) {
            acc(j) += clip(ys(i) * xs(j, i), tau);
        }
    }
    return acc / static_cast<double>(xs.cols());
}

Matrix truncated_cross_covariance(const Matrix& ys, const Matrix& xs, double tau)
{
    check_tau(tau);
    if (ys.cols() != xs.cols()) {
        throw ShapeError("truncated_cross_covariance: sample counts differ");
    }
    if (xs.cols() == 0) {
        throw ParameterError("truncated_cross_covariance: empty sample");
    }
    Matrix acc = Matrix::Zero(ys.rows(), xs.rows());
    for (Index i = 0; i < xs.cols(); ++i) {
        for (Index c = 0; c < xs.rows(); ++c) {
            const double xc = xs(c, i);
            for (Index r = 0; r < ys.rows(); ++r) {
                acc(r, c) += clip(ys(r, i) * xc, tau);
            }
        }
    }
    return acc / static_cast<double>(xs.cols());
}

double sqrt_n_over_log_d(Index n, Index d, double c)
{
    if (n < 1 || d < 2) {
        throw ParameterError("sqrt_n_over_log_d needs n >= 1 and d >= 2");
    }
    return c * std::sqrt(static_cast<double>(n) / std::log(static_cast<double>(d)));
}

} // namespace kronest
