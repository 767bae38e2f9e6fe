#include <cmath>
#include <limits>
#include <random>

#include "kronest/error.hpp"
#include "kronest/kron.hpp"

namespace kronest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance for a fixed alignment Q, with its gradient in Q.
struct AlignmentObjective {
    const Matrix& left;
    const Matrix& right;
    const Matrix& left_star;
    const Matrix& right_star;
    const Vector& sigma;

    double value(const Matrix& q, Matrix* grad) const
    {
        Eigen::PartialPivLU<Matrix> lu(q);
        const double det = lu.determinant();
        if (!std::isfinite(det) || std::abs(det) < 1e-12) {
            return kInf;
        }
        const Matrix q_inv = lu.inverse();
        const Matrix q_inv_t = q_inv.transpose();
        const Matrix dl = left * q - left_star;
        const Matrix dr = right * q_inv_t - right_star;
        const double v = (dl.colwise().squaredNorm().transpose().array() * sigma.array()).sum() +
                         (dr.colwise().squaredNorm().transpose().array() * sigma.array()).sum();
        if (grad != nullptr) {
            const Matrix g_left = 2.0 * left.transpose() * dl * sigma.asDiagonal();
            const Matrix g_m = 2.0 * right.transpose() * dr * sigma.asDiagonal();
            *grad = g_left - q_inv_t * g_m.transpose() * q_inv_t;
        }
        return v;
    }
};

// BFGS with Armijo backtracking over the K*K entries of Q.
double minimize_alignment(const AlignmentObjective& obj, Matrix q)
{
    const Index k = q.rows();
    const Index dim = k * k;
    Matrix grad_m;
    double f = obj.value(q, &grad_m);
    if (!std::isfinite(f)) {
        return kInf;
    }
    Vector x = vec(q);
    Vector g = vec(grad_m);
    Matrix h_inv = Matrix::Identity(dim, dim);
    for (int iter = 0; iter < 1000; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, f)) {
            break;
        }
        Vector dir = -h_inv * g;
        if (dir.dot(g) >= 0.0) {
            h_inv.setIdentity();
            dir = -g;
        }
        double step = 1.0;
        double f_new = kInf;
        Vector x_new;
        Matrix g_new_m;
        for (int bt = 0; bt < 60; ++bt) {
            x_new = x + step * dir;
            f_new = obj.value(unvec(x_new, k, k), &g_new_m);
            if (f_new <= f + 1e-4 * step * g.dot(dir)) {
                break;
            }
            step *= 0.5;
        }
        if (!(f_new <= f)) {
            break;
        }
        const Vector g_new = vec(g_new_m);
        const Vector s = x_new - x;
        const Vector y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            const double rho = 1.0 / sy;
            const Matrix eye = Matrix::Identity(dim, dim);
            h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        const bool stalled = (f - f_new) <= 1e-16 * std::max(1.0, f);
        x = x_new;
        g = g_new;
        f = f_new;
        if (stalled) {
            break;
        }
    }
    return f;
}

// Scalar case: minimize over q on each sign branch in u = log|q| in [-12, 12].
double minimize_scalar(const AlignmentObjective& obj)
{
    Matrix q(1, 1);
    auto h = [&](double sign, double u) {
        q(0, 0) = sign * std::exp(u);
        return obj.value(q, nullptr);
    };
    constexpr double lo = -12.0;
    constexpr double hi = 12.0;
    constexpr int grid = 480;
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    double best = kInf;
    for (const double sign : {1.0, -1.0}) {
        int best_i = 0;
        double best_grid = kInf;
        for (int i = 0; i <= grid; ++i) {
            const double v = h(sign, lo + (hi - lo) * i / grid);
            if (v < best_grid) {
                best_grid = v;
                best_i = i;
            }
        }
        double a = lo + (hi - lo) * std::max(best_i - 1, 0) / grid;
        double b = lo + (hi - lo) * std::min(best_i + 1, grid) / grid;
        double c = b - golden * (b - a);
        double d = a + golden * (b - a);
        double fc = h(sign, c);
        double fd = h(sign, d);
        while (b - a > 1e-10) {
            if (fc < fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - golden * (b - a);
                fc = h(sign, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + golden * (b - a);
                fd = h(sign, d);
            }
        }
        best = std::min({best, best_grid, fc, fd});
    }
    return best;
}

} // namespace

FactorDistance factor_distance(const FactorPair& f, const GroundTruth& target, std::uint64_t seed)
{
    const FactorPair& star = target.factors;
    if (f.left.rows() != star.left.rows() || f.right.rows() != star.right.rows() || f.rank() != star.rank()) {
        throw ShapeError("factor_distance: factor shapes differ from target");
    }
    if (target.sigma.size() != f.rank() || (target.sigma.array() <= 0.0).any()) {
        throw ParameterError("factor_distance: target singular values must be positive");
    }
    const AlignmentObjective obj{f.left, f.right, star.left, star.right, target.sigma};
    const Index k = f.rank();
    if (k == 1) {
        return {std::sqrt(std::max(0.0, minimize_scalar(obj))), false};
    }

    double best = minimize_alignment(obj, Matrix::Identity(k, k));
    std::mt19937_64 engine(seed);
    std::normal_distribution<double> normal;
    for (int restart = 0; restart < 8; ++restart) {
        Matrix q(k, k);
        do {
            for (Index i = 0; i < q.size(); ++i) {
                q.data()[i] = normal(engine);
            }
        } while (std::abs(q.determinant()) < 1e-3);
        best = std::min(best, minimize_alignment(obj, q));
    }
    return {std::sqrt(std::max(0.0, best)), true};
}

} // namespace kronest
