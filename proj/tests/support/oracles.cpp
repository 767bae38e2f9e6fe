#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Eigenvalues>

#include "kronest/generate.hpp"
#include "kronest/sht.hpp"

namespace kronest::oracle {

Matrix gaussian_matrix(Rng& rng, Index rows, Index cols, double scale)
{
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            m(i, j) = scale * rng.normal();
        }
    }
    return m;
}

Index uniform_index(Rng& rng, Index lo, Index hi)
{
    const auto span = static_cast<double>(hi - lo + 1);
    return std::min(hi, lo + static_cast<Index>(std::floor(rng.uniform() * span)));
}

Matrix integer_matrix(Rng& rng, Index rows, Index cols, int lo, int hi)
{
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            m(i, j) = static_cast<double>(uniform_index(rng, lo, hi));
        }
    }
    return m;
}

Matrix random_gl(Rng& rng, Index k)
{
    for (;;) {
        Matrix q = gaussian_matrix(rng, k, k);
        if (std::abs(q.determinant()) >= 1e-3) {
            return q;
        }
    }
}

Matrix brute_kron(const Matrix& a, const Matrix& b)
{
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < out.rows(); ++i) {
        for (Index j = 0; j < out.cols(); ++j) {
            out(i, j) = a(i / b.rows(), j / b.cols()) * b(i % b.rows(), j % b.cols());
        }
    }
    return out;
}

KroneckerShape random_shape(Rng& rng, Index max_dim, Index rank)
{
    KroneckerShape s;
    s.p1 = uniform_index(rng, 1, max_dim);
    s.q1 = uniform_index(rng, 1, max_dim);
    s.p2 = uniform_index(rng, 1, max_dim);
    s.q2 = uniform_index(rng, 1, max_dim);
    s.rank = std::min({rank, s.d1(), s.d2()});
    return s;
}

Dataset random_dataset(ModelFamily family, const KroneckerShape& shape, Index n, Rng& rng)
{
    std::vector<Sample> samples(static_cast<std::size_t>(n));
    for (Sample& s : samples) {
        if (family == ModelFamily::bilinear) {
            s.x = gaussian_matrix(rng, shape.q1, shape.q2);
            s.response = gaussian_matrix(rng, shape.p1, shape.p2);
        } else {
            s.x = gaussian_matrix(rng, shape.rows(), shape.cols());
            s.y = family == ModelFamily::logistic ? (rng.uniform() < 0.5 ? 1.0 : 0.0) : rng.normal();
        }
    }
    return Dataset::from_samples(family, shape, samples);
}

namespace {

double rel(const Matrix& approx, const Matrix& exact)
{
    return (approx - exact).norm() / std::max(exact.norm(), 1e-12);
}

Matrix inv_sqrt_eig(const Matrix& gram)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

template <class Loss>
Matrix fd_matrix(const Matrix& at, double step, Loss&& loss)
{
    Matrix g(at.rows(), at.cols());
    Matrix probe = at;
    for (Index j = 0; j < at.cols(); ++j) {
        for (Index i = 0; i < at.rows(); ++i) {
            probe(i, j) = at(i, j) + step;
            const double up = loss(probe);
            probe(i, j) = at(i, j) - step;
            const double down = loss(probe);
            probe(i, j) = at(i, j);
            g(i, j) = (up - down) / (2.0 * step);
        }
    }
    return g;
}

// Residuals <X, Theta> - y (or each entry of the bilinear prediction minus Y).
std::vector<double> residuals(const Dataset& data, const FactorPair& f)
{
    std::vector<double> r;
    for (Index i = 0; i < data.size(); ++i) {
        if (data.family == ModelFamily::bilinear) {
            const Matrix d = bilinear_prediction(data, i, f) - data.responses[static_cast<std::size_t>(i)];
            r.insert(r.end(), d.data(), d.data() + d.size());
        } else {
            r.push_back(linear_predictor(data, i, f) - data.y(i));
        }
    }
    return r;
}

} // namespace

double sample_gradient_fd_error(ModelFamily family, std::uint64_t seed, double step)
{
    Rng rng(seed);
    const KroneckerShape shape = random_shape(rng, 3, 1);
    const Dataset data = random_dataset(family, shape, 1, rng);
    const ModelOracle oracle = data.oracle();
    // Full-rank parameterization L = P(Theta), R = I reaches every P(Theta).
    const double scale = family == ModelFamily::logistic ? 0.3 : 1.0;
    FactorPair f{gaussian_matrix(rng, shape.d1(), shape.d2(), scale), Matrix::Identity(shape.d2(), shape.d2())};
    const Matrix g = permuted_gradient(oracle, f, data, 0);
    const Matrix right = f.right;
    const Matrix fd = fd_matrix(f.left, step, [&](const Matrix& m) {
        return sample_loss(oracle, FactorPair{m, right}, data, 0);
    });
    return rel(g, fd);
}

double huber_gradient_fd_error(std::uint64_t seed, double step)
{
    Rng rng(seed);
    const ModelFamily family = seed % 2 == 0 ? ModelFamily::trace : ModelFamily::bilinear;
    KroneckerShape shape{uniform_index(rng, 1, 3), uniform_index(rng, 2, 3), uniform_index(rng, 1, 3),
                         uniform_index(rng, 2, 3), 1};
    const Dataset data = random_dataset(family, shape, 20, rng);
    const ModelOracle oracle = data.oracle();
    const FactorPair f{gaussian_matrix(rng, shape.d1(), 1), gaussian_matrix(rng, shape.d2(), 1)};

    std::vector<double> r = residuals(data, f);
    for (double& v : r) {
        v = std::abs(v);
    }
    std::vector<double> sorted = r;
    std::sort(sorted.begin(), sorted.end());
    double tau = sorted[sorted.size() / 2];
    // Move tau off every residual so the clipped loss is smooth near f.
    for (;;) {
        const bool near_kink = std::any_of(r.begin(), r.end(), [&](double v) { return std::abs(v - tau) <= 1e-3; });
        if (!near_kink) {
            break;
        }
        tau *= 1.0137;
    }

    ContractionSpec spec;
    spec.left_post = Matrix::Identity(1, 1);
    spec.right_post = Matrix::Identity(1, 1);
    spec.residual_clip = tau;
    const GradientPair g = average_gradient_terms(oracle, data, f, spec, Execution::serial_reference);

    auto mean_huber = [&](const FactorPair& p) {
        double s = 0.0;
        for (Index i = 0; i < data.size(); ++i) {
            s += huber_sample_loss(oracle, p, data, i, tau);
        }
        return s / static_cast<double>(data.size());
    };
    const Matrix fd_l = fd_matrix(f.left, step, [&](const Matrix& m) { return mean_huber({m, f.right}); });
    const Matrix fd_r = fd_matrix(f.right, step, [&](const Matrix& m) { return mean_huber({f.left, m}); });
    return std::max(rel(g.left, fd_l), rel(g.right, fd_r));
}

double descaled_gradient_fd_error(ModelFamily family, std::uint64_t seed, double step)
{
    Rng rng(seed);
    const KroneckerShape shape{3, 3, 2, 2, seed % 2 == 0 ? 1 : 2};
    const Dataset data = random_dataset(family, shape, 20, rng);
    const ModelOracle oracle = data.oracle();
    const double scale = family == ModelFamily::logistic ? 0.4 : 1.0;
    const FactorPair f{gaussian_matrix(rng, shape.d1(), shape.rank, scale),
                       gaussian_matrix(rng, shape.d2(), shape.rank, scale)};
    const GradientPair g = robust_gradient_pair(oracle, f, data, Truncation::none(), Execution::serial_reference);
    const Matrix fd_l = fd_matrix(f.left, step, [&](const Matrix& m) { return empirical_loss(oracle, {m, f.right}, data); });
    const Matrix fd_r = fd_matrix(f.right, step, [&](const Matrix& m) { return empirical_loss(oracle, {f.left, m}, data); });
    const Matrix want_l = fd_l * inv_sqrt_eig(f.right.transpose() * f.right);
    const Matrix want_r = fd_r * inv_sqrt_eig(f.left.transpose() * f.left);
    return std::max(rel(g.left, want_l), rel(g.right, want_r));
}

LpSolution dantzig_vertex_lp(const Matrix& sigma, const Vector& b, double radius)
{
    const Index m = sigma.rows();
    const Index nv = 2 * m;
    // Rows of A w <= c with w = (u, v).
    Matrix a = Matrix::Zero(2 * m + nv, nv);
    Vector c = Vector::Zero(2 * m + nv);
    a.block(0, 0, m, m) = sigma;
    a.block(0, m, m, m) = -sigma;
    c.head(m) = b.array() + radius;
    a.block(m, 0, m, m) = -sigma;
    a.block(m, m, m, m) = sigma;
    c.segment(m, m) = radius - b.array();
    a.block(2 * m, 0, nv, nv) = -Matrix::Identity(nv, nv);

    const Index rows = a.rows();
    std::vector<int> pick(static_cast<std::size_t>(rows), 0);
    std::fill(pick.end() - nv, pick.end(), 1);
    LpSolution best;
    best.objective = std::numeric_limits<double>::infinity();
    do {
        Matrix sub(nv, nv);
        Vector rhs(nv);
        Index k = 0;
        for (Index r = 0; r < rows; ++r) {
            if (pick[static_cast<std::size_t>(r)] != 0) {
                sub.row(k) = a.row(r);
                rhs(k) = c(r);
                ++k;
            }
        }
        Eigen::FullPivLU<Matrix> lu(sub);
        if (!lu.isInvertible()) {
            continue;
        }
        const Vector w = lu.solve(rhs);
        const double slack = ((a * w) - c).maxCoeff();
        if (slack > 1e-9 * (1.0 + c.cwiseAbs().maxCoeff())) {
            continue;
        }
        const double obj = w.sum();
        if (obj < best.objective) {
            best.feasible = true;
            best.objective = obj;
            best.theta = w.head(m) - w.tail(m);
        }
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

DantzigInstance random_dantzig_instance(std::uint64_t seed, Index dim)
{
    Rng rng(seed);
    const Matrix x = gaussian_matrix(rng, dim, 2 * dim);
    DantzigInstance inst;
    inst.sigma = x * x.transpose() / static_cast<double>(2 * dim);
    inst.b = gaussian_matrix(rng, dim, 1);
    inst.radius = (0.05 + 0.45 * rng.uniform()) * inst.b.cwiseAbs().maxCoeff();
    return inst;
}

double lasso_grid_minimum(const Matrix& xs, const Vector& ys, double tau_x, double radius, double lo, double hi,
                          double step)
{
    const Matrix xt = xs.cwiseMax(-tau_x).cwiseMin(tau_x);
    const auto points = static_cast<Index>(std::llround((hi - lo) / step)) + 1;
    double best = std::numeric_limits<double>::infinity();
    for (Index a = 0; a < points; ++a) {
        const double t0 = lo + static_cast<double>(a) * step;
        for (Index b = 0; b < points; ++b) {
            const double t1 = lo + static_cast<double>(b) * step;
            double s = 0.0;
            for (Index i = 0; i < xt.cols(); ++i) {
                const double t = t0 * xt(0, i) + t1 * xt(1, i);
                const double g = t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
                s += g - ys(i) * t;
            }
            best = std::min(best, s / static_cast<double>(xt.cols()) + radius * (std::abs(t0) + std::abs(t1)));
        }
    }
    return best;
}

LassoInstance random_lasso_instance(std::uint64_t seed, Index n)
{
    Rng rng(seed);
    LassoInstance inst;
    inst.xs = gaussian_matrix(rng, 2, n);
    inst.ys.resize(n);
    const double a = 2.0 * rng.uniform() - 1.0;
    const double b = 2.0 * rng.uniform() - 1.0;
    for (Index i = 0; i < n; ++i) {
        const double t = a * inst.xs(0, i) + b * inst.xs(1, i);
        inst.ys(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-t)) ? 1.0 : 0.0;
    }
    inst.radius = 0.05 * rng.uniform();
    return inst;
}

double factor_distance_grid(const FactorPair& f, const GroundTruth& target, int points, double log_lo, double log_hi)
{
    const double s = target.sigma(0);
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < points; ++k) {
        const double t = log_lo + (log_hi - log_lo) * k / (points - 1);
        for (double sign : {1.0, -1.0}) {
            const double q = sign * std::pow(10.0, t);
            const double v = s * ((f.left * q - target.factors.left).squaredNorm() +
                                  (f.right / q - target.factors.right).squaredNorm());
            best = std::min(best, std::sqrt(v));
        }
    }
    return best;
}

int sht_support_mismatches(std::uint64_t seed, int trials, Index rank)
{
    Rng rng(seed);
    auto zero_rows = [](const Matrix& m) {
        std::set<Index> z;
        for (Index i = 0; i < m.rows(); ++i) {
            if ((m.row(i).array() == 0.0).all()) {
                z.insert(i);
            }
        }
        return z;
    };
    int mismatches = 0;
    for (int t = 0; t < trials; ++t) {
        const Index d1 = uniform_index(rng, rank + 2, 12);
        const Index d2 = uniform_index(rng, rank + 2, 12);
        const FactorPair f{gaussian_matrix(rng, d1, rank), gaussian_matrix(rng, d2, rank)};
        const SparsityLevels levels{uniform_index(rng, 1, d1 - 1), uniform_index(rng, 1, d2 - 1)};
        const Matrix q = random_gl(rng, rank);
        const FactorPair g{f.left * q, f.right * q.inverse().transpose()};
        const FactorPair a = scaled_hard_threshold(f, levels);
        const FactorPair b = scaled_hard_threshold(g, levels);
        if (zero_rows(a.left) != zero_rows(b.left) || zero_rows(a.right) != zero_rows(b.right)) {
            ++mismatches;
        }
    }
    return mismatches;
}

ScaleRobustness scale_robustness(std::uint64_t seed, double c, int iterations)
{
    Rng rng(seed);
    GeneratorConfig gen;
    gen.shape = {6, 6, 6, 6, 1};
    gen.truth = {TruthRecipe::ones, 5};
    gen.predictor = TailSpec::student_t(2.5);
    gen.noise = TailSpec::student_t(1.5);
    const GroundTruth truth = make_truth(gen, rng);
    const Index n = 500;
    const Dataset data = generate_dataset(gen, truth, n, rng);
    const FactorPair f0{truth.factors.left + gaussian_matrix(rng, 36, 1, 0.3),
                        truth.factors.right + gaussian_matrix(rng, 36, 1, 0.3)};
    const FactorPair fc{c * f0.left, f0.right / c};

    auto diff = [&](Method method) {
        OptimizerConfig cfg;
        cfg.method = method;
        cfg.iterations = iterations;
        cfg.trunc = Truncation::at(sqrt_n_over_log_d(n, 36));
        cfg.levels = SparsityLevels{7, 7};
        const FitResult a = fit(f0, data, cfg);
        const FitResult b = fit(fc, data, cfg);
        if (!a.ok() || !b.ok()) {
            return std::numeric_limits<double>::infinity();
        }
        return (b.theta - a.theta).norm() / a.theta.norm();
    };
    return {diff(Method::srgd), diff(Method::rgd)};
}

} // namespace kronest::oracle
