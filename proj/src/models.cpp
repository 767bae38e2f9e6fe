#include "kronest/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kronest/error.hpp"

namespace kronest {

namespace {

double clip(double v, double tau) noexcept { return std::clamp(v, -tau, tau); }

double huber(double r, double tau) noexcept
{
    const double a = std::abs(r);
    return a <= tau ? 0.5 * r * r : tau * a - 0.5 * tau * tau;
}

bool is_scalar_response(ModelFamily family) noexcept { return family != ModelFamily::bilinear; }

void check_index(const Dataset& data, Index i)
{
    if (i < 0 || i >= data.size()) {
        throw ParameterError("sample index " + std::to_string(i) + " out of range");
    }
}

// residual = prediction - response
Matrix bilinear_residual(const Dataset& data, Index i, const FactorPair& f)
{
    return bilinear_prediction(data, i, f) - data.responses[static_cast<std::size_t>(i)];
}

double scalar_residual(const ModelOracle& oracle, double t, double y) noexcept
{
    return oracle.family == ModelFamily::logistic ? ModelOracle::link(t) - y : t - y;
}

} // namespace

std::string_view to_string(ModelFamily family)
{
    switch (family) {
    case ModelFamily::trace:
        return "trace";
    case ModelFamily::logistic:
        return "logistic";
    case ModelFamily::bilinear:
        return "bilinear";
    }
    return "unknown";
}

ModelFamily parse_model_family(std::string_view name)
{
    if (name == "trace") {
        return ModelFamily::trace;
    }
    if (name == "logistic") {
        return ModelFamily::logistic;
    }
    if (name == "bilinear") {
        return ModelFamily::bilinear;
    }
    throw ParameterError("unknown model family '" + std::string(name) + "' (expected trace|logistic|bilinear)");
}

double ModelOracle::cumulant(double t) noexcept { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double ModelOracle::link(double t) noexcept
{
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

Dataset Dataset::from_samples(ModelFamily family, const KroneckerShape& shape, std::span<const Sample> samples)
{
    Dataset data;
    data.family = family;
    data.shape = shape;
    data.predictors.reserve(samples.size());
    if (is_scalar_response(family)) {
        data.y.resize(static_cast<Index>(samples.size()));
    } else {
        data.responses.reserve(samples.size());
    }
    Index i = 0;
    for (const Sample& s : samples) {
        if (!s.x.allFinite()) {
            throw DataError("sample " + std::to_string(i) + " has non-finite predictors");
        }
        if (is_scalar_response(family)) {
            if (s.x.rows() != shape.rows() || s.x.cols() != shape.cols()) {
                throw ShapeError("sample " + std::to_string(i) + ": predictor must be " + std::to_string(shape.rows()) +
                                 "x" + std::to_string(shape.cols()));
            }
            if (!std::isfinite(s.y)) {
                throw DataError("sample " + std::to_string(i) + " has a non-finite response");
            }
            data.predictors.push_back(permute(s.x, shape));
            data.y(i) = s.y;
        } else {
            if (s.x.rows() != shape.q1 || s.x.cols() != shape.q2 || s.response.rows() != shape.p1 ||
                s.response.cols() != shape.p2) {
                throw ShapeError("sample " + std::to_string(i) + ": bilinear predictor must be q1 x q2 and response p1 x p2");
            }
            if (!s.response.allFinite()) {
                throw DataError("sample " + std::to_string(i) + " has a non-finite response");
            }
            data.predictors.push_back(s.x);
            data.responses.push_back(s.response);
        }
        ++i;
    }
    return data;
}

Sample Dataset::sample(Index i) const
{
    check_index(*this, i);
    const auto k = static_cast<std::size_t>(i);
    Sample s;
    if (is_scalar_response(family)) {
        s.x = permute_inverse(predictors[k], shape);
        s.y = y(i);
    } else {
        s.x = predictors[k];
        s.response = responses[k];
    }
    return s;
}

Dataset Dataset::subset(std::span<const Index> indices) const
{
    Dataset out;
    out.family = family;
    out.shape = shape;
    out.predictors.reserve(indices.size());
    if (is_scalar_response(family)) {
        out.y.resize(static_cast<Index>(indices.size()));
    }
    Index j = 0;
    for (const Index i : indices) {
        check_index(*this, i);
        const auto k = static_cast<std::size_t>(i);
        out.predictors.push_back(predictors[k]);
        if (is_scalar_response(family)) {
            out.y(j) = y(i);
        } else {
            out.responses.push_back(responses[k]);
        }
        ++j;
    }
    return out;
}

Matrix Dataset::design() const
{
    const Index n = size();
    if (is_scalar_response(family)) {
        Matrix xs(shape.rows() * shape.cols(), n);
        for (Index i = 0; i < n; ++i) {
            xs.col(i) = vec(permute_inverse(predictors[static_cast<std::size_t>(i)], shape));
        }
        return xs;
    }
    Matrix xs(shape.cols(), n);
    for (Index i = 0; i < n; ++i) {
        xs.col(i) = vec(predictors[static_cast<std::size_t>(i)].transpose());
    }
    return xs;
}

Matrix Dataset::response_design() const
{
    if (family != ModelFamily::bilinear) {
        throw ParameterError("response_design is only defined for bilinear data");
    }
    Matrix ys(shape.rows(), size());
    for (Index i = 0; i < size(); ++i) {
        ys.col(i) = vec(responses[static_cast<std::size_t>(i)].transpose());
    }
    return ys;
}

double linear_predictor(const Dataset& data, Index i, const FactorPair& f)
{
    const Matrix& px = data.predictors[static_cast<std::size_t>(i)];
    return (f.left.array() * (px * f.right).array()).sum();
}

Matrix bilinear_prediction(const Dataset& data, Index i, const FactorPair& f)
{
    const KroneckerShape& s = data.shape;
    const Matrix& x = data.predictors[static_cast<std::size_t>(i)];
    Matrix pred = Matrix::Zero(s.p1, s.p2);
    for (Index k = 0; k < f.rank(); ++k) {
        const Eigen::Map<const Matrix> a(f.left.col(k).data(), s.p1, s.q1);
        const Eigen::Map<const Matrix> b(f.right.col(k).data(), s.p2, s.q2);
        pred.noalias() += a * x * b.transpose();
    }
    return pred;
}

double sample_loss(const ModelOracle& oracle, const FactorPair& f, const Dataset& data, Index i)
{
    check_index(data, i);
    switch (oracle.family) {
    case ModelFamily::trace: {
        const double r = data.y(i) - linear_predictor(data, i, f);
        return 0.5 * r * r;
    }
    case ModelFamily::logistic: {
        const double t = linear_predictor(data, i, f);
        return ModelOracle::cumulant(t) - data.y(i) * t;
    }
    case ModelFamily::bilinear:
        return 0.5 * bilinear_residual(data, i, f).squaredNorm();
    }
    return 0.0;
}

double empirical_loss(const ModelOracle& oracle, const FactorPair& f, const Dataset& data)
{
    if (data.size() == 0) {
        throw ParameterError("empirical_loss: empty dataset");
    }
    double total = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
        total += sample_loss(oracle, f, data, i);
    }
    return total / static_cast<double>(data.size());
}

double huber_sample_loss(const ModelOracle& oracle, const FactorPair& f, const Dataset& data, Index i, double tau)
{
    check_index(data, i);
    switch (oracle.family) {
    case ModelFamily::trace:
        return huber(linear_predictor(data, i, f) - data.y(i), tau);
    case ModelFamily::bilinear:
        return bilinear_residual(data, i, f).unaryExpr([tau](double r) { return huber(r, tau); }).sum();
    case ModelFamily::logistic:
        break;
    }
    throw ParameterError("Huber loss is defined for trace and bilinear models only");
}

Matrix permuted_gradient(const ModelOracle& oracle, const FactorPair& f, const Dataset& data, Index i)
{
    check_index(data, i);
    if (!f.conforms(data.shape)) {
        throw ShapeError("permuted_gradient: factors do not conform to data shape");
    }
    if (oracle.family == ModelFamily::bilinear) {
        return kron(data.predictors[static_cast<std::size_t>(i)], bilinear_residual(data, i, f));
    }
    const double c = scalar_residual(oracle, linear_predictor(data, i, f), data.y(i));
    return c * data.predictors[static_cast<std::size_t>(i)];
}

void contract_gradient(const ModelOracle& oracle, const Dataset& data, Index i, const FactorPair& f,
                       const Matrix& left_post, const Matrix& right_post, double residual_clip, Matrix& left_out,
                       Matrix& right_out, ContractionWorkspace& ws)
{
    const auto k = static_cast<std::size_t>(i);
    if (oracle.family != ModelFamily::bilinear) {
        const Matrix& px = data.predictors[k];
        ws.pr.noalias() = px * f.right;
        const double t = (f.left.array() * ws.pr.array()).sum();
        const double c = clip(scalar_residual(oracle, t, data.y(i)), residual_clip);
        left_out.noalias() = ws.pr * left_post;
        left_out *= c;
        ws.ptl.noalias() = px.transpose() * f.left;
        right_out.noalias() = ws.ptl * right_post;
        right_out *= c;
        return;
    }

    const KroneckerShape& s = data.shape;
    const Matrix& x = data.predictors[k];
    ws.residual = -data.responses[k];
    for (Index j = 0; j < f.rank(); ++j) {
        const Eigen::Map<const Matrix> a(f.left.col(j).data(), s.p1, s.q1);
        const Eigen::Map<const Matrix> b(f.right.col(j).data(), s.p2, s.q2);
        ws.tmp.noalias() = a * x;
        ws.residual.noalias() += ws.tmp * b.transpose();
    }
    if (std::isfinite(residual_clip)) {
        ws.residual = ws.residual.cwiseMax(-residual_clip).cwiseMin(residual_clip);
    }
    ws.pr.resize(s.d1(), f.rank());
    ws.ptl.resize(s.d2(), f.rank());
    for (Index j = 0; j < f.rank(); ++j) {
        const Eigen::Map<const Matrix> a(f.left.col(j).data(), s.p1, s.q1);
        const Eigen::Map<const Matrix> b(f.right.col(j).data(), s.p2, s.q2);
        Eigen::Map<Matrix> gr(ws.pr.col(j).data(), s.p1, s.q1);
        ws.tmp.noalias() = ws.residual * b;
        gr.noalias() = ws.tmp * x.transpose();
        Eigen::Map<Matrix> gl(ws.ptl.col(j).data(), s.p2, s.q2);
        ws.tmp.noalias() = ws.residual.transpose() * a;
        gl.noalias() = ws.tmp * x;
    }
    left_out.noalias() = ws.pr * left_post;
    right_out.noalias() = ws.ptl * right_post;
}

} // namespace kronest
