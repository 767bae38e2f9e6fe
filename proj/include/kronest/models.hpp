#pragma once

#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "kronest/kron.hpp"

namespace kronest {

enum class ModelFamily { trace, logistic, bilinear };

std::string_view to_string(ModelFamily family);
ModelFamily parse_model_family(std::string_view name);

/// Loss and gradient oracle for one model family.
///
/// trace:    y = <X, Theta> + e, loss 1/2 (y - <X, Theta>)^2
/// logistic: P(y = 1) = g'(<X, Theta>), loss g(t) - y t with g(t) = log(1 + e^t)
/// bilinear: Y = sum_k A_k X B_k^T + E, loss 1/2 ||vec(Y^T) - Theta vec(X^T)||^2
struct ModelOracle {
    ModelFamily family = ModelFamily::trace;

    /// log(1 + e^t), overflow safe.
    static double cumulant(double t) noexcept;
    /// Logistic mean function 1 / (1 + e^-t).
    static double link(double t) noexcept;
};

/// One observation in its natural (unpermuted) layout.
struct Sample {
    Matrix x;        // trace/logistic: p x q; bilinear: q1 x q2
    double y = 0.0;  // trace/logistic
    Matrix response; // bilinear: p1 x p2
};

/// n observations of one model family. Scalar-response predictors are stored
/// already rearranged (P(X_i), d1 x d2) because every gradient evaluation works
/// in the permuted domain.
struct Dataset {
    ModelFamily family = ModelFamily::trace;
    KroneckerShape shape;
    std::vector<Matrix> predictors; // trace/logistic: P(X_i); bilinear: X_i (q1 x q2)
    Vector y;                       // trace/logistic
    std::vector<Matrix> responses;  // bilinear: Y_i (p1 x p2)

    Index size() const noexcept { return static_cast<Index>(predictors.size()); }
    ModelOracle oracle() const noexcept { return {family}; }

    static Dataset from_samples(ModelFamily family, const KroneckerShape& shape, std::span<const Sample> samples);
    Sample sample(Index i) const;
    Dataset subset(std::span<const Index> indices) const;

    /// Columns are the vectorized predictors used by the convex initializers:
    /// vec(X_i) (length p*q) for scalar responses, vec(X_i^T) (length q1*q2) for bilinear.
    Matrix design() const;
    /// Bilinear responses as columns vec(Y_i^T) (length p1*p2).
    Matrix response_design() const;
};

/// <P(X_i), L R^T> for scalar-response models.
double linear_predictor(const Dataset& data, Index i, const FactorPair& f);

/// Bilinear prediction sum_k A_k X_i B_k^T.
Matrix bilinear_prediction(const Dataset& data, Index i, const FactorPair& f);

double sample_loss(const ModelOracle& oracle, const FactorPair& f, const Dataset& data, Index i);
double empirical_loss(const ModelOracle& oracle, const FactorPair& f, const Dataset& data);

/// Huber loss rho_tau applied to the residual (trace) or to each residual entry (bilinear).
double huber_sample_loss(const ModelOracle& oracle, const FactorPair& f, const Dataset& data, Index i, double tau);

/// G_i = P(grad_Theta loss(P^-1(L R^T); z_i)), a d1 x d2 matrix.
Matrix permuted_gradient(const ModelOracle& oracle, const FactorPair& f, const Dataset& data, Index i);

/// Scratch buffers reused across samples by contract_gradient.
struct ContractionWorkspace {
    Matrix pr;       // d1 x K
    Matrix ptl;      // d2 x K
    Matrix residual; // bilinear p1 x p2
    Matrix tmp;
};

/// Computes (G_i R) * left_post into left_out and (G_i^T L) * right_post into
/// right_out without forming G_i. Residuals are first passed through
/// sgn(r) min(|r|, residual_clip), which is the Huber influence function.
void contract_gradient(const ModelOracle& oracle, const Dataset& data, Index i, const FactorPair& f,
                       const Matrix& left_post, const Matrix& right_post, double residual_clip, Matrix& left_out,
                       Matrix& right_out, ContractionWorkspace& ws);

} // namespace kronest
