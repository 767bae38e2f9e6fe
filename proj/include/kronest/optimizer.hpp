#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kronest/robust_grad.hpp"
#include "kronest/sht.hpp"

namespace kronest {

/// srgd:     de-scaled truncated gradients, scaled step
/// scgd:     srgd with tau = infinity
/// rgd:      raw gradients G_i R truncated at tau, plain step
/// huber_gd: residuals clipped at tau inside the raw gradient, plain step
enum class Method { srgd, scgd, rgd, huber_gd };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct OptimizerConfig {
    double eta = 0.01;
    Truncation trunc;
    int iterations = 100;
    /// Leave unset to skip thresholding.
    std::optional<SparsityLevels> levels;
    Method method = Method::srgd;
    /// Record a trajectory point every this many iterations (0: endpoints only).
    int trajectory_every = 0;
    /// Stop early once ||Theta_{j+1} - Theta_j||_F <= tolerance * ||Theta_j||_F. 0 disables.
    double tolerance = 0.0;
    /// Fail once the loss at a recorded point exceeds this multiple of the initial loss.
    double divergence_factor = 1e6;
    Execution execution = Execution::parallel;

    void validate() const;
};

struct TrajectoryPoint {
    int iteration = 0;
    std::optional<double> rel_error;
    double loss = 0.0;
};

enum class FitStatus { converged, budget_exhausted, failed };

std::string_view to_string(FitStatus status);

struct FitResult {
    FactorPair factors;
    Matrix theta;
    std::vector<TrajectoryPoint> trajectory;
    FitStatus status = FitStatus::budget_exhausted;
    std::string reason; // set when failed
    int iterations = 0;

    bool ok() const noexcept { return status != FitStatus::failed; }
};

/// One simultaneous update of (L, R): both gradients are evaluated at the
/// incoming pair. Throws NearSingularGram when a Gram matrix collapses.
FactorPair srgd_step(const FactorPair& f, const Dataset& batch, const OptimizerConfig& config);

/// J steps of the configured method, each followed by scaled hard thresholding
/// when levels are set. Never throws for numerical failure: NearSingularGram,
/// non-finite iterates and divergence produce status `failed`.
FitResult fit(const FactorPair& f0, const Dataset& data, const OptimizerConfig& config,
              const Matrix* truth = nullptr);

struct CvRow {
    double tau = 0.0;
    double mean_loss = 0.0; // mean over folds of the held-out mean sample loss
    bool failed = false;
    std::string reason;
};

struct CvResult {
    double tau = 0.0;
    std::vector<CvRow> table;
};

/// K-fold cross-validation of tau over contiguous sample blocks. Each fold is
/// fitted from f0 with config.trunc replaced by the grid value. Ties go to the
/// larger tau; a tau with any failed fold is disqualified. Throws Error when
/// every tau is disqualified.
CvResult cross_validate_tau(const std::vector<double>& grid, int folds, const FactorPair& f0, const Dataset& data,
                            const OptimizerConfig& config);

/// `points` log-spaced values from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int points);

} // namespace kronest
