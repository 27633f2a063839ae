#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapegem/rng.hpp"
#include "shapegem/shape.hpp"

namespace shapegem {

/// One Gaussian mixture component with a dominant subspace: covariance
/// psi * diag(lambda) * psi^T + sigma2 * (I - psi * psi^T). lambda holds the
/// leading eigenvalues (descending), sigma2 the isotropic off-subspace
/// variance, with lambda.min() >= sigma2 > 0.
struct MixtureComponent {
    double pi = 1.0;
    Eigen::VectorXd mu;
    Eigen::MatrixXd psi;    // ambient_dim x d, orthonormal columns
    Eigen::VectorXd lambda; // d leading eigenvalues, descending
    double sigma2 = 1.0;

    int dim() const { return static_cast<int>(lambda.size()); }
    int ambient_dim() const { return static_cast<int>(mu.size()); }
};

struct ShapeMixture {
    std::vector<MixtureComponent> components;
    int m = 0;
    int ambient_dim = 0;

    int k() const { return static_cast<int>(components.size()); }
};

/// Per-component intrinsic dimension rule used by the M-step.
struct DimPolicy {
    enum class Kind { Fixed, VarianceFraction };
    Kind kind = Kind::VarianceFraction;
    int fixed_d = 1;
    double tau = 0.95;

    static DimPolicy fixed(int d) { return {Kind::Fixed, d, 0.0}; }
    static DimPolicy variance_fraction(double tau) {
        return {Kind::VarianceFraction, 1, tau};
    }
};

struct FitOptions {
    int k = 1;
    DimPolicy dim_policy{};
    std::uint64_t seed = 0;
    int max_iters = 100;
    double tol = 1e-8;
    int restarts = 5; // k-means++ initializations, best likelihood kept
};

struct FitResult {
    ShapeMixture mixture;
    // Dataset log-likelihood of the chosen initialization followed by the
    // value after every EM iteration; non-decreasing.
    std::vector<double> log_likelihood;
};

/// EM in the raw 3M-dimensional landmark space. Covariance spectra come from
/// the N x N Gram matrix whenever N < 3M, so the ambient covariance is never
/// materialized. Throws DegenerateComponent when a component's effective
/// weight collapses (K too large) and DimensionError on inconsistent shapes.
FitResult fit_mixture(const ShapeDataset& data, const FitOptions& opts);

double log_density_component(const MixtureComponent& c, const Eigen::VectorXd& s);

/// Posterior over components for one shape; log-sum-exp stabilized, sums to 1.
Eigen::VectorXd responsibilities(const ShapeMixture& mix, const Eigen::VectorXd& s);

/// beta = psi^T (s - mu).
Eigen::VectorXd project(const MixtureComponent& c, const Eigen::VectorXd& s);

/// mu + psi * beta, with each beta_j optionally clamped to
/// [-c0 sqrt(lambda_j), +c0 sqrt(lambda_j)] when clamp_sd is set.
Eigen::VectorXd reconstruct(const MixtureComponent& c, const Eigen::VectorXd& beta,
                            std::optional<double> clamp_sd);

Eigen::VectorXd sample_shape(const ShapeMixture& mix, Rng& rng);

double dataset_log_likelihood(const ShapeMixture& mix, const ShapeDataset& data);

/// Divides all length scales by `factor` (means by factor, variances by
/// factor^2); responsibilities are invariant under this rescaling.
ShapeMixture scale_mixture(const ShapeMixture& mix, double factor);

void save_mixture(const ShapeMixture& mix, const std::string& path);
ShapeMixture load_mixture(const std::string& path);

} // namespace shapegem
