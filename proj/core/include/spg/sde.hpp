#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

#include "spg/path_set.hpp"

namespace spg {

/// One-dimensional mean-reverting Gaussian process
/// dX = rate * (level - X) dt + vol dW.
struct OuSpec {
    double rate = 1.0;   // mean-reversion speed, > 0
    double level = 0.0;  // long-run mean
    double vol = 1.0;    // > 0
    double x0 = 0.0;

    void validate() const;

    /// Exact transition moments of X(t + dt) given X(t) = x.
    double transition_mean(double x, double dt) const;
    double transition_var(double dt) const;
    /// Marginal moments at horizon t from the fixed start x0.
    double marginal_mean(double t) const;
    double marginal_var(double t) const;
};

/// Multivariate geometric Brownian motion with correlated drivers.
struct GbmSpec {
    Eigen::VectorXd drift;  // per-coordinate mu_j
    Eigen::VectorXd vol;    // per-coordinate sigma_j, all > 0
    Eigen::MatrixXd corr;   // driver correlation, symmetric, unit diagonal, PSD
    Eigen::VectorXd x0;     // all > 0

    int dim() const { return static_cast<int>(drift.size()); }
    void validate() const;

    double marginal_mean(int j, double t) const;  // x0_j * exp(mu_j t)
};

/// Arbitrary SDE dX = drift(t, X) dt + diffusion(t, X) dW for the
/// Euler-Maruyama fallback; diffusion maps to R^{dim x brownian_dim}.
struct GenericSdeSpec {
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> drift_fn;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> diff_fn;
    Eigen::VectorXd x0;
    int brownian_dim = 1;

    int dim() const { return static_cast<int>(x0.size()); }
    void validate() const;
};

/// Samples paths with the exact Gaussian transition kernel, so the training
/// target carries no discretization bias. Path i is driven by RNG substream
/// (seed, i) and is therefore independent of n_paths.
PathSet simulate_ou(const OuSpec& spec, const TimeGrid& grid, int n_paths, std::uint64_t seed);

/// Exact log-normal stepping with a Cholesky factor of the driver correlation
/// (1e-8 diagonal jitter retry). Every output entry is strictly positive.
PathSet simulate_gbm(const GbmSpec& spec, const TimeGrid& grid, int n_paths, std::uint64_t seed);

/// Euler-Maruyama with `substeps` internal steps per grid interval; only grid
/// points are recorded. Non-finite drift/diffusion raises a NumericError
/// naming the offending time and path.
PathSet euler_maruyama(const GenericSdeSpec& spec, const TimeGrid& grid, int n_paths,
                       int substeps, std::uint64_t seed);

/// Draws a d-asset GBM spec: mu_j ~ U[-0.05, 0.10], sigma_j ~ U[0.1, 0.4],
/// x0 = 1, and correlation from a row-normalized Gaussian Gram matrix.
GbmSpec random_gbm_spec(int d, std::uint64_t seed);

/// Training pairs (x(t_n), x(t_{n+1}) - x(t_n)) for slot n in [0, n_steps).
SlotBatch slot_increments(const PathSet& paths, int n);

/// Cholesky factor of a correlation matrix, retrying once with 1e-8 diagonal
/// jitter. Throws ValidationError if the matrix is not PSD after the jitter.
Eigen::MatrixXd correlation_cholesky(const Eigen::MatrixXd& corr);

}  // namespace spg
