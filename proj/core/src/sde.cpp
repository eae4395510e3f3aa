#include "spg/sde.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

#include "spg/errors.hpp"
#include "spg/rng.hpp"
#include "spg/threading.hpp"

namespace spg {

void OuSpec::validate() const {
    if (!(rate > 0.0)) throw ValidationError("OuSpec: rate must be > 0");
    if (!(vol > 0.0)) throw ValidationError("OuSpec: vol must be > 0");
    if (!std::isfinite(level) || !std::isfinite(x0))
        throw ValidationError("OuSpec: level and x0 must be finite");
}

double OuSpec::transition_mean(double x, double dt) const {
    return level + (x - level) * std::exp(-rate * dt);
}

double OuSpec::transition_var(double dt) const {
    return vol * vol * (1.0 - std::exp(-2.0 * rate * dt)) / (2.0 * rate);
}

double OuSpec::marginal_mean(double t) const { return transition_mean(x0, t); }

double OuSpec::marginal_var(double t) const { return transition_var(t); }

void GbmSpec::validate() const {
    const int d = dim();
    if (d < 1) throw ValidationError("GbmSpec: dim must be >= 1");
    if (vol.size() != d || x0.size() != d)
        throw ValidationError("GbmSpec: drift/vol/x0 sizes disagree");
    if (corr.rows() != d || corr.cols() != d)
        throw ValidationError("GbmSpec: corr must be d x d");
    if ((vol.array() <= 0.0).any()) throw ValidationError("GbmSpec: vol must be > 0");
    if ((x0.array() <= 0.0).any()) throw ValidationError("GbmSpec: x0 must be > 0");
    if (!corr.isApprox(corr.transpose(), 1e-12))
        throw ValidationError("GbmSpec: corr must be symmetric");
    for (int j = 0; j < d; ++j)
        if (std::abs(corr(j, j) - 1.0) > 1e-12)
            throw ValidationError("GbmSpec: corr diagonal must be 1");
}

double GbmSpec::marginal_mean(int j, double t) const {
    return x0[j] * std::exp(drift[j] * t);
}

void GenericSdeSpec::validate() const {
    if (!drift_fn || !diff_fn) throw ValidationError("GenericSdeSpec: missing coefficients");
    if (x0.size() < 1) throw ValidationError("GenericSdeSpec: x0 must be non-empty");
    if (brownian_dim < 1) throw ValidationError("GenericSdeSpec: brownian_dim must be >= 1");
}

Eigen::MatrixXd correlation_cholesky(const Eigen::MatrixXd& corr) {
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::MatrixXd jittered = corr;
    jittered.diagonal().array() += 1e-8;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success)
        throw ValidationError("correlation matrix is not PSD (Cholesky failed after jitter)");
    return llt.matrixL();
}

PathSet simulate_ou(const OuSpec& spec, const TimeGrid& grid, int n_paths, std::uint64_t seed) {
    spec.validate();
    grid.validate();
    if (n_paths < 1) throw ValidationError("simulate_ou: n_paths must be >= 1");

    Eigen::VectorXd x0(1);
    x0[0] = spec.x0;
    PathSet paths(grid, 1, x0, n_paths);

    const double decay = std::exp(-spec.rate * grid.dt);
    const double step_std = std::sqrt(spec.transition_var(grid.dt));

    parallel_ranges(n_paths, 1024, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(i));
            double x = spec.x0;
            for (int n = 1; n <= grid.n_steps; ++n) {
                x = spec.level + (x - spec.level) * decay + step_std * rng.normal();
                paths.at(static_cast<int>(i), n, 0) = x;
            }
        }
    });
    return paths;
}

PathSet simulate_gbm(const GbmSpec& spec, const TimeGrid& grid, int n_paths, std::uint64_t seed) {
    spec.validate();
    grid.validate();
    if (n_paths < 1) throw ValidationError("simulate_gbm: n_paths must be >= 1");

    const int d = spec.dim();
    const Eigen::MatrixXd chol = correlation_cholesky(spec.corr);
    const Eigen::VectorXd log_drift =
        (spec.drift.array() - 0.5 * spec.vol.array().square()) * grid.dt;
    const Eigen::VectorXd vol_sqrt_dt = spec.vol * std::sqrt(grid.dt);

    PathSet paths(grid, d, spec.x0, n_paths);

    parallel_ranges(n_paths, 256, [&](std::int64_t begin, std::int64_t end) {
        Eigen::VectorXd z(d), xi(d), x(d);
        for (std::int64_t i = begin; i < end; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(i));
            x = spec.x0;
            for (int n = 1; n <= grid.n_steps; ++n) {
                for (int j = 0; j < d; ++j) xi[j] = rng.normal();
                z.noalias() = chol * xi;
                x.array() *= (log_drift.array() + vol_sqrt_dt.array() * z.array()).exp();
                paths.state(static_cast<int>(i), n) = x.transpose();
            }
        }
    });
    return paths;
}

PathSet euler_maruyama(const GenericSdeSpec& spec, const TimeGrid& grid, int n_paths,
                       int substeps, std::uint64_t seed) {
    spec.validate();
    grid.validate();
    if (n_paths < 1) throw ValidationError("euler_maruyama: n_paths must be >= 1");
    if (substeps < 1) throw ValidationError("euler_maruyama: substeps must be >= 1");

    const int d = spec.dim();
    const int m = spec.brownian_dim;
    const double h = grid.dt / substeps;
    const double sqrt_h = std::sqrt(h);

    PathSet paths(grid, d, spec.x0, n_paths);

    parallel_ranges(n_paths, 256, [&](std::int64_t begin, std::int64_t end) {
        Eigen::VectorXd x(d), dw(m);
        for (std::int64_t i = begin; i < end; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(i));
            x = spec.x0;
            for (int n = 0; n < grid.n_steps; ++n) {
                for (int s = 0; s < substeps; ++s) {
                    const double t = grid.time(n) + s * h;
                    const Eigen::VectorXd mu = spec.drift_fn(t, x);
                    const Eigen::MatrixXd sig = spec.diff_fn(t, x);
                    if (!mu.allFinite() || !sig.allFinite())
                        throw NumericError("euler_maruyama: non-finite coefficients at t=" +
                                           std::to_string(t) + ", path " + std::to_string(i));
                    for (int jj = 0; jj < m; ++jj) dw[jj] = sqrt_h * rng.normal();
                    x += mu * h + sig * dw;
                }
                paths.state(static_cast<int>(i), n + 1) = x.transpose();
            }
        }
    });
    return paths;
}

GbmSpec random_gbm_spec(int d, std::uint64_t seed) {
    if (d < 1) throw ValidationError("random_gbm_spec: d must be >= 1");
    Rng rng(seed);
    GbmSpec spec;
    spec.drift.resize(d);
    spec.vol.resize(d);
    spec.x0 = Eigen::VectorXd::Ones(d);
    for (int j = 0; j < d; ++j) spec.drift[j] = -0.05 + 0.15 * rng.uniform();
    for (int j = 0; j < d; ++j) spec.vol[j] = 0.1 + 0.3 * rng.uniform();

    // Row-normalized Gaussian Gram matrix: PSD with unit diagonal by
    // construction.
    Eigen::MatrixXd a(d, d);
    rng.fill_normal(a);
    Eigen::MatrixXd gram = a * a.transpose();
    Eigen::VectorXd scale = gram.diagonal().array().sqrt().inverse();
    spec.corr = scale.asDiagonal() * gram * scale.asDiagonal();
    spec.corr = 0.5 * (spec.corr + spec.corr.transpose()).eval();
    spec.corr.diagonal().setOnes();
    return spec;
}

SlotBatch slot_increments(const PathSet& paths, int n) {
    if (n < 0 || n >= paths.grid().n_steps)
        throw ValidationError("slot_increments: slot " + std::to_string(n) +
                              " out of range [0, " + std::to_string(paths.grid().n_steps) + ")");
    SlotBatch batch;
    batch.states = paths.states_at(n);
    batch.increments = paths.states_at(n + 1) - batch.states;
    return batch;
}

}  // namespace spg
