#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>

#include "spg/path_set.hpp"
#include "spg/pathgen.hpp"

namespace spg {

/// Flattens an ensemble to one row per path: the deterministic t_0 row is
/// dropped and the remaining observations are concatenated time-major, giving
/// H x (n_steps * dim).
Eigen::MatrixXd paths_to_vectors(const PathSet& paths);

struct KnnKlResult {
    double value = 0.0;
    double floored_fraction = 0.0;  // p-points whose rho or nu hit the floor
    bool floor_warning = false;     // floored_fraction > 1%
};

/// Nearest-neighbor estimate of KL(p || q) from two sample sets:
///   (D/n) * sum_i log(nu_k(i) / rho_k(i)) + log(m / (n-1)),
/// where rho_k is the k-th neighbor distance within p (self excluded) and
/// nu_k the k-th neighbor distance into q. Distances below 1e-12 are floored.
KnnKlResult knn_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q,
                   int k = 1);

struct KlEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int n_repeats = 0;
    int k = 1;
    int dim = 0;                     // flattened dimension D
    bool single_repeat = false;      // std_error degenerate (n_repeats == 1)
    bool floor_warning = false;      // any repeat hit the distance floor often
};

/// Supplies n fresh paths for a given seed; both sides of the experiment are
/// sources, so tests can plug exact simulators into either slot.
using PathSource = std::function<PathSet(int n_paths, std::uint64_t seed)>;

/// Repeated two-sample experiment: per repeat, draws n_per_side fresh paths
/// from each source and computes knn_kl(real, synthetic). Repeats run in
/// parallel on derived seeds; the reported error is the standard error over
/// repeats.
KlEstimate kl_experiment(const PathSource& real_source, const PathSource& synth_source,
                         int n_per_side, int n_repeats, int k, std::uint64_t seed);

/// Adapter: fresh generator draws per repeat from one trained bundle. Failed
/// paths raise NumericError (a quality experiment must not silently thin its
/// sample).
PathSource bundle_source(const GeneratorBundle& bundle);

struct PathStatistics {
    Eigen::MatrixXd mean_curve;  // (n_steps+1) x dim
    Eigen::MatrixXd std_curve;   // unbiased, same shape
    double positivity_fraction = 0.0;
};

PathStatistics path_statistics(const PathSet& paths);

/// Plot-ready moment curves: t, dim, real_mean, synth_mean, real_std, synth_std.
void write_moment_csv(const std::string& file, const TimeGrid& grid,
                      const PathStatistics& real_stats, const PathStatistics& synth_stats);

}  // namespace spg
