#include "spg/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <vector>

#include "spg/errors.hpp"
#include "spg/knn.hpp"
#include "spg/threading.hpp"

namespace spg {

Eigen::MatrixXd paths_to_vectors(const PathSet& paths) {
    const int h = paths.n_paths();
    const int d = paths.dim();
    const int n_steps = paths.grid().n_steps;
    Eigen::MatrixXd out(h, static_cast<Eigen::Index>(n_steps) * d);
    for (int i = 0; i < h; ++i)
        for (int n = 1; n <= n_steps; ++n)
            out.block(i, static_cast<Eigen::Index>(n - 1) * d, 1, d) = paths.state(i, n);
    return out;
}

KnnKlResult knn_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q, int k) {
    const Eigen::Index n = samples_p.rows();
    const Eigen::Index m = samples_q.rows();
    const Eigen::Index dim = samples_p.cols();
    if (samples_q.cols() != dim) throw ValidationError("knn_kl: sample dimensions disagree");
    if (n < k + 1) throw ValidationError("knn_kl: need at least k+1 p-samples");
    if (m < k) throw ValidationError("knn_kl: need at least k q-samples");

    constexpr double kFloor = 1e-12;
    const Eigen::VectorXd rho = kth_neighbor_within(samples_p, k);
    const Eigen::VectorXd nu = kth_neighbor_cross(samples_p, samples_q, k);

    KnnKlResult result;
    double log_sum = 0.0;
    int floored = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double r = rho[i];
        double v = nu[i];
        if (r < kFloor || v < kFloor) ++floored;
        r = std::max(r, kFloor);
        v = std::max(v, kFloor);
        log_sum += std::log(v / r);
    }
    result.value = static_cast<double>(dim) / static_cast<double>(n) * log_sum +
                   std::log(static_cast<double>(m) / static_cast<double>(n - 1));
    result.floored_fraction = static_cast<double>(floored) / static_cast<double>(n);
    result.floor_warning = result.floored_fraction > 0.01;
    return result;
}

KlEstimate kl_experiment(const PathSource& real_source, const PathSource& synth_source,
                         int n_per_side, int n_repeats, int k, std::uint64_t seed) {
    if (n_repeats < 1) throw ValidationError("kl_experiment: n_repeats must be >= 1");
    if (n_per_side < k + 1) throw ValidationError("kl_experiment: n_per_side too small for k");

    std::vector<KnnKlResult> repeats(n_repeats);
    int dim = 0;
    parallel_ranges(n_repeats, 1, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t r = begin; r < end; ++r) {
            PathSet real;
            PathSet synth;
            try {
                real = real_source(n_per_side, Rng::derive_seed(seed, 2 * r));
                synth = synth_source(n_per_side, Rng::derive_seed(seed, 2 * r + 1));
            } catch (const Error& e) {
                throw NumericError("kl_experiment: repeat " + std::to_string(r) +
                                   " failed: " + e.what());
            }
            repeats[r] = knn_kl(paths_to_vectors(real), paths_to_vectors(synth), k);
            if (r == 0) dim = real.grid().n_steps * real.dim();
        }
    });

    KlEstimate est;
    est.n_repeats = n_repeats;
    est.k = k;
    est.dim = dim;
    double sum = 0.0;
    for (const auto& rep : repeats) {
        sum += rep.value;
        est.floor_warning = est.floor_warning || rep.floor_warning;
    }
    est.mean = sum / n_repeats;
    if (n_repeats == 1) {
        est.std_error = 0.0;
        est.single_repeat = true;
    } else {
        double sq = 0.0;
        for (const auto& rep : repeats) sq += (rep.value - est.mean) * (rep.value - est.mean);
        est.std_error = std::sqrt(sq / (n_repeats - 1)) / std::sqrt(n_repeats);
    }
    return est;
}

PathSource bundle_source(const GeneratorBundle& bundle) {
    return [&bundle](int n_paths, std::uint64_t seed) -> PathSet {
        PathGenResult res = generate_paths(bundle, n_paths, seed);
        if (res.n_failed > 0)
            throw NumericError("bundle_source: " + std::to_string(res.n_failed) + " of " +
                               std::to_string(n_paths) + " generated paths went non-finite");
        return std::move(res.paths);
    };
}

PathStatistics path_statistics(const PathSet& paths) {
    const int h = paths.n_paths();
    if (h < 2) throw ValidationError("path_statistics: need at least 2 paths");
    const int d = paths.dim();
    const int n_obs = paths.n_obs();

    PathStatistics stats;
    stats.mean_curve.resize(n_obs, d);
    stats.std_curve.resize(n_obs, d);
    std::size_t positive = 0;
    for (int n = 0; n < n_obs; ++n) {
        const Eigen::MatrixXd x = paths.states_at(n);
        stats.mean_curve.row(n) = x.colwise().mean();
        Eigen::MatrixXd centered = x.rowwise() - stats.mean_curve.row(n);
        stats.std_curve.row(n) =
            (centered.array().square().colwise().sum() / (h - 1.0)).sqrt();
        positive += static_cast<std::size_t>((x.array() > 0.0).count());
    }
    stats.positivity_fraction = static_cast<double>(positive) /
                                (static_cast<double>(h) * n_obs * d);
    return stats;
}

void write_moment_csv(const std::string& file, const TimeGrid& grid,
                      const PathStatistics& real_stats, const PathStatistics& synth_stats) {
    if (real_stats.mean_curve.rows() != synth_stats.mean_curve.rows() ||
        real_stats.mean_curve.cols() != synth_stats.mean_curve.cols())
        throw ValidationError("write_moment_csv: curve shapes disagree");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + file);
    out << "t,dim,real_mean,synth_mean,real_std,synth_std\n";
    char buf[32];
    auto put = [&](double v, char sep) {
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        out.write(buf, res.ptr - buf);
        out << sep;
    };
    for (int n = 0; n < real_stats.mean_curve.rows(); ++n) {
        for (int j = 0; j < real_stats.mean_curve.cols(); ++j) {
            put(grid.time(n), ',');
            out << j << ',';
            put(real_stats.mean_curve(n, j), ',');
            put(synth_stats.mean_curve(n, j), ',');
            put(real_stats.std_curve(n, j), ',');
            put(synth_stats.std_curve(n, j), '\n');
        }
    }
    if (!out) throw IoError("write failed: " + file);
}

}  // namespace spg
