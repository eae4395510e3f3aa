#include "spg/pathgen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spg/errors.hpp"
#include "spg/sde.hpp"
#include "spg/threading.hpp"
#include "spg/version.hpp"

namespace spg {

namespace fs = std::filesystem;

void GeneratorBundle::validate() const {
    grid.validate();
    if (dim < 1) throw ValidationError("GeneratorBundle: dim must be >= 1");
    if (initial_state.size() != dim)
        throw ValidationError("GeneratorBundle: initial_state size mismatch");
    if (static_cast<int>(slot_models.size()) != grid.n_steps)
        throw ValidationError("GeneratorBundle: expected one slot model per slot");
    const int K = slot_models.empty() ? 0 : slot_models.front().schedule.n_steps();
    for (int n = 0; n < static_cast<int>(slot_models.size()); ++n) {
        const SlotModel& m = slot_models[n];
        m.validate();
        if (m.slot != n) throw ValidationError("GeneratorBundle: slot models out of order");
        if (m.dim != dim) throw ValidationError("GeneratorBundle: slot model dim mismatch");
        if (m.schedule.n_steps() != K)
            throw ValidationError("GeneratorBundle: slot models disagree on K");
    }
}

GeneratorBundle train_generator(const PathSet& dataset, const GeneratorTrainConfig& config,
                                std::uint64_t seed, TrainReport* report) {
    dataset.validate();
    if (dataset.n_paths() < 2)
        throw ValidationError("train_generator: need at least 2 training paths");
    const int n_slots = dataset.grid().n_steps;
    const NoiseSchedule schedule = make_schedule(config.schedule_steps);

    GeneratorBundle bundle;
    bundle.grid = dataset.grid();
    bundle.dim = dataset.dim();
    bundle.initial_state = dataset.initial_state();
    bundle.slot_models.resize(n_slots);

    parallel_ranges(n_slots, 1, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t n = begin; n < end; ++n) {
            const SlotBatch pairs = slot_increments(dataset, static_cast<int>(n));
            try {
                bundle.slot_models[n] = train_slot_model(
                    pairs, schedule, config.ddpm, Rng::derive_seed(seed, static_cast<std::uint64_t>(n)));
            } catch (const DegenerateDataError& e) {
                throw DegenerateDataError("slot " + std::to_string(n) + ": " + e.what());
            }
            bundle.slot_models[n].slot = static_cast<int>(n);
        }
    });

    if (report) {
        report->slot_losses.clear();
        for (const auto& m : bundle.slot_models) report->slot_losses.push_back(m.final_loss);
    }
    return bundle;
}

namespace {

// Shared rollout bookkeeping: compacts surviving paths into a PathSet.
PathGenResult collect_paths(const TimeGrid& grid, int dim, const Eigen::VectorXd& x0,
                            int n_paths, const std::vector<double>& flat,
                            const std::vector<char>& alive) {
    PathGenResult result;
    result.n_requested = n_paths;
    const std::size_t per_path = static_cast<std::size_t>(grid.n_steps + 1) * dim;
    std::vector<double> kept;
    kept.reserve(per_path * n_paths);
    for (int i = 0; i < n_paths; ++i) {
        if (!alive[i]) {
            ++result.n_failed;
            continue;
        }
        kept.insert(kept.end(), flat.begin() + i * per_path, flat.begin() + (i + 1) * per_path);
    }
    result.paths = PathSet::from_data(grid, dim, x0, std::move(kept));
    return result;
}

}  // namespace

PathGenResult generate_paths(const GeneratorBundle& bundle, int n_paths, std::uint64_t seed) {
    bundle.validate();
    if (n_paths < 0) throw ValidationError("generate_paths: n_paths must be >= 0");
    const int d = bundle.dim;
    const int n_slots = bundle.grid.n_steps;
    const std::size_t per_path = static_cast<std::size_t>(n_slots + 1) * d;

    std::vector<double> flat(per_path * n_paths);
    std::vector<char> alive(n_paths, 1);

    // Fixed chunk size: batch compositions depend only on n_paths, so results
    // are identical for any thread count.
    constexpr std::int64_t kChunk = 512;
    parallel_ranges(n_paths, kChunk, [&](std::int64_t begin, std::int64_t end) {
        const int b = static_cast<int>(end - begin);
        std::vector<Rng> rngs;
        rngs.reserve(b);
        for (std::int64_t i = begin; i < end; ++i)
            rngs.emplace_back(seed, static_cast<std::uint64_t>(i));

        Eigen::MatrixXd states = bundle.initial_state.transpose().replicate(b, 1);
        for (std::int64_t i = begin; i < end; ++i)
            for (int j = 0; j < d; ++j) flat[i * per_path + j] = bundle.initial_state[j];

        for (int n = 0; n < n_slots; ++n) {
            const Eigen::MatrixXd incs =
                reverse_sample_batch(bundle.slot_models[n], states, std::span<Rng>(rngs));
            for (int r = 0; r < b; ++r) {
                const std::int64_t i = begin + r;
                if (!alive[i]) continue;
                const Eigen::RowVectorXd next = states.row(r) + incs.row(r);
                if (!next.allFinite()) {
                    // Drop the path but keep its row finite (and its RNG draws
                    // flowing) so the rest of the batch is unaffected.
                    alive[i] = 0;
                    states.row(r) = bundle.initial_state.transpose();
                    continue;
                }
                states.row(r) = next;
                for (int j = 0; j < d; ++j)
                    flat[i * per_path + static_cast<std::size_t>(n + 1) * d + j] = next[j];
            }
        }
    });

    return collect_paths(bundle.grid, d, bundle.initial_state, n_paths, flat, alive);
}

PathGenResult generate_paths(const IncrementSampler& sampler, const TimeGrid& grid,
                             const Eigen::VectorXd& initial_state, int n_paths,
                             std::uint64_t seed) {
    grid.validate();
    if (n_paths < 0) throw ValidationError("generate_paths: n_paths must be >= 0");
    const int d = sampler.dim();
    if (initial_state.size() != d)
        throw ValidationError("generate_paths: initial state dim mismatch");
    const std::size_t per_path = static_cast<std::size_t>(grid.n_steps + 1) * d;

    std::vector<double> flat(per_path * n_paths);
    std::vector<char> alive(n_paths, 1);

    parallel_ranges(n_paths, 512, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            Rng rng(seed, static_cast<std::uint64_t>(i));
            Eigen::VectorXd x = initial_state;
            for (int j = 0; j < d; ++j) flat[i * per_path + j] = x[j];
            for (int n = 0; n < grid.n_steps; ++n) {
                x += sampler.sample(n, x, rng);
                if (!x.allFinite()) {
                    alive[i] = 0;
                    break;
                }
                for (int j = 0; j < d; ++j)
                    flat[i * per_path + static_cast<std::size_t>(n + 1) * d + j] = x[j];
            }
        }
    });

    return collect_paths(grid, d, initial_state, n_paths, flat, alive);
}

GaussianBaselineSampler GaussianBaselineSampler::fit(const PathSet& dataset) {
    if (dataset.n_paths() < 2)
        throw ValidationError("GaussianBaselineSampler: need at least 2 paths");
    GaussianBaselineSampler s;
    const int n_slots = dataset.grid().n_steps;
    const int d = dataset.dim();
    s.mean_.resize(n_slots, d);
    s.std_.resize(n_slots, d);
    for (int n = 0; n < n_slots; ++n) {
        const SlotBatch batch = slot_increments(dataset, n);
        const double h = static_cast<double>(batch.size());
        s.mean_.row(n) = batch.increments.colwise().mean();
        Eigen::MatrixXd centered = batch.increments.rowwise() - s.mean_.row(n);
        s.std_.row(n) = (centered.array().square().colwise().sum() / (h - 1.0)).sqrt();
    }
    return s;
}

Eigen::VectorXd GaussianBaselineSampler::sample(int slot, const Eigen::VectorXd&,
                                                Rng& rng) const {
    Eigen::VectorXd inc(mean_.cols());
    for (Eigen::Index j = 0; j < inc.size(); ++j)
        inc[j] = mean_(slot, j) + std_(slot, j) * rng.normal();
    return inc;
}

// ---------------------------------------------------------------------------
// Monte Carlo score sampler

Eigen::VectorXd SdmMcConfig::silverman_bandwidth(const Eigen::MatrixXd& states) {
    const double h = static_cast<double>(states.rows());
    if (h < 1) throw ValidationError("silverman_bandwidth: empty states");
    Eigen::RowVectorXd mean = states.colwise().mean();
    Eigen::RowVectorXd sd(states.cols());
    if (states.rows() > 1) {
        Eigen::MatrixXd centered = states.rowwise() - mean;
        sd = (centered.array().square().colwise().sum() / (h - 1.0)).sqrt();
    } else {
        sd.setZero();
    }
    return (1.06 * sd * std::pow(h, -0.2)).transpose();
}

Eigen::VectorXd sdm_mc_weights(const Eigen::MatrixXd& states, const Eigen::VectorXd& x_cond,
                               const Eigen::VectorXd& bandwidth) {
    const Eigen::Index h = states.rows();
    const Eigen::Index d = states.cols();
    Eigen::VectorXd logw(h);
    for (Eigen::Index i = 0; i < h; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double diff = x_cond[j] - states(i, j);
            if (diff == 0.0) continue;  // exact match costs nothing at any width
            const double bw = bandwidth[j];
            acc -= (diff * diff) / (2.0 * bw * bw);  // bw=0 pushes acc to -inf
        }
        logw[i] = acc;
    }
    const double shift = logw.maxCoeff();
    if (!std::isfinite(shift))
        throw NumericError(
            "sdm_mc: all condition weights underflow; increase the bandwidth");
    Eigen::VectorXd w = (logw.array() - shift).exp();
    return w / w.sum();
}

Eigen::MatrixXd sdm_mc_sample_many(const SlotBatch& pairs, const Eigen::VectorXd& x_cond,
                                   const SdmMcConfig& config, int n, Rng& rng) {
    config.schedule.validate();
    const int h = pairs.size();
    const int d = pairs.dim();
    if (h < 1) throw ValidationError("sdm_mc: need at least one training pair");
    if (x_cond.size() != d) throw ValidationError("sdm_mc: condition dim mismatch");
    if (config.bandwidth.size() != d)
        throw ValidationError("sdm_mc: bandwidth must have one entry per coordinate");
    if ((config.bandwidth.array() < 0.0).any())
        throw ValidationError("sdm_mc: bandwidth must be nonnegative");

    // Normalize increments with the training stats, as the trained sampler does.
    Eigen::RowVectorXd inc_mean = pairs.increments.colwise().mean();
    Eigen::RowVectorXd inc_std(d);
    {
        Eigen::MatrixXd centered = pairs.increments.rowwise() - inc_mean;
        inc_std =
            (centered.array().square().colwise().sum() / std::max(1.0, h - 1.0)).sqrt();
        inc_std = inc_std.cwiseMax(1e-8);
    }
    Eigen::MatrixXd z = (pairs.increments.rowwise() - inc_mean).array().rowwise() /
                        inc_std.array();

    const Eigen::VectorXd weights = sdm_mc_weights(pairs.states, x_cond, config.bandwidth);
    const Eigen::VectorXd logw = weights.array().max(1e-300).log();

    // Exact score of the weighted Gaussian-mixture forward marginal
    //   q_k(y) = sum_i w_i N(y; sqrt(abar_k) z_i, (1-abar_k) I),
    // fed to the shared ancestral chain through the eps parameterization
    // eps = -sqrt(1-abar_k) * score.
    EpsPredictor eps_fn = [&](const Eigen::MatrixXd& y, int k) -> Eigen::MatrixXd {
        const double abar = config.schedule.alpha_bar[k - 1];
        const double var = 1.0 - abar;
        const Eigen::MatrixXd centers = std::sqrt(abar) * z;  // h x d
        // log responsibilities: logw_i - |y - c_i|^2 / (2 var)
        Eigen::MatrixXd log_resp = -((-2.0 * y * centers.transpose()).rowwise() +
                                     centers.rowwise().squaredNorm().transpose());
        log_resp.colwise() -= y.rowwise().squaredNorm();
        log_resp /= 2.0 * var;
        log_resp.rowwise() += logw.transpose();
        Eigen::VectorXd row_max = log_resp.rowwise().maxCoeff();
        Eigen::MatrixXd resp = (log_resp.colwise() - row_max).array().exp();
        Eigen::VectorXd norm = resp.rowwise().sum();
        resp.array().colwise() /= norm.array();
        // score = (sqrt(abar) * resp * z - y) / var; eps = -sqrt(var) * score
        return (y - resp * centers) / std::sqrt(var);
    };

    return (reverse_sample_chain(eps_fn, config.schedule, d, n, rng).array().rowwise() *
            inc_std.array())
               .rowwise() +
           inc_mean.array();
}

Eigen::VectorXd sdm_mc_sample(const SlotBatch& pairs, const Eigen::VectorXd& x_cond,
                              const SdmMcConfig& config, Rng& rng) {
    return sdm_mc_sample_many(pairs, x_cond, config, 1, rng).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Bundle IO

void save_bundle(const GeneratorBundle& bundle, const std::string& dir) {
    bundle.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create bundle directory: " + dir);

    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["grid"] = {{"t0", bundle.grid.t0}, {"dt", bundle.grid.dt}, {"n_steps", bundle.grid.n_steps}};
    j["dim"] = bundle.dim;
    j["initial_state"] =
        std::vector<double>(bundle.initial_state.data(),
                            bundle.initial_state.data() + bundle.initial_state.size());
    j["schedule_steps"] =
        bundle.slot_models.empty() ? 0 : bundle.slot_models.front().schedule.n_steps();
    std::vector<std::string> slot_files;
    for (int n = 0; n < static_cast<int>(bundle.slot_models.size()); ++n) {
        char name[32];
        std::snprintf(name, sizeof(name), "slot_%04d.json", n);
        slot_files.emplace_back(name);
        save_slot_model(bundle.slot_models[n], (fs::path(dir) / name).string());
    }
    j["slots"] = slot_files;

    std::ofstream out(fs::path(dir) / "bundle.json", std::ios::binary);
    if (!out) throw IoError("cannot write bundle manifest in " + dir);
    out << j.dump(2) << "\n";
}

GeneratorBundle load_bundle(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "bundle.json", std::ios::binary);
    if (!in) throw IoError("cannot open bundle manifest: " + dir + "/bundle.json");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bundle manifest: bad JSON: ") + e.what());
    }
    GeneratorBundle bundle;
    try {
        bundle.grid.t0 = j.at("grid").at("t0").get<double>();
        bundle.grid.dt = j.at("grid").at("dt").get<double>();
        bundle.grid.n_steps = j.at("grid").at("n_steps").get<int>();
        bundle.dim = j.at("dim").get<int>();
        const auto x0 = j.at("initial_state").get<std::vector<double>>();
        bundle.initial_state = Eigen::Map<const Eigen::VectorXd>(
            x0.data(), static_cast<Eigen::Index>(x0.size()));
        for (const auto& name : j.at("slots").get<std::vector<std::string>>())
            bundle.slot_models.push_back(load_slot_model((fs::path(dir) / name).string()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bundle manifest: missing field: ") + e.what());
    }
    bundle.validate();
    return bundle;
}

}  // namespace spg
