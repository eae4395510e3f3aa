#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "spg/ddpm.hpp"
#include "spg/path_set.hpp"
#include "spg/rng.hpp"

namespace spg {

/// The deployable generator: one trained slot model per source slot
/// n = 0..n_steps-1, plus the grid and the common initial state.
struct GeneratorBundle {
    std::vector<SlotModel> slot_models;
    TimeGrid grid;
    int dim = 0;
    Eigen::VectorXd initial_state;

    void validate() const;
};

struct GeneratorTrainConfig {
    int schedule_steps = 100;  // diffusion steps K
    DdpmTrainConfig ddpm;
};

struct TrainReport {
    std::vector<double> slot_losses;
};

/// Trains one slot model per slot, in parallel, each on RNG substream
/// (seed, slot). Degenerate-data errors are rethrown with the slot index.
GeneratorBundle train_generator(const PathSet& dataset, const GeneratorTrainConfig& config,
                                std::uint64_t seed, TrainReport* report = nullptr);

/// Per-slot conditional increment source; the seam that lets tests swap exact
/// transition kernels or moment-matched baselines for trained models.
class IncrementSampler {
public:
    virtual ~IncrementSampler() = default;
    virtual int dim() const = 0;
    virtual Eigen::VectorXd sample(int slot, const Eigen::VectorXd& state, Rng& rng) const = 0;
};

struct PathGenResult {
    PathSet paths;
    int n_requested = 0;
    int n_failed = 0;  // paths dropped after a non-finite state
};

/// Autoregressive rollout: each path starts at the bundle's initial state and
/// adds one sampled increment per slot. Path i is driven by RNG substream
/// (seed, i), so the draw sequence is independent of n_paths and of which
/// other paths fail. Non-finite paths are dropped and counted.
PathGenResult generate_paths(const GeneratorBundle& bundle, int n_paths, std::uint64_t seed);

/// Same rollout through the generic sampler seam (one chain per path).
PathGenResult generate_paths(const IncrementSampler& sampler, const TimeGrid& grid,
                             const Eigen::VectorXd& initial_state, int n_paths,
                             std::uint64_t seed);

/// Moment-matched baseline: per-slot unconditional Gaussian increments with
/// the training data's per-coordinate mean and std.
class GaussianBaselineSampler : public IncrementSampler {
public:
    static GaussianBaselineSampler fit(const PathSet& dataset);

    int dim() const override { return static_cast<int>(mean_.cols()); }
    Eigen::VectorXd sample(int slot, const Eigen::VectorXd& state, Rng& rng) const override;

private:
    Eigen::MatrixXd mean_;  // n_steps x dim
    Eigen::MatrixXd std_;
};

/// Configuration of the Monte Carlo score sampler: ancestral sampling whose
/// score comes from the exact Gaussian-mixture forward marginal of the
/// training increments, with kernel condition weights
/// w_i ∝ exp(-sum_j (x_j - x_ij)^2 / (2 h_j^2)).
struct SdmMcConfig {
    Eigen::VectorXd bandwidth;  // per-coordinate kernel width, > 0
    NoiseSchedule schedule;

    /// Silverman's rule per coordinate: 1.06 * std_j * H^(-1/5).
    static Eigen::VectorXd silverman_bandwidth(const Eigen::MatrixXd& states);
};

/// One increment draw; `many` shares the condition and the stream.
Eigen::VectorXd sdm_mc_sample(const SlotBatch& pairs, const Eigen::VectorXd& x_cond,
                              const SdmMcConfig& config, Rng& rng);
Eigen::MatrixXd sdm_mc_sample_many(const SlotBatch& pairs, const Eigen::VectorXd& x_cond,
                                   const SdmMcConfig& config, int n, Rng& rng);

/// Condition weights used by the sampler (exposed for tests/diagnostics).
Eigen::VectorXd sdm_mc_weights(const Eigen::MatrixXd& states, const Eigen::VectorXd& x_cond,
                               const Eigen::VectorXd& bandwidth);

/// Bundle directory: bundle.json manifest plus one slot_NNN.json per slot.
void save_bundle(const GeneratorBundle& bundle, const std::string& dir);
GeneratorBundle load_bundle(const std::string& dir);

}  // namespace spg
