#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "spg/mlp.hpp"
#include "spg/path_set.hpp"
#include "spg/rng.hpp"

namespace spg {

/// Forward-noising schedule {alpha_k} with cumulative products
/// abar_k = prod_{j<=k} alpha_j. Index k runs 1..K; vectors store k-1.
struct NoiseSchedule {
    Eigen::VectorXd beta;       // 1 - alpha
    Eigen::VectorXd alpha;      // in (0, 1)
    Eigen::VectorXd alpha_bar;  // strictly decreasing, abar_K <= 1e-3

    int n_steps() const { return static_cast<int>(alpha.size()); }
    void validate() const;
};

/// Scaled-linear betas: linear from 1e-4*(1000/K) to 0.02*(1000/K), capped at
/// 0.999. Throws if K is too small for abar_K to reach 1e-3.
NoiseSchedule make_schedule(int K);

/// Conditioning information for one increment draw: the source slot and the
/// raw (unnormalized) state there.
struct Condition {
    int slot = 0;
    Eigen::VectorXd state;
};

/// Step index embedding: k/K followed by 8 sinusoidal features.
inline constexpr int kStepEmbedDim = 9;
Eigen::RowVectorXd step_embedding(int k, int K);

/// Closed-form composition of k forward noising steps:
/// sqrt(abar_k) * y0 + sqrt(1 - abar_k) * eps.
Eigen::VectorXd forward_noise(const Eigen::VectorXd& y0, int k, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule);

/// A trained conditional denoiser for one time slot, together with the
/// z-scoring statistics of its condition states and increments.
struct SlotModel {
    int slot = 0;
    int dim = 0;
    Mlp net;  // inputs [y, step embed, normalized condition], outputs eps-hat
    Eigen::VectorXd cond_mean, cond_std;  // stds floored at 1e-8
    Eigen::VectorXd inc_mean, inc_std;
    NoiseSchedule schedule;
    double final_loss = 0.0;

    void validate() const;
};

struct DdpmTrainConfig {
    std::vector<int> hidden_dims{128, 128, 128};
    Activation activation = Activation::silu;
    double learning_rate = 1e-3;
    int steps = 4000;
    int batch = 64;  // capped at the number of pairs
};

/// Trains an eps-predictor on the given (state, increment) pairs by
/// minimizing |eps - net(noised increment, step embed, normalized state)|^2
/// with Adam. Deterministic per seed. Throws DegenerateDataError when the
/// increments have zero variance in every coordinate.
SlotModel train_slot_model(const SlotBatch& pairs, const NoiseSchedule& schedule,
                           const DdpmTrainConfig& config, std::uint64_t seed);

/// Noise predictor seam for the ancestral chain: maps (Y batch, step k) to
/// predicted noise. Lets tests and the Monte Carlo score baseline drive the
/// same reverse recursion as trained networks.
using EpsPredictor = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, int)>;

/// Ancestral sampling: starts from N(0, I), then for k = K..1 applies
///   y <- (y - (1-alpha_k)/sqrt(1-abar_k) * eps(y, k)) / sqrt(alpha_k)
///        + sqrt(1-alpha_k) * xi   (xi = 0 at k = 1).
/// Row i of the output is driven entirely by rngs[i].
Eigen::MatrixXd reverse_sample_chain(const EpsPredictor& eps, const NoiseSchedule& schedule,
                                     int dim, std::span<Rng> rngs);
/// Same chain with all rows drawn from one stream (row-major per step).
Eigen::MatrixXd reverse_sample_chain(const EpsPredictor& eps, const NoiseSchedule& schedule,
                                     int dim, int n_samples, Rng& rng);

/// One increment draw conditioned on the raw state x_cond.
Eigen::VectorXd reverse_sample(const SlotModel& model, const Eigen::VectorXd& x_cond, Rng& rng);

/// Batch draw: row i is conditioned on conds.row(i) and driven by rngs[i].
Eigen::MatrixXd reverse_sample_batch(const SlotModel& model, const Eigen::MatrixXd& conds,
                                     std::span<Rng> rngs);

/// n draws sharing one condition and one stream.
Eigen::MatrixXd reverse_sample_many(const SlotModel& model, const Eigen::VectorXd& x_cond,
                                    int n, Rng& rng);

/// Slot checkpoint: one JSON per slot holding the network checkpoint plus
/// slot, dim, schedule betas, and normalization vectors.
std::string slot_model_to_json(const SlotModel& model);
SlotModel slot_model_from_json(const std::string& json_text);
void save_slot_model(const SlotModel& model, const std::string& file);
SlotModel load_slot_model(const std::string& file);

}  // namespace spg
