#include "spg/ddpm.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "spg/errors.hpp"
#include "spg/version.hpp"

namespace spg {

void NoiseSchedule::validate() const {
    const int K = n_steps();
    if (K < 1) throw ValidationError("NoiseSchedule: needs at least one step");
    if (alpha.size() != K || alpha_bar.size() != K || beta.size() != K)
        throw ValidationError("NoiseSchedule: vector sizes disagree");
    for (int k = 0; k < K; ++k) {
        if (!(alpha[k] > 0.0 && alpha[k] < 1.0))
            throw ValidationError("NoiseSchedule: alpha_k must lie in (0, 1)");
        if (k > 0 && !(alpha_bar[k] < alpha_bar[k - 1]))
            throw ValidationError("NoiseSchedule: alpha_bar must be strictly decreasing");
    }
    if (!(alpha_bar[K - 1] <= 1e-3))
        throw ValidationError("NoiseSchedule: alpha_bar_K exceeds 1e-3");
}

NoiseSchedule make_schedule(int K) {
    if (K < 1) throw ValidationError("make_schedule: K must be >= 1");
    const double scale = 1000.0 / K;
    const double lo = 1e-4 * scale;
    const double hi = 0.02 * scale;
    NoiseSchedule s;
    s.beta.resize(K);
    for (int k = 0; k < K; ++k) {
        const double frac = K == 1 ? 0.0 : static_cast<double>(k) / (K - 1);
        s.beta[k] = std::min(lo + frac * (hi - lo), 0.999);
    }
    s.alpha = 1.0 - s.beta.array();
    s.alpha_bar.resize(K);
    double prod = 1.0;
    for (int k = 0; k < K; ++k) {
        prod *= s.alpha[k];
        s.alpha_bar[k] = prod;
    }
    if (!(s.alpha_bar[K - 1] <= 1e-3))
        throw ValidationError(
            "make_schedule: K=" + std::to_string(K) +
            " leaves alpha_bar_K=" + std::to_string(s.alpha_bar[K - 1]) +
            " > 1e-3; increase K (K=100 suffices)");
    return s;
}

Eigen::RowVectorXd step_embedding(int k, int K) {
    Eigen::RowVectorXd out(kStepEmbedDim);
    const double r = static_cast<double>(k) / K;
    out[0] = r;
    double freq = std::numbers::pi;
    for (int i = 0; i < 4; ++i) {
        out[1 + 2 * i] = std::sin(freq * r);
        out[2 + 2 * i] = std::cos(freq * r);
        freq *= 2.0;
    }
    return out;
}

Eigen::VectorXd forward_noise(const Eigen::VectorXd& y0, int k, const Eigen::VectorXd& eps,
                              const NoiseSchedule& schedule) {
    if (k < 1 || k > schedule.n_steps())
        throw ValidationError("forward_noise: step k out of range");
    const double abar = schedule.alpha_bar[k - 1];
    return std::sqrt(abar) * y0 + std::sqrt(1.0 - abar) * eps;
}

void SlotModel::validate() const {
    if (dim < 1) throw ValidationError("SlotModel: dim must be >= 1");
    if (slot < 0) throw ValidationError("SlotModel: slot must be >= 0");
    schedule.validate();
    if (cond_mean.size() != dim || cond_std.size() != dim || inc_mean.size() != dim ||
        inc_std.size() != dim)
        throw ValidationError("SlotModel: normalization vector sizes disagree");
    if ((cond_std.array() <= 0.0).any() || (inc_std.array() <= 0.0).any())
        throw ValidationError("SlotModel: normalization stds must be positive");
    if (net.input_dim() != 2 * dim + kStepEmbedDim || net.output_dim() != dim)
        throw ValidationError("SlotModel: network shape inconsistent with dim");
}

namespace {

constexpr double kStdFloor = 1e-8;

void column_stats(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& std_dev) {
    const double n = static_cast<double>(m.rows());
    mean = m.colwise().mean();
    Eigen::MatrixXd centered = m.rowwise() - mean.transpose();
    std_dev = (centered.array().square().colwise().sum() / (n - 1.0)).sqrt();
}

}  // namespace

SlotModel train_slot_model(const SlotBatch& pairs, const NoiseSchedule& schedule,
                           const DdpmTrainConfig& config, std::uint64_t seed) {
    schedule.validate();
    const int h = pairs.size();
    const int d = pairs.dim();
    if (h < 2) throw ValidationError("train_slot_model: need at least 2 pairs");
    if (pairs.increments.rows() != h || pairs.increments.cols() != d)
        throw ValidationError("train_slot_model: state/increment shapes disagree");
    if (config.steps < 1 || config.batch < 1 || !(config.learning_rate > 0.0))
        throw ValidationError("train_slot_model: bad training config");

    SlotModel model;
    model.dim = d;
    model.schedule = schedule;

    column_stats(pairs.states, model.cond_mean, model.cond_std);
    column_stats(pairs.increments, model.inc_mean, model.inc_std);
    if ((model.inc_std.array() == 0.0).all())
        throw DegenerateDataError(
            "train_slot_model: increments have zero variance in every coordinate; "
            "a Dirac target cannot be diffusion-trained");
    model.cond_std = model.cond_std.cwiseMax(kStdFloor);
    model.inc_std = model.inc_std.cwiseMax(kStdFloor);

    const Eigen::MatrixXd norm_states =
        (pairs.states.rowwise() - model.cond_mean.transpose()).array().rowwise() /
        model.cond_std.transpose().array();
    const Eigen::MatrixXd norm_incs =
        (pairs.increments.rowwise() - model.inc_mean.transpose()).array().rowwise() /
        model.inc_std.transpose().array();

    std::vector<int> dims;
    dims.push_back(2 * d + kStepEmbedDim);
    dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    dims.push_back(d);

    Rng rng(seed);
    model.net = mlp_init(dims, config.activation, rng.next_u64());
    AdamState adam = AdamState::for_network(model.net, config.learning_rate);

    const int K = schedule.n_steps();
    const int batch = std::min(config.batch, h);
    Eigen::MatrixXd inputs(batch, 2 * d + kStepEmbedDim);
    Eigen::MatrixXd targets(batch, d);

    // Final loss is averaged over a trailing window to damp batch noise.
    const int tail = std::min(100, config.steps);
    double tail_sum = 0.0;

    for (int step = 0; step < config.steps; ++step) {
        for (int b = 0; b < batch; ++b) {
            const int i = rng.uniform_int(h);
            const int k = 1 + rng.uniform_int(K);
            const double abar = schedule.alpha_bar[k - 1];
            const double signal = std::sqrt(abar);
            const double noise = std::sqrt(1.0 - abar);
            for (int j = 0; j < d; ++j) {
                const double eps = rng.normal();
                targets(b, j) = eps;
                inputs(b, j) = signal * norm_incs(i, j) + noise * eps;
                inputs(b, d + kStepEmbedDim + j) = norm_states(i, j);
            }
            inputs.block(b, d, 1, kStepEmbedDim) = step_embedding(k, K);
        }
        MlpGradients grads = mse_gradients(model.net, inputs, targets);
        adam_step(model.net, grads, adam);
        if (step >= config.steps - tail) tail_sum += grads.loss;
    }
    model.final_loss = tail_sum / tail;
    return model;
}

namespace {

Eigen::MatrixXd run_reverse_chain(const EpsPredictor& eps_fn, const NoiseSchedule& schedule,
                                  int dim, Eigen::MatrixXd y,
                                  const std::function<void(int, Eigen::MatrixXd&)>& draw_noise) {
    const int K = schedule.n_steps();
    Eigen::MatrixXd xi(y.rows(), dim);
    for (int k = K; k >= 1; --k) {
        const double alpha = schedule.alpha[k - 1];
        const double abar = schedule.alpha_bar[k - 1];
        const Eigen::MatrixXd eps = eps_fn(y, k);
        y = (y - ((1.0 - alpha) / std::sqrt(1.0 - abar)) * eps) / std::sqrt(alpha);
        if (k > 1) {
            draw_noise(k, xi);
            y += std::sqrt(1.0 - alpha) * xi;
        }
        if (!y.allFinite())
            throw NumericError("reverse sampler: non-finite state at step k=" +
                               std::to_string(k));
    }
    return y;
}

}  // namespace

Eigen::MatrixXd reverse_sample_chain(const EpsPredictor& eps, const NoiseSchedule& schedule,
                                     int dim, std::span<Rng> rngs) {
    schedule.validate();
    const int n = static_cast<int>(rngs.size());
    Eigen::MatrixXd y(n, dim);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) y(i, j) = rngs[i].normal();
    return run_reverse_chain(eps, schedule, dim, std::move(y), [&](int, Eigen::MatrixXd& xi) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j) xi(i, j) = rngs[i].normal();
    });
}

Eigen::MatrixXd reverse_sample_chain(const EpsPredictor& eps, const NoiseSchedule& schedule,
                                     int dim, int n_samples, Rng& rng) {
    schedule.validate();
    Eigen::MatrixXd y(n_samples, dim);
    rng.fill_normal(y);
    return run_reverse_chain(eps, schedule, dim, std::move(y),
                             [&](int, Eigen::MatrixXd& xi) { rng.fill_normal(xi); });
}

namespace {

/// Eps predictor of a trained slot model for a fixed batch of normalized
/// conditions (one row per chain).
EpsPredictor net_predictor(const SlotModel& model, Eigen::MatrixXd norm_conds) {
    const int d = model.dim;
    const int K = model.schedule.n_steps();
    return [&model, norm_conds = std::move(norm_conds), d, K](const Eigen::MatrixXd& y,
                                                              int k) -> Eigen::MatrixXd {
        Eigen::MatrixXd inputs(y.rows(), 2 * d + kStepEmbedDim);
        inputs.leftCols(d) = y;
        inputs.middleCols(d, kStepEmbedDim).rowwise() = step_embedding(k, K);
        inputs.rightCols(d) = norm_conds;
        return model.net.forward(inputs);
    };
}

Eigen::MatrixXd normalize_conditions(const SlotModel& model, const Eigen::MatrixXd& conds) {
    return (conds.rowwise() - model.cond_mean.transpose()).array().rowwise() /
           model.cond_std.transpose().array();
}

Eigen::MatrixXd denormalize_increments(const SlotModel& model, const Eigen::MatrixXd& y) {
    return (y.array().rowwise() * model.inc_std.transpose().array()).rowwise() +
           model.inc_mean.transpose().array();
}

}  // namespace

Eigen::VectorXd reverse_sample(const SlotModel& model, const Eigen::VectorXd& x_cond, Rng& rng) {
    return reverse_sample_many(model, x_cond, 1, rng).row(0).transpose();
}

Eigen::MatrixXd reverse_sample_batch(const SlotModel& model, const Eigen::MatrixXd& conds,
                                     std::span<Rng> rngs) {
    model.validate();
    if (conds.rows() != static_cast<Eigen::Index>(rngs.size()))
        throw ValidationError("reverse_sample_batch: one RNG per condition row required");
    if (conds.cols() != model.dim)
        throw ValidationError("reverse_sample_batch: condition dim mismatch");
    const Eigen::MatrixXd y = reverse_sample_chain(
        net_predictor(model, normalize_conditions(model, conds)), model.schedule, model.dim,
        rngs);
    return denormalize_increments(model, y);
}

Eigen::MatrixXd reverse_sample_many(const SlotModel& model, const Eigen::VectorXd& x_cond,
                                    int n, Rng& rng) {
    model.validate();
    if (x_cond.size() != model.dim)
        throw ValidationError("reverse_sample_many: condition dim mismatch");
    Eigen::MatrixXd conds = x_cond.transpose().replicate(n, 1);
    const Eigen::MatrixXd y = reverse_sample_chain(
        net_predictor(model, normalize_conditions(model, conds)), model.schedule, model.dim, n,
        rng);
    return denormalize_increments(model, y);
}

// ---------------------------------------------------------------------------
// Checkpointing

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) {
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_vec(const std::vector<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    std::copy(v.begin(), v.end(), out.data());
    return out;
}

}  // namespace

std::string slot_model_to_json(const SlotModel& model) {
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["slot"] = model.slot;
    j["dim"] = model.dim;
    j["betas"] = to_vec(model.schedule.beta);
    j["cond_mean"] = to_vec(model.cond_mean);
    j["cond_std"] = to_vec(model.cond_std);
    j["inc_mean"] = to_vec(model.inc_mean);
    j["inc_std"] = to_vec(model.inc_std);
    j["final_loss"] = model.final_loss;
    j["net"] = nlohmann::json::parse(mlp_to_json(model.net));
    return j.dump();
}

SlotModel slot_model_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("slot checkpoint: bad JSON: ") + e.what());
    }
    SlotModel model;
    try {
        model.slot = j.at("slot").get<int>();
        model.dim = j.at("dim").get<int>();
        model.schedule.beta = from_vec(j.at("betas").get<std::vector<double>>());
        model.schedule.alpha = 1.0 - model.schedule.beta.array();
        model.schedule.alpha_bar.resize(model.schedule.beta.size());
        double prod = 1.0;
        for (int k = 0; k < model.schedule.n_steps(); ++k) {
            prod *= model.schedule.alpha[k];
            model.schedule.alpha_bar[k] = prod;
        }
        model.cond_mean = from_vec(j.at("cond_mean").get<std::vector<double>>());
        model.cond_std = from_vec(j.at("cond_std").get<std::vector<double>>());
        model.inc_mean = from_vec(j.at("inc_mean").get<std::vector<double>>());
        model.inc_std = from_vec(j.at("inc_std").get<std::vector<double>>());
        model.final_loss = j.value("final_loss", 0.0);
        model.net = mlp_from_json(j.at("net").dump());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("slot checkpoint: missing field: ") + e.what());
    }
    model.validate();
    return model;
}

void save_slot_model(const SlotModel& model, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + file);
    out << slot_model_to_json(model);
    if (!out) throw IoError("write failed: " + file);
}

SlotModel load_slot_model(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open: " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    return slot_model_from_json(ss.str());
}

}  // namespace spg
