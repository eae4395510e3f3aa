#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace spg {

enum class Activation { relu, silu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Fully connected network with a linear output layer. Double precision
/// throughout; forward passes are pure.
struct Mlp {
    std::vector<int> layer_dims;  // [in, h1, ..., out]
    Activation activation = Activation::silu;
    std::vector<Eigen::MatrixXd> weights;  // layer l maps dims[l] -> dims[l+1]
    std::vector<Eigen::VectorXd> biases;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int n_layers() const { return static_cast<int>(weights.size()); }
    std::size_t parameter_count() const;

    /// Batch forward: inputs B x in -> outputs B x out.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
    Eigen::VectorXd forward1(const Eigen::VectorXd& input) const;
};

/// He-scaled Gaussian weights (std = sqrt(2 / fan_in)), zero biases.
Mlp mlp_init(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed);

struct MlpGradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    double loss = 0.0;
};

/// Reverse-mode gradients of L = mean over the batch of |net(x) - y|^2.
MlpGradients mse_gradients(const Mlp& net, const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets);

/// Adam with bias correction: one moment buffer per parameter tensor.
struct AdamState {
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_biases, v_biases;
    long step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;

    static AdamState for_network(const Mlp& net, double learning_rate);
};

void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state);

/// Checkpoint: JSON with layer dims, activation, format version, and the
/// parameters as a base64 blob of little-endian doubles in layer order,
/// weights before biases. Round-trips bit-exactly.
std::string mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const std::string& json_text);
void save_mlp(const Mlp& net, const std::string& file);
Mlp load_mlp(const std::string& file);

}  // namespace spg
