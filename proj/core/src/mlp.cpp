#include "spg/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spg/errors.hpp"
#include "spg/rng.hpp"
#include "spg/version.hpp"

namespace spg {

const char* activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "silu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "silu") return Activation::silu;
    throw ValidationError("unknown activation: " + name);
}

namespace {

inline void apply_activation(Eigen::MatrixXd& z, Activation act) {
    if (act == Activation::relu) {
        z = z.cwiseMax(0.0);
    } else {
        // silu(x) = x * sigmoid(x)
        z = (z.array() / (1.0 + (-z.array()).exp())).matrix();
    }
}

inline Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& z, Activation act) {
    if (act == Activation::relu)
        return (z.array() > 0.0).cast<double>();
    const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-z.array()).exp());
    return (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
}

}  // namespace

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
    for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const {
    if (inputs.cols() != input_dim())
        throw ValidationError("Mlp::forward: input dim " + std::to_string(inputs.cols()) +
                              " != " + std::to_string(input_dim()));
    Eigen::MatrixXd h = inputs;
    for (int l = 0; l < n_layers(); ++l) {
        Eigen::MatrixXd z = h * weights[l].transpose();
        z.rowwise() += biases[l].transpose();
        if (l + 1 < n_layers()) apply_activation(z, activation);
        h = std::move(z);
    }
    return h;
}

Eigen::VectorXd Mlp::forward1(const Eigen::VectorXd& input) const {
    return forward(input.transpose()).row(0).transpose();
}

Mlp mlp_init(const std::vector<int>& layer_dims, Activation activation, std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ValidationError("mlp_init: need at least [in, out] dims");
    for (int d : layer_dims)
        if (d < 1) throw ValidationError("mlp_init: all layer dims must be positive");

    Mlp net;
    net.layer_dims = layer_dims;
    net.activation = activation;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const int fan_in = layer_dims[l];
        const int fan_out = layer_dims[l + 1];
        const double std_dev = std::sqrt(2.0 / fan_in);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = std_dev * rng.normal();
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

MlpGradients mse_gradients(const Mlp& net, const Eigen::MatrixXd& inputs,
                           const Eigen::MatrixXd& targets) {
    if (inputs.rows() != targets.rows())
        throw ValidationError("mse_gradients: batch sizes disagree");
    if (targets.cols() != net.output_dim())
        throw ValidationError("mse_gradients: target dim mismatch");
    if (!inputs.allFinite() || !targets.allFinite())
        throw ValidationError("mse_gradients: non-finite inputs");

    const int L = net.n_layers();
    const double batch = static_cast<double>(inputs.rows());

    // Forward, caching pre-activations.
    std::vector<Eigen::MatrixXd> acts(L + 1);  // acts[l] feeds layer l
    std::vector<Eigen::MatrixXd> pre(L);
    acts[0] = inputs;
    for (int l = 0; l < L; ++l) {
        pre[l] = acts[l] * net.weights[l].transpose();
        pre[l].rowwise() += net.biases[l].transpose();
        acts[l + 1] = pre[l];
        if (l + 1 < L) apply_activation(acts[l + 1], net.activation);
    }

    MlpGradients grads;
    grads.weights.resize(L);
    grads.biases.resize(L);
    const Eigen::MatrixXd residual = acts[L] - targets;
    grads.loss = residual.squaredNorm() / batch;

    Eigen::MatrixXd delta = 2.0 / batch * residual;  // dL/d(pre[L-1]) since output is linear
    for (int l = L - 1; l >= 0; --l) {
        grads.weights[l].noalias() = delta.transpose() * acts[l];
        grads.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd back = delta * net.weights[l];
            delta = back.cwiseProduct(activation_grad(pre[l - 1], net.activation));
        }
    }
    return grads;
}

AdamState AdamState::for_network(const Mlp& net, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (const auto& w : net.weights) {
        s.m_weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        s.v_weights.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : net.biases) {
        s.m_biases.push_back(Eigen::VectorXd::Zero(b.size()));
        s.v_biases.push_back(Eigen::VectorXd::Zero(b.size()));
    }
    return s;
}

namespace {

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, const AdamState& s, double corr1,
                 double corr2) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    param.array() -= s.learning_rate * (m.array() / corr1) /
                     ((v.array() / corr2).sqrt() + s.epsilon);
}

}  // namespace

void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state) {
    if (grads.weights.size() != net.weights.size())
        throw ValidationError("adam_step: gradient/parameter shape mismatch");
    ++state.step_count;
    const double corr1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        adam_update(net.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l],
                    state, corr1, corr2);
        adam_update(net.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l],
                    state, corr1, corr2);
    }
}

// ---------------------------------------------------------------------------
// Checkpointing

namespace {

constexpr char kB64Table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= len; i += 3) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out += kB64Table[(v >> 18) & 63];
        out += kB64Table[(v >> 12) & 63];
        out += kB64Table[(v >> 6) & 63];
        out += kB64Table[v & 63];
    }
    if (i + 1 == len) {
        const unsigned v = data[i] << 16;
        out += kB64Table[(v >> 18) & 63];
        out += kB64Table[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == len) {
        const unsigned v = (data[i] << 16) | (data[i + 1] << 8);
        out += kB64Table[(v >> 18) & 63];
        out += kB64Table[(v >> 12) & 63];
        out += kB64Table[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    int rev[256];
    std::fill(std::begin(rev), std::end(rev), -1);
    for (int i = 0; i < 64; ++i) rev[static_cast<unsigned char>(kB64Table[i])] = i;
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    unsigned acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = rev[static_cast<unsigned char>(c)];
        if (v < 0) throw IoError("checkpoint: invalid base64 payload");
        acc = (acc << 6) | static_cast<unsigned>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    return out;
}

}  // namespace

std::string mlp_to_json(const Mlp& net) {
    std::vector<double> flat;
    flat.reserve(net.parameter_count());
    for (int l = 0; l < net.n_layers(); ++l) {
        const auto& w = net.weights[l];
        flat.insert(flat.end(), w.data(), w.data() + w.size());
        const auto& b = net.biases[l];
        flat.insert(flat.end(), b.data(), b.data() + b.size());
    }
    nlohmann::json j;
    j["format_version"] = kFormatVersion;
    j["layer_dims"] = net.layer_dims;
    j["activation"] = activation_name(net.activation);
    j["params_b64"] =
        base64_encode(reinterpret_cast<const unsigned char*>(flat.data()),
                      flat.size() * sizeof(double));
    return j.dump();
}

Mlp mlp_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: bad JSON: ") + e.what());
    }
    Mlp net;
    try {
        net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
        net.activation = activation_from_name(j.at("activation").get<std::string>());
        const auto bytes = base64_decode(j.at("params_b64").get<std::string>());
        if (net.layer_dims.size() < 2) throw IoError("checkpoint: bad layer_dims");
        std::size_t expected = 0;
        for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l)
            expected += static_cast<std::size_t>(net.layer_dims[l]) * net.layer_dims[l + 1] +
                        net.layer_dims[l + 1];
        if (bytes.size() != expected * sizeof(double))
            throw IoError("checkpoint: parameter payload size mismatch");
        const double* p = reinterpret_cast<const double*>(bytes.data());
        for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
            const int fan_in = net.layer_dims[l];
            const int fan_out = net.layer_dims[l + 1];
            Eigen::MatrixXd w(fan_out, fan_in);
            std::copy(p, p + w.size(), w.data());
            p += w.size();
            Eigen::VectorXd b(fan_out);
            std::copy(p, p + fan_out, b.data());
            p += fan_out;
            net.weights.push_back(std::move(w));
            net.biases.push_back(std::move(b));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: missing field: ") + e.what());
    }
    return net;
}

void save_mlp(const Mlp& net, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + file);
    out << mlp_to_json(net);
    if (!out) throw IoError("write failed: " + file);
}

Mlp load_mlp(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open: " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    return mlp_from_json(ss.str());
}

}  // namespace spg
