#pragma once

#include "diffsumm/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace diffsumm {

struct PredictorConfig {
    int d_model = 128;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int d_feature = 1024;
    int t_embed_dim = 128; // must equal d_model; the embedding is added to score tokens
    bool self_attention = false;
    bool positional_embedding = true; // sinusoidal frame-position code on both token streams
    double position_scale = 1.0;      // amplitude of that code; larger values sharpen position matching
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const PredictorConfig&) const = default;
};

/// y = x * weight + bias, weight is (in x out), bias is (1 x out).
struct Linear {
    Eigen::MatrixXd weight;
    Eigen::MatrixXd bias;
};

struct LayerNormParams {
    Eigen::MatrixXd gain;
    Eigen::MatrixXd bias;
};

struct AttentionParams {
    Linear query;
    Linear key;
    Linear value;
    Linear out;
};

struct PredictorBlock {
    AttentionParams self_attn; // empty unless config.self_attention
    LayerNormParams self_norm;
    AttentionParams cross_attn;
    LayerNormParams norm1;
    Linear ff1;
    Linear ff2;
    LayerNormParams norm2;
};

/// All trainable tensors of the noise predictor. The same type doubles as
/// the gradient container and the Adam moment container.
struct PredictorParams {
    PredictorConfig config;
    Linear score_embed;
    Linear feature_key;
    Linear feature_value;
    std::vector<PredictorBlock> blocks;
    Linear head;

    /// Calls fn(name, matrix) for every tensor in declaration order.
    template <class Fn> void for_each(Fn&& fn) { visit(*this, fn); }
    template <class Fn> void for_each(Fn&& fn) const { visit(*this, fn); }

    std::size_t parameter_count() const;
    std::size_t tensor_count() const;

    /// Same shapes, all zeros.
    PredictorParams zeros_like() const;

private:
    template <class Self, class Fn> static void visit(Self& p, Fn& fn);
};

PredictorParams init_predictor(const PredictorConfig& cfg);

/// Sinusoidal embedding with geometrically spaced frequencies; first half sin, second half cos.
std::vector<double> timestep_embedding(int t, int dim);

std::vector<double> predict_noise(const PredictorParams& params, const NoisyScores& x_t, const FrameFeatures& f,
                                  int t);

double mse_loss(std::span<const double> eps, std::span<const double> eps_hat);

struct LossAndGradients {
    double loss = 0.0;
    PredictorParams grads;
};

LossAndGradients loss_and_gradients(const PredictorParams& params, const NoisyScores& x_t, const FrameFeatures& f,
                                    int t, std::span<const double> eps);

struct OptimizerState {
    PredictorParams first_moment;
    PredictorParams second_moment;
    std::uint64_t step = 0;
    double base_lr = 2e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

OptimizerState make_optimizer(const PredictorParams& params, double base_lr = 2e-4, double weight_decay = 0.01);

/// One Adam update of a single tensor; `step` is the already-incremented step count.
void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& first_moment,
                 Eigen::MatrixXd& second_moment, const OptimizerState& hyper, std::uint64_t step, double lr);

/// Adam with bias correction plus decoupled weight decay (-lr * wd * theta).
void adam_step(PredictorParams& params, const PredictorParams& grads, OptimizerState& opt, double lr);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    PredictorConfig config;
    PredictorParams params;
    std::optional<OptimizerState> optimizer;
};

void save_checkpoint(const PredictorParams& params, const OptimizerState* opt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// As above, and fails with ConfigError when the stored config differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const PredictorConfig& expected);

std::string config_block(const PredictorConfig& cfg);

// ---------------------------------------------------------------------------

template <class Self, class Fn> void PredictorParams::visit(Self& p, Fn& fn) {
    auto linear = [&](std::string_view prefix, auto& lin) {
        fn(std::string(prefix) + ".weight", lin.weight);
        fn(std::string(prefix) + ".bias", lin.bias);
    };
    auto norm = [&](std::string_view prefix, auto& ln) {
        fn(std::string(prefix) + ".gain", ln.gain);
        fn(std::string(prefix) + ".bias", ln.bias);
    };
    auto attention = [&](const std::string& prefix, auto& at) {
        linear(prefix + ".query", at.query);
        linear(prefix + ".key", at.key);
        linear(prefix + ".value", at.value);
        linear(prefix + ".out", at.out);
    };
    linear("score_embed", p.score_embed);
    linear("feature_key", p.feature_key);
    linear("feature_value", p.feature_value);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        auto& b = p.blocks[l];
        const std::string prefix = "blocks." + std::to_string(l);
        if (p.config.self_attention) {
            attention(prefix + ".self_attn", b.self_attn);
            norm(prefix + ".self_norm", b.self_norm);
        }
        attention(prefix + ".cross_attn", b.cross_attn);
        norm(prefix + ".norm1", b.norm1);
        linear(prefix + ".ff1", b.ff1);
        linear(prefix + ".ff2", b.ff2);
        norm(prefix + ".norm2", b.norm2);
    }
    linear("head", p.head);
}

} // namespace diffsumm
