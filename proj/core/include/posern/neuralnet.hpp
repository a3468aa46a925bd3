#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "posern/errors.hpp"

namespace posern::nn {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Dense layer + batch normalization + ReLU + inverted dropout.
struct LinearBlock {
    MatrixXd W;             // out x in
    VectorXd b;
    VectorXd bn_gamma;
    VectorXd bn_beta;
    VectorXd bn_running_mean;
    VectorXd bn_running_var;
    double dropout_rate = 0.0;

    int in_dim() const { return static_cast<int>(W.cols()); }
    int out_dim() const { return static_cast<int>(W.rows()); }
};

/// Two linear blocks followed by a bare output dense layer.
struct MlpModel {
    LinearBlock block1;
    LinearBlock block2;
    MatrixXd w_out;         // output_dim x hidden_dim
    VectorXd b_out;
    int input_dim = 0;
    int hidden_dim = 0;
    int output_dim = 0;
    double bn_eps = 1e-5;
};

/// Seeded Kaiming-style uniform fan-in init; biases zero, gamma 1, beta 0,
/// running mean 0, running var 1.
MlpModel make_mlp(int input_dim, int hidden_dim, int output_dim, double dropout_rate,
                  std::uint64_t seed);

struct TrainConfig {
    double learning_rate = 0.001;
    int epochs = 20;
    int batch_size = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double bn_momentum = 0.1;   // running <- (1 - m) * running + m * batch
    std::uint64_t seed = 0;
    int hidden_dim = 1024;
    double dropout_rate = 0.5;
};

struct BlockGrads {
    MatrixXd W;
    VectorXd b;
    VectorXd bn_gamma;
    VectorXd bn_beta;
};

struct Gradients {
    BlockGrads block1;
    BlockGrads block2;
    MatrixXd w_out;
    VectorXd b_out;

    static Gradients zeros_like(const MlpModel& model);
};

struct AdamState {
    Gradients m;
    Gradients v;
    long t = 0;

    static AdamState init(const MlpModel& model);
};

/// Cached intermediates of a Train-mode forward pass.
struct BlockTape {
    MatrixXd input;         // batch x in
    MatrixXd lin;           // batch x out, W x + b
    RowVectorXd mean;       // batch statistics per unit
    RowVectorXd var;        // biased batch variance per unit
    MatrixXd xhat;          // normalized lin
    MatrixXd bn_out;        // gamma * xhat + beta
    MatrixXd relu_out;
    MatrixXd dropout_mask;  // 0 or 1/(1-p); empty when dropout_rate == 0
    MatrixXd out;
};

struct Tape {
    BlockTape block1;
    BlockTape block2;
    MatrixXd out_input;     // input to the output layer
};

/// Deterministic inference pass: running statistics, no dropout.
MatrixXd forward_eval(const MlpModel& model, const MatrixXd& batch);

/// Training pass: batch statistics and inverted dropout drawn from rng. Does not
/// touch running statistics; call update_running_stats with the tape afterwards.
/// Requires batch rows >= 2.
MatrixXd forward_train(const MlpModel& model, const MatrixXd& batch, std::mt19937_64& rng,
                       Tape& tape);

/// running <- (1 - momentum) * running + momentum * batch statistic.
void update_running_stats(MlpModel& model, const Tape& tape, double momentum);

/// Mean squared error over all entries and its gradient w.r.t. pred.
std::pair<double, MatrixXd> mse_loss(const MatrixXd& pred, const MatrixXd& target);

/// MSE over entries where mask != 0; masked-out entries contribute zero loss and
/// zero gradient. The mean is taken over the unmasked entry count.
std::pair<double, MatrixXd> masked_mse_loss(const MatrixXd& pred, const MatrixXd& target,
                                            const MatrixXd& mask);

/// Reverse-mode gradients of the scalar loss for every trainable parameter,
/// including the batch-statistics paths of batch normalization.
Gradients backward(const MlpModel& model, const Tape& tape, const MatrixXd& loss_grad);

/// One Adam update on a single tensor; t is the already-incremented step count.
template <typename Tensor>
void adam_update(Tensor& theta, const Tensor& grad, Tensor& m, Tensor& v, long t,
                 const TrainConfig& cfg) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = (cfg.adam_beta2 * v.array() + (1.0 - cfg.adam_beta2) * grad.array().square()).matrix();
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
    theta.array() -=
        cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
}

/// Adam step over every trainable tensor of the model (shared step counter).
void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, const TrainConfig& cfg);

/// Seeded shuffling + mini-batch Adam training with MSE (optionally masked).
/// Returns the mean training loss per epoch. mask may be nullptr.
std::vector<double> train_epochs(MlpModel& model, const MatrixXd& inputs, const MatrixXd& targets,
                                 const MatrixXd* mask, const TrainConfig& cfg);

} // namespace posern::nn
