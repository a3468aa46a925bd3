#include "posern/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace posern::nn {

namespace {

LinearBlock make_block(int in, int out, double dropout_rate, std::mt19937_64& rng) {
    LinearBlock blk;
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    blk.W.resize(out, in);
    for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) {
            blk.W(r, c) = dist(rng);
        }
    }
    blk.b = VectorXd::Zero(out);
    blk.bn_gamma = VectorXd::Ones(out);
    blk.bn_beta = VectorXd::Zero(out);
    blk.bn_running_mean = VectorXd::Zero(out);
    blk.bn_running_var = VectorXd::Ones(out);
    blk.dropout_rate = dropout_rate;
    return blk;
}

MatrixXd linear(const LinearBlock& blk, const MatrixXd& x) {
    return (x * blk.W.transpose()).rowwise() + blk.b.transpose();
}

MatrixXd block_eval(const LinearBlock& blk, const MatrixXd& x, double eps) {
    const MatrixXd lin = linear(blk, x);
    const RowVectorXd istd =
        (blk.bn_running_var.transpose().array() + eps).sqrt().inverse().matrix();
    MatrixXd bn = (lin.rowwise() - blk.bn_running_mean.transpose())
                      .array()
                      .rowwise() *
                  (istd.array() * blk.bn_gamma.transpose().array());
    bn.array().rowwise() += blk.bn_beta.transpose().array();
    return bn.cwiseMax(0.0);
}

void block_train(const LinearBlock& blk, const MatrixXd& x, double eps, std::mt19937_64& rng,
                 BlockTape& tape) {
    const auto n = static_cast<double>(x.rows());
    tape.input = x;
    tape.lin = linear(blk, x);
    tape.mean = tape.lin.colwise().mean();
    tape.var = (tape.lin.rowwise() - tape.mean).array().square().colwise().sum() / n;
    const RowVectorXd istd = (tape.var.array() + eps).sqrt().inverse().matrix();
    tape.xhat = (tape.lin.rowwise() - tape.mean).array().rowwise() * istd.array();
    tape.bn_out = tape.xhat.array().rowwise() * blk.bn_gamma.transpose().array();
    tape.bn_out.array().rowwise() += blk.bn_beta.transpose().array();
    tape.relu_out = tape.bn_out.cwiseMax(0.0);
    if (blk.dropout_rate > 0.0) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double keep_scale = 1.0 / (1.0 - blk.dropout_rate);
        tape.dropout_mask.resize(tape.relu_out.rows(), tape.relu_out.cols());
        for (long r = 0; r < tape.dropout_mask.rows(); ++r) {
            for (long c = 0; c < tape.dropout_mask.cols(); ++c) {
                tape.dropout_mask(r, c) = unif(rng) >= blk.dropout_rate ? keep_scale : 0.0;
            }
        }
        tape.out = tape.relu_out.cwiseProduct(tape.dropout_mask);
    } else {
        tape.dropout_mask.resize(0, 0);
        tape.out = tape.relu_out;
    }
}

/// Backprop through one block; returns dL/d(input) and fills the block grads.
MatrixXd block_backward(const LinearBlock& blk, const BlockTape& tape, const MatrixXd& dout,
                        double eps, BlockGrads& grads) {
    MatrixXd drelu = dout;
    if (tape.dropout_mask.size() > 0) {
        drelu = dout.cwiseProduct(tape.dropout_mask);
    }
    const MatrixXd dbn =
        drelu.cwiseProduct((tape.bn_out.array() > 0.0).cast<double>().matrix());

    grads.bn_gamma = dbn.cwiseProduct(tape.xhat).colwise().sum().transpose();
    grads.bn_beta = dbn.colwise().sum().transpose();

    const auto n = static_cast<double>(tape.lin.rows());
    const Eigen::ArrayXd istd = (tape.var.transpose().array() + eps).sqrt().inverse();
    const MatrixXd dxhat = dbn.array().rowwise() * blk.bn_gamma.transpose().array();
    const MatrixXd centered = tape.lin.rowwise() - tape.mean;

    const Eigen::ArrayXd dvar =
        (dxhat.cwiseProduct(centered).colwise().sum().transpose().array()) * (-0.5) *
        istd.pow(3);
    const Eigen::ArrayXd dmean =
        -(dxhat.colwise().sum().transpose().array()) * istd +
        dvar * (-2.0 / n) * centered.colwise().sum().transpose().array();

    MatrixXd dlin = dxhat.array().rowwise() * istd.transpose();
    dlin.noalias() += centered * (2.0 / n) * dvar.matrix().asDiagonal();
    dlin.array().rowwise() += (dmean / n).transpose();

    grads.W = dlin.transpose() * tape.input;
    grads.b = dlin.colwise().sum().transpose();
    return dlin * blk.W;
}

} // namespace

MlpModel make_mlp(int input_dim, int hidden_dim, int output_dim, double dropout_rate,
                  std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) {
        throw DimensionMismatch("network dimensions must be positive");
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw DimensionMismatch("dropout_rate must be in [0, 1)");
    }
    std::mt19937_64 rng(seed);
    MlpModel model;
    model.input_dim = input_dim;
    model.hidden_dim = hidden_dim;
    model.output_dim = output_dim;
    model.block1 = make_block(input_dim, hidden_dim, dropout_rate, rng);
    model.block2 = make_block(hidden_dim, hidden_dim, dropout_rate, rng);
    const double bound = std::sqrt(6.0 / static_cast<double>(hidden_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    model.w_out.resize(output_dim, hidden_dim);
    for (int r = 0; r < output_dim; ++r) {
        for (int c = 0; c < hidden_dim; ++c) {
            model.w_out(r, c) = dist(rng);
        }
    }
    model.b_out = VectorXd::Zero(output_dim);
    return model;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    auto zero_block = [](const LinearBlock& blk) {
        BlockGrads bg;
        bg.W = MatrixXd::Zero(blk.W.rows(), blk.W.cols());
        bg.b = VectorXd::Zero(blk.b.size());
        bg.bn_gamma = VectorXd::Zero(blk.bn_gamma.size());
        bg.bn_beta = VectorXd::Zero(blk.bn_beta.size());
        return bg;
    };
    g.block1 = zero_block(model.block1);
    g.block2 = zero_block(model.block2);
    g.w_out = MatrixXd::Zero(model.w_out.rows(), model.w_out.cols());
    g.b_out = VectorXd::Zero(model.b_out.size());
    return g;
}

AdamState AdamState::init(const MlpModel& model) {
    AdamState s;
    s.m = Gradients::zeros_like(model);
    s.v = Gradients::zeros_like(model);
    s.t = 0;
    return s;
}

MatrixXd forward_eval(const MlpModel& model, const MatrixXd& batch) {
    if (batch.cols() != model.input_dim) {
        throw DimensionMismatch("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, expected " + std::to_string(model.input_dim));
    }
    const MatrixXd h1 = block_eval(model.block1, batch, model.bn_eps);
    const MatrixXd h2 = block_eval(model.block2, h1, model.bn_eps);
    return (h2 * model.w_out.transpose()).rowwise() + model.b_out.transpose();
}

MatrixXd forward_train(const MlpModel& model, const MatrixXd& batch, std::mt19937_64& rng,
                       Tape& tape) {
    if (batch.cols() != model.input_dim) {
        throw DimensionMismatch("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, expected " + std::to_string(model.input_dim));
    }
    if (batch.rows() < 2) {
        throw DimensionMismatch("Train-mode forward needs a batch of at least 2 rows");
    }
    block_train(model.block1, batch, model.bn_eps, rng, tape.block1);
    block_train(model.block2, tape.block1.out, model.bn_eps, rng, tape.block2);
    tape.out_input = tape.block2.out;
    return (tape.out_input * model.w_out.transpose()).rowwise() + model.b_out.transpose();
}

void update_running_stats(MlpModel& model, const Tape& tape, double momentum) {
    auto update = [momentum](LinearBlock& blk, const BlockTape& bt) {
        blk.bn_running_mean =
            (1.0 - momentum) * blk.bn_running_mean + momentum * bt.mean.transpose();
        blk.bn_running_var =
            (1.0 - momentum) * blk.bn_running_var + momentum * bt.var.transpose();
    };
    update(model.block1, tape.block1);
    update(model.block2, tape.block2);
}

std::pair<double, MatrixXd> mse_loss(const MatrixXd& pred, const MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw DimensionMismatch("mse_loss: shape mismatch");
    }
    const MatrixXd diff = pred - target;
    const auto count = static_cast<double>(pred.size());
    const double loss = diff.array().square().sum() / count;
    return {loss, (2.0 / count) * diff};
}

std::pair<double, MatrixXd> masked_mse_loss(const MatrixXd& pred, const MatrixXd& target,
                                            const MatrixXd& mask) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols() ||
        pred.rows() != mask.rows() || pred.cols() != mask.cols()) {
        throw DimensionMismatch("masked_mse_loss: shape mismatch");
    }
    const MatrixXd keep = (mask.array() != 0.0).cast<double>();
    const double count = keep.sum();
    if (count == 0.0) {
        return {0.0, MatrixXd::Zero(pred.rows(), pred.cols())};
    }
    const MatrixXd diff = (pred - target).cwiseProduct(keep);
    const double loss = diff.array().square().sum() / count;
    return {loss, (2.0 / count) * diff};
}

Gradients backward(const MlpModel& model, const Tape& tape, const MatrixXd& loss_grad) {
    Gradients grads;
    grads.w_out = loss_grad.transpose() * tape.out_input;
    grads.b_out = loss_grad.colwise().sum().transpose();
    const MatrixXd d2 = loss_grad * model.w_out;
    const MatrixXd d1 = block_backward(model.block2, tape.block2, d2, model.bn_eps, grads.block2);
    block_backward(model.block1, tape.block1, d1, model.bn_eps, grads.block1);
    return grads;
}

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state, const TrainConfig& cfg) {
    state.t += 1;
    const long t = state.t;
    auto step_block = [&](LinearBlock& blk, const BlockGrads& g, BlockGrads& m, BlockGrads& v) {
        adam_update(blk.W, g.W, m.W, v.W, t, cfg);
        adam_update(blk.b, g.b, m.b, v.b, t, cfg);
        adam_update(blk.bn_gamma, g.bn_gamma, m.bn_gamma, v.bn_gamma, t, cfg);
        adam_update(blk.bn_beta, g.bn_beta, m.bn_beta, v.bn_beta, t, cfg);
    };
    step_block(model.block1, grads.block1, state.m.block1, state.v.block1);
    step_block(model.block2, grads.block2, state.m.block2, state.v.block2);
    adam_update(model.w_out, grads.w_out, state.m.w_out, state.v.w_out, t, cfg);
    adam_update(model.b_out, grads.b_out, state.m.b_out, state.v.b_out, t, cfg);
}

std::vector<double> train_epochs(MlpModel& model, const MatrixXd& inputs, const MatrixXd& targets,
                                 const MatrixXd* mask, const TrainConfig& cfg) {
    const long n = inputs.rows();
    if (n == 0) {
        throw EmptyDataset("train_epochs: empty dataset");
    }
    if (targets.rows() != n || (mask && (mask->rows() != n || mask->cols() != targets.cols()))) {
        throw DimensionMismatch("train_epochs: inputs/targets/mask row mismatch");
    }

    // Separate stream from the init seed so model creation and training draws
    // never interleave.
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    AdamState state = AdamState::init(model);

    std::vector<long> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0L);

    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.epochs));

    Tape tape;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        double weight_sum = 0.0;
        for (long start = 0; start < n; start += cfg.batch_size) {
            const long rows = std::min<long>(cfg.batch_size, n - start);
            if (rows < 2) {
                continue;  // batch norm needs batch statistics
            }
            MatrixXd xb(rows, inputs.cols());
            MatrixXd tb(rows, targets.cols());
            MatrixXd mb;
            if (mask) {
                mb.resize(rows, targets.cols());
            }
            for (long r = 0; r < rows; ++r) {
                const long idx = order[static_cast<std::size_t>(start + r)];
                xb.row(r) = inputs.row(idx);
                tb.row(r) = targets.row(idx);
                if (mask) {
                    mb.row(r) = mask->row(idx);
                }
            }
            const MatrixXd pred = forward_train(model, xb, rng, tape);
            const auto [loss, grad] =
                mask ? masked_mse_loss(pred, tb, mb) : mse_loss(pred, tb);
            const double weight = mask ? (mb.array() != 0.0).cast<double>().sum()
                                       : static_cast<double>(pred.size());
            const Gradients grads = backward(model, tape, grad);
            adam_step(model, grads, state, cfg);
            update_running_stats(model, tape, cfg.bn_momentum);
            loss_sum += loss * weight;
            weight_sum += weight;
        }
        trace.push_back(weight_sum > 0.0 ? loss_sum / weight_sum : 0.0);
    }
    return trace;
}

} // namespace posern::nn
