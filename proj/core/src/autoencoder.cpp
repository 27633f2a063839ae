#include "shapegem/autoencoder.hpp"

#include <cmath>
#include <string>

#include "shapegem/errors.hpp"
#include "shapegem/rng.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace shapegem {

namespace {

MatrixXd sigmoid(const MatrixXd& z) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
}

struct ForwardPass {
    // activations[0] is the input batch; activations[l] for l in 1..4 is the
    // sigmoid output of layer l.
    std::array<MatrixXd, 5> activations;
};

ForwardPass forward(const SparseAutoencoder& ae, const MatrixXd& X) {
    ForwardPass pass;
    pass.activations[0] = X;
    for (int layer = 0; layer < 4; ++layer) {
        pass.activations[layer + 1] = sigmoid(
            (ae.weights[layer] * pass.activations[layer]).colwise() +
            ae.biases[layer]);
    }
    return pass;
}

void check_input(const SparseAutoencoder& ae, const MatrixXd& X) {
    if (X.rows() != ae.n_in) {
        throw DimensionError("autoencoder input has " + std::to_string(X.rows()) +
                             " rows, expected " + std::to_string(ae.n_in));
    }
    if (X.cols() == 0) {
        throw DimensionError("autoencoder batch is empty");
    }
    if (!X.allFinite()) {
        throw DimensionError("autoencoder input contains non-finite values");
    }
}

} // namespace

SparseAutoencoder init_autoencoder(int n_in, std::uint64_t seed) {
    if (n_in < 1) {
        throw DimensionError("autoencoder needs n_in >= 1");
    }
    const int h = SparseAutoencoder::kHidden;
    SparseAutoencoder ae;
    ae.n_in = n_in;
    const std::array<std::pair<int, int>, 4> shapes = {
        std::pair{h, n_in}, {h, h}, {h, h}, {n_in, h}};
    Rng rng(seed);
    for (int layer = 0; layer < 4; ++layer) {
        const auto [rows, cols] = shapes[layer];
        const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
        ae.weights[layer].resize(rows, cols);
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) {
                ae.weights[layer](i, j) = (2.0 * rng.uniform() - 1.0) * r;
            }
        }
        ae.biases[layer] = VectorXd::Zero(rows);
    }
    return ae;
}

VectorXd encode(const SparseAutoencoder& ae, const VectorXd& x) {
    return encode_batch(ae, x).col(0);
}

MatrixXd encode_batch(const SparseAutoencoder& ae, const MatrixXd& X) {
    check_input(ae, X);
    MatrixXd a = X;
    for (int layer = 0; layer < 2; ++layer) {
        a = sigmoid((ae.weights[layer] * a).colwise() + ae.biases[layer]);
    }
    return a;
}

std::pair<double, AeGradients> loss_and_gradient(const SparseAutoencoder& ae,
                                                 const MatrixXd& batch,
                                                 const AeTrainConfig& cfg) {
    check_input(ae, batch);
    const double n_batch = static_cast<double>(batch.cols());
    const double rho = cfg.sparsity_target;

    const ForwardPass pass = forward(ae, batch);
    const MatrixXd& output = pass.activations[4];

    double loss = (output - batch).squaredNorm() / n_batch;

    // KL sparsity on the two encoder hidden layers; rho_hat is the batch
    // mean activation per unit.
    std::array<VectorXd, 2> rho_hat;
    for (int layer = 0; layer < 2; ++layer) {
        rho_hat[layer] = pass.activations[layer + 1].rowwise().mean();
        loss += cfg.sparsity_weight *
                (rho * (rho / rho_hat[layer].array()).log() +
                 (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat[layer].array())).log())
                    .sum();
    }
    for (const auto& w : ae.weights) {
        loss += 0.5 * cfg.weight_decay * w.squaredNorm();
    }
    if (!std::isfinite(loss)) {
        throw NonFiniteLoss("autoencoder loss is not finite");
    }

    AeGradients grads;
    // delta[l]: dL/dz for layer l (pre-activation), batch columns.
    MatrixXd delta = (2.0 / n_batch) * (output - batch).cwiseProduct(
                         output.cwiseProduct((1.0 - output.array()).matrix()));
    for (int layer = 3; layer >= 0; --layer) {
        grads.weights[layer] = delta * pass.activations[layer].transpose() +
                               cfg.weight_decay * ae.weights[layer];
        grads.biases[layer] = delta.rowwise().sum();
        if (layer == 0) {
            break;
        }
        MatrixXd upstream = ae.weights[layer].transpose() * delta;
        if (layer == 1 || layer == 2) {
            // Sparsity couples every sample through rho_hat of hidden layer
            // (layer - 1 in rho_hat indexing): d rho_hat / d a = 1/n.
            const VectorXd kl_grad =
                cfg.sparsity_weight / n_batch *
                (-rho / rho_hat[layer - 1].array() +
                 (1.0 - rho) / (1.0 - rho_hat[layer - 1].array()))
                    .matrix();
            upstream.colwise() += kl_grad;
        }
        const MatrixXd& a = pass.activations[layer];
        delta = upstream.cwiseProduct(
            a.cwiseProduct((1.0 - a.array()).matrix()));
    }
    return {loss, std::move(grads)};
}

AeTrainResult train_autoencoder(SparseAutoencoder ae, const MatrixXd& data,
                                const AeTrainConfig& cfg) {
    check_input(ae, data);
    if (cfg.epochs < 1) {
        throw ConfigError("training needs epochs >= 1");
    }

    AeGradients velocity;
    for (int layer = 0; layer < 4; ++layer) {
        velocity.weights[layer] = MatrixXd::Zero(ae.weights[layer].rows(),
                                                 ae.weights[layer].cols());
        velocity.biases[layer] = VectorXd::Zero(ae.biases[layer].size());
    }

    AeTrainResult result;
    result.epoch_loss.reserve(cfg.epochs);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        try {
            auto [loss, grads] = loss_and_gradient(ae, data, cfg);
            result.epoch_loss.push_back(loss);
            for (int layer = 0; layer < 4; ++layer) {
                velocity.weights[layer] = cfg.momentum * velocity.weights[layer] -
                                          cfg.lr * grads.weights[layer];
                velocity.biases[layer] = cfg.momentum * velocity.biases[layer] -
                                         cfg.lr * grads.biases[layer];
                ae.weights[layer] += velocity.weights[layer];
                ae.biases[layer] += velocity.biases[layer];
            }
        } catch (const NonFiniteLoss&) {
            throw NonFiniteLoss("training diverged at epoch " +
                                std::to_string(epoch));
        }
    }
    result.model = std::move(ae);
    return result;
}

} // namespace shapegem
