#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace shapegem {

/// Deterministic sparse autoencoder with layer sizes
/// (n_in, 10, 10, 10, n_in) and logistic sigmoid on every hidden and output
/// unit. The encoder is n_in -> 10 -> 10; the code is the second hidden
/// activation; the decoder mirrors the encoder.
struct SparseAutoencoder {
    static constexpr int kHidden = 10;
    int n_in = 0;
    std::array<Eigen::MatrixXd, 4> weights;
    std::array<Eigen::VectorXd, 4> biases;

    int code_dim() const { return kHidden; }
};

struct AeTrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int epochs = 500;
    double sparsity_target = 0.05; // rho
    double sparsity_weight = 0.1;  // beta_s
    double weight_decay = 1e-4;    // lambda_w
    std::uint64_t seed = 0;
};

struct AeGradients {
    std::array<Eigen::MatrixXd, 4> weights;
    std::array<Eigen::VectorXd, 4> biases;
};

/// Weights ~ U(-r, r) with r = sqrt(6 / (fan_in + fan_out)); biases zero.
SparseAutoencoder init_autoencoder(int n_in, std::uint64_t seed);

/// Code (second encoder activation) for one input; entries in (0, 1).
Eigen::VectorXd encode(const SparseAutoencoder& ae, const Eigen::VectorXd& x);

/// Codes for a batch given one column per sample.
Eigen::MatrixXd encode_batch(const SparseAutoencoder& ae, const Eigen::MatrixXd& X);

/// Full-batch loss (mean squared reconstruction error per sample
/// + KL sparsity penalty on both encoder hidden layers + L2 weight decay)
/// and its exact gradients, including the sparsity term's coupling through
/// the batch-mean activations.
std::pair<double, AeGradients> loss_and_gradient(const SparseAutoencoder& ae,
                                                 const Eigen::MatrixXd& batch,
                                                 const AeTrainConfig& cfg);

struct AeTrainResult {
    SparseAutoencoder model;
    std::vector<double> epoch_loss;
};

/// Full-batch gradient descent with momentum; bit-deterministic per seed and
/// config. Throws NonFiniteLoss (with the epoch index) on divergence.
AeTrainResult train_autoencoder(SparseAutoencoder ae, const Eigen::MatrixXd& data,
                                const AeTrainConfig& cfg);

} // namespace shapegem
