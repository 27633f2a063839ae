#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "shapegem/autoencoder.hpp"
#include "shapegem/errors.hpp"

using namespace shapegem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_batch(int rows, int cols, std::uint64_t seed, double lo = 0.1,
                      double hi = 0.9) {
    std::mt19937_64 engine(seed);
    return MatrixXd::NullaryExpr(rows, cols, [&](Eigen::Index, Eigen::Index) {
        return lo + (hi - lo) * static_cast<double>(engine() >> 11) * 0x1.0p-53;
    });
}

// Weights into/out of every hidden layer stay, but biases cancel the input so
// every pre-activation is zero; with inputs at 0.5 the net reproduces them
// exactly despite nonzero weights.
SparseAutoencoder half_fixed_point_net(int n_in, std::uint64_t seed) {
    SparseAutoencoder ae = init_autoencoder(n_in, seed);
    MatrixXd activation = MatrixXd::Constant(n_in, 1, 0.5);
    for (int layer = 0; layer < 4; ++layer) {
        ae.biases[layer] = -(ae.weights[layer] * activation.col(0));
        activation = MatrixXd::Constant(ae.weights[layer].rows(), 1, 0.5);
    }
    return ae;
}

} // namespace

TEST_CASE("initialization is deterministic per seed with the right shapes") {
    const auto a = init_autoencoder(55, 9);
    const auto b = init_autoencoder(55, 9);
    const auto c = init_autoencoder(55, 10);
    CHECK(a.weights[0] == b.weights[0]);
    CHECK(a.weights[3] == b.weights[3]);
    CHECK(a.weights[0] != c.weights[0]);

    CHECK(a.weights[0].rows() == 10);
    CHECK(a.weights[0].cols() == 55);
    CHECK(a.weights[1].rows() == 10);
    CHECK(a.weights[1].cols() == 10);
    CHECK(a.weights[2].rows() == 10);
    CHECK(a.weights[2].cols() == 10);
    CHECK(a.weights[3].rows() == 55);
    CHECK(a.weights[3].cols() == 10);
    for (int layer = 0; layer < 4; ++layer) {
        CHECK(a.biases[layer].cwiseAbs().maxCoeff() == 0.0);
        const double r = std::sqrt(6.0 / (a.weights[layer].rows() +
                                          a.weights[layer].cols()));
        CHECK(a.weights[layer].cwiseAbs().maxCoeff() <= r);
    }
}

TEST_CASE("zero parameters encode everything to one half") {
    SparseAutoencoder ae = init_autoencoder(7, 1);
    for (auto& w : ae.weights) {
        w.setZero();
    }
    const VectorXd code = encode(ae, VectorXd::Constant(7, 3.5));
    for (int j = 0; j < code.size(); ++j) {
        CHECK(code[j] == doctest::Approx(0.5).epsilon(1e-15));
    }
}

TEST_CASE("codes stay strictly inside (0, 1)") {
    const auto ae = init_autoencoder(12, 4);
    const MatrixXd batch = random_batch(12, 20, 5, -50.0, 50.0);
    const MatrixXd codes = encode_batch(ae, batch);
    CHECK(codes.minCoeff() > 0.0);
    CHECK(codes.maxCoeff() < 1.0);
}

TEST_CASE("encode matches a hand-rolled two-layer forward pass") {
    SparseAutoencoder ae = init_autoencoder(3, 6);
    const VectorXd x = (VectorXd(3) << 0.2, 0.7, 0.4).finished();

    // Plain loops, no Eigen products.
    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double h1[10];
    for (int i = 0; i < 10; ++i) {
        double acc = ae.biases[0][i];
        for (int j = 0; j < 3; ++j) {
            acc += ae.weights[0](i, j) * x[j];
        }
        h1[i] = sigmoid(acc);
    }
    double h2[10];
    for (int i = 0; i < 10; ++i) {
        double acc = ae.biases[1][i];
        for (int j = 0; j < 10; ++j) {
            acc += ae.weights[1](i, j) * h1[j];
        }
        h2[i] = sigmoid(acc);
    }

    const VectorXd code = encode(ae, x);
    for (int i = 0; i < 10; ++i) {
        CHECK(code[i] == doctest::Approx(h2[i]).epsilon(1e-14));
    }
}

TEST_CASE("perfect reconstruction gives zero loss and pure decay gradients") {
    const int n_in = 6;
    const SparseAutoencoder ae = half_fixed_point_net(n_in, 21);
    const MatrixXd batch = MatrixXd::Constant(n_in, 1, 0.5);

    AeTrainConfig cfg;
    cfg.sparsity_weight = 0.0;
    cfg.weight_decay = 0.0;
    const auto [loss, grads] = loss_and_gradient(ae, batch, cfg);
    CHECK(loss == doctest::Approx(0.0).epsilon(1e-24));
    for (int layer = 0; layer < 4; ++layer) {
        CHECK(grads.weights[layer].cwiseAbs().maxCoeff() < 1e-15);
        CHECK(grads.biases[layer].cwiseAbs().maxCoeff() < 1e-15);
    }

    // With decay on and the data term still zeroed, dL/dW = lambda_w * W.
    AeTrainConfig decay = cfg;
    decay.weight_decay = 0.25;
    const auto [loss2, grads2] = loss_and_gradient(ae, batch, decay);
    for (int layer = 0; layer < 4; ++layer) {
        CHECK((grads2.weights[layer] - 0.25 * ae.weights[layer])
                  .cwiseAbs()
                  .maxCoeff() < 1e-15);
    }
    CHECK(loss2 == doctest::Approx(0.125 * (ae.weights[0].squaredNorm() +
                                            ae.weights[1].squaredNorm() +
                                            ae.weights[2].squaredNorm() +
                                            ae.weights[3].squaredNorm()))
                       .epsilon(1e-12));
}

TEST_CASE("backprop matches central finite differences on a toy net") {
    const SparseAutoencoder ae = init_autoencoder(5, 33);
    const MatrixXd batch = random_batch(5, 7, 77);
    AeTrainConfig cfg;
    cfg.sparsity_target = 0.05;
    cfg.sparsity_weight = 0.5;
    cfg.weight_decay = 0.01;

    const auto [loss, grads] = loss_and_gradient(ae, batch, cfg);
    CHECK(std::isfinite(loss));

    const double h = 1e-5;
    double worst = 0.0;
    auto check_param = [&](auto get, auto set, double analytic) {
        SparseAutoencoder probe = ae;
        const double original = get(probe);
        set(probe, original + h);
        const double up = loss_and_gradient(probe, batch, cfg).first;
        set(probe, original - h);
        const double down = loss_and_gradient(probe, batch, cfg).first;
        const double numeric = (up - down) / (2.0 * h);
        const double rel = std::abs(analytic - numeric) /
                           std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, rel);
    };

    for (int layer = 0; layer < 4; ++layer) {
        for (Eigen::Index r = 0; r < ae.weights[layer].rows(); ++r) {
            for (Eigen::Index c = 0; c < ae.weights[layer].cols(); ++c) {
                check_param(
                    [&](SparseAutoencoder& net) { return net.weights[layer](r, c); },
                    [&](SparseAutoencoder& net, double v) {
                        net.weights[layer](r, c) = v;
                    },
                    grads.weights[layer](r, c));
            }
        }
        for (Eigen::Index r = 0; r < ae.biases[layer].size(); ++r) {
            check_param(
                [&](SparseAutoencoder& net) { return net.biases[layer][r]; },
                [&](SparseAutoencoder& net, double v) { net.biases[layer][r] = v; },
                grads.biases[layer][r]);
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    const SparseAutoencoder ae = init_autoencoder(6, 3);
    const MatrixXd batch = random_batch(6, 10, 4);
    AeTrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 10;
    const AeTrainResult result = train_autoencoder(ae, batch, cfg);
    for (int layer = 0; layer < 4; ++layer) {
        CHECK(result.model.weights[layer] == ae.weights[layer]);
        CHECK(result.model.biases[layer] == ae.biases[layer]);
    }
}

TEST_CASE("training drives reconstruction error below 1% of the variance proxy") {
    const int n_in = 8;
    std::mt19937_64 engine(12);
    VectorXd x(n_in);
    for (int j = 0; j < n_in; ++j) {
        x[j] = 0.1 + 0.8 * static_cast<double>(engine() >> 11) * 0x1.0p-53;
    }
    const MatrixXd batch = x.replicate(1, 50);

    AeTrainConfig cfg; // spec defaults: lr .01, momentum .9, 500 epochs
    cfg.seed = 12;
    const AeTrainResult result =
        train_autoencoder(init_autoencoder(n_in, 12), batch, cfg);

    REQUIRE(result.epoch_loss.size() == 500);
    CHECK(result.epoch_loss[499] <= result.epoch_loss[0]);

    // Reconstruction MSE per entry vs. mean squared deviation from 0.5.
    MatrixXd a = batch;
    for (int layer = 0; layer < 4; ++layer) {
        a = (1.0 / (1.0 + (-((result.model.weights[layer] * a).colwise() +
                             result.model.biases[layer]))
                              .array()
                              .exp()))
                .matrix();
    }
    const double mse = (a - batch).squaredNorm() /
                       static_cast<double>(batch.size());
    const double proxy = (x.array() - 0.5).square().mean();
    CHECK(mse < 0.01 * proxy);
}

TEST_CASE("training is bit-deterministic and loss is batch-order invariant") {
    const MatrixXd batch = random_batch(6, 9, 91);
    AeTrainConfig cfg;
    cfg.epochs = 40;
    cfg.seed = 17;
    const auto first = train_autoencoder(init_autoencoder(6, 17), batch, cfg);
    const auto second = train_autoencoder(init_autoencoder(6, 17), batch, cfg);
    for (int layer = 0; layer < 4; ++layer) {
        CHECK(first.model.weights[layer] == second.model.weights[layer]);
        CHECK(first.model.biases[layer] == second.model.biases[layer]);
    }

    MatrixXd shuffled(6, 9);
    const int order[9] = {4, 7, 0, 8, 2, 6, 1, 5, 3};
    for (int i = 0; i < 9; ++i) {
        shuffled.col(i) = batch.col(order[i]);
    }
    const auto ae = init_autoencoder(6, 17);
    const double loss_a = loss_and_gradient(ae, batch, cfg).first;
    const double loss_b = loss_and_gradient(ae, shuffled, cfg).first;
    CHECK(loss_a == doctest::Approx(loss_b).epsilon(1e-12));
}

TEST_CASE("divergent training reports NonFiniteLoss with the epoch") {
    const MatrixXd batch = random_batch(5, 8, 44);
    AeTrainConfig cfg;
    cfg.lr = 1e8;
    cfg.epochs = 200;
    CHECK_THROWS_AS(train_autoencoder(init_autoencoder(5, 44), batch, cfg),
                    NonFiniteLoss);
}

TEST_CASE("input dimension mismatches raise DimensionError") {
    const auto ae = init_autoencoder(6, 2);
    CHECK_THROWS_AS(encode(ae, VectorXd::Zero(5)), DimensionError);
    AeTrainConfig cfg;
    CHECK_THROWS_AS(loss_and_gradient(ae, MatrixXd::Zero(7, 3), cfg), DimensionError);
    CHECK_THROWS_AS(loss_and_gradient(ae, MatrixXd(6, 0), cfg), DimensionError);
}
