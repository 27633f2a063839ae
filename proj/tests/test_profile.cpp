#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "shapegem/errors.hpp"
#include "shapegem/profile.hpp"
#include "shapegem/shape.hpp"
#include "shapegem/synth.hpp"
#include "support/testutil.hpp"

using namespace shapegem;
using Eigen::Matrix3Xd;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

TEST_CASE("mesh normals on a sphere grid point radially within 2 degrees") {
    SynthConfig cfg;
    cfg.k = 1;
    cfg.grid = 24;
    cfg.n_per_component = 2;
    cfg.latent_dim = 0;
    cfg.bump_amplitude = 0.0;
    cfg.base_radius = 10.0;
    const SynthShapes shapes = generate_shapes(cfg);
    const VectorXd sphere = shapes.component_means[0];
    const auto triangles = sphere_triangles(cfg.grid);

    const Matrix3Xd normals = estimate_normals(sphere, triangles);
    Vector3d center = Vector3d::Zero();
    for (int i = 0; i < landmark_count(sphere); ++i) {
        center += landmark(sphere, i);
    }
    center /= landmark_count(sphere);

    const double cos_limit = std::cos(2.0 * std::numbers::pi / 180.0);
    for (int i = 0; i < landmark_count(sphere); ++i) {
        const Vector3d radial = (landmark(sphere, i) - center).normalized();
        CHECK(normals.col(i).dot(radial) > cos_limit);
        CHECK(std::abs(normals.col(i).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("PCA normals on a planar patch are perpendicular to the plane") {
    const int side = 4;
    VectorXd shape(3 * side * side);
    std::mt19937_64 engine(3);
    auto uniform = [&]() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; };
    for (int i = 0; i < side * side; ++i) {
        shape[3 * i] = (i % side) + 0.3 * uniform();
        shape[3 * i + 1] = (i / side) + 0.3 * uniform();
        shape[3 * i + 2] = 2.0;
    }
    const Matrix3Xd normals = estimate_normals(shape);
    for (int i = 0; i < side * side; ++i) {
        CHECK(std::abs(normals.col(i)[2]) > 1.0 - 1e-6);
    }
}

TEST_CASE("normals are invariant under translation") {
    const VectorXd base = testutil::fibonacci_sphere_shape(24, 5.0, {0, 0, 0});
    VectorXd moved = base;
    for (int i = 0; i < 24; ++i) {
        moved.segment<3>(3 * i) += Vector3d(11.0, -7.0, 3.0);
    }
    const Matrix3Xd a = estimate_normals(base);
    const Matrix3Xd b = estimate_normals(moved);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);

    SynthConfig cfg;
    cfg.k = 1;
    cfg.grid = 10;
    cfg.n_per_component = 2;
    cfg.latent_dim = 0;
    const auto triangles = sphere_triangles(cfg.grid);
    const VectorXd sphere = generate_shapes(cfg).component_means[0];
    VectorXd sphere_moved = sphere;
    for (int i = 0; i < landmark_count(sphere); ++i) {
        sphere_moved.segment<3>(3 * i) += Vector3d(4.0, 4.0, -2.0);
    }
    const Matrix3Xd ma = estimate_normals(sphere, triangles);
    const Matrix3Xd mb = estimate_normals(sphere_moved, triangles);
    CHECK((ma - mb).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("degenerate neighborhoods are reported") {
    // Collinear landmarks: covariance rank 1.
    VectorXd line(3 * 12);
    for (int i = 0; i < 12; ++i) {
        line.segment<3>(3 * i) = Vector3d(static_cast<double>(i), 0.0, 0.0);
    }
    CHECK_THROWS_AS(estimate_normals(line), DegenerateNeighborhood);
    CHECK_THROWS_AS(estimate_normals(VectorXd::Zero(9)), DimensionError);
}

TEST_CASE("profiles of a constant volume are all zero") {
    const auto vol = testutil::constant_volume({16, 16, 16}, 2.0);
    ProfileSpec spec;
    const VectorXd feature =
        extract_profile(vol, {8, 8, 8}, Vector3d(0, 0, 1), spec);
    CHECK(feature.cwiseAbs().maxCoeff() == 0.0);
    CHECK(feature.size() == 55);
}

TEST_CASE("a linear ramp along the normal yields entries of 1/L") {
    const auto vol = testutil::ramp_volume({24, 24, 24}, {1.0, 0.0, 0.0});
    ProfileSpec spec; // ell = 5 -> L = 11
    REQUIRE(spec.line_length() == 11);
    const VectorXd feature =
        extract_profile(vol, {12, 12, 12}, Vector3d(1, 0, 0), spec);
    for (Eigen::Index i = 0; i < feature.size(); ++i) {
        CHECK(feature[i] == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
    }
}

TEST_CASE("features are invariant to positive affine intensity changes") {
    const auto vol = testutil::random_volume({20, 20, 20}, 5);
    IntensityVolume rescaled = vol;
    for (auto& v : rescaled.data) {
        v = 7.0 * v + 3.0;
    }
    IntensityVolume scaled_only = vol;
    for (auto& v : scaled_only.data) {
        v = 7.0 * v;
    }

    ProfileSpec spec;
    std::mt19937_64 engine(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector3d p(10.0 + normal(engine), 10.0 + normal(engine),
                         10.0 + normal(engine));
        const Vector3d n =
            Vector3d(normal(engine), normal(engine), normal(engine)).normalized();
        const VectorXd f = extract_profile(vol, p, n, spec);
        const VectorXd f_affine = extract_profile(rescaled, p, n, spec);
        const VectorXd f_scaled = extract_profile(scaled_only, p, n, spec);
        CHECK((f - f_affine).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((f - f_scaled).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("every non-zero line is L1-normalized") {
    const auto vol = testutil::random_volume({20, 20, 20}, 15);
    ProfileSpec spec;
    std::mt19937_64 engine(16);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector3d p(10.0 + normal(engine), 10.0 + normal(engine),
                         10.0 + normal(engine));
        const Vector3d n =
            Vector3d(normal(engine), normal(engine), normal(engine)).normalized();
        const VectorXd f = extract_profile(vol, p, n, spec);
        for (std::size_t line = 0; line < spec.offsets.size(); ++line) {
            const double total =
                f.segment(static_cast<Eigen::Index>(line) * spec.line_length(),
                          spec.line_length())
                    .cwiseAbs()
                    .sum();
            const bool zero_line = total == 0.0;
            CHECK((zero_line || std::abs(total - 1.0) < 1e-12));
        }
    }
}

TEST_CASE("unit-norm precondition on the profile normal is enforced") {
    const auto vol = testutil::constant_volume({8, 8, 8}, 0.0);
    ProfileSpec spec;
    CHECK_THROWS_AS(extract_profile(vol, {4, 4, 4}, Vector3d(1, 1, 0), spec),
                    DimensionError);
}

namespace {

struct TrainFixture {
    std::vector<IntensityVolume> volumes;
    std::vector<const IntensityVolume*> pointers;
    std::vector<VectorXd> shapes;

    TrainFixture(int pairs, int m, std::uint64_t seed, bool identical) {
        for (int p = 0; p < pairs; ++p) {
            volumes.push_back(
                testutil::random_volume({24, 24, 24}, identical ? seed : seed + p));
            shapes.push_back(testutil::fibonacci_sphere_shape(
                m, identical ? 7.0 : 7.0 + 0.02 * p, {12, 12, 12}));
        }
        for (const auto& v : volumes) {
            pointers.push_back(&v);
        }
    }
};

} // namespace

TEST_CASE("identical training pairs leave exactly the ridge covariance") {
    TrainFixture fixture(3, 16, 99, /*identical=*/true);
    ProfileTrainOptions opts;
    opts.n_levels = 1;
    opts.ae.epochs = 30;
    const ProfileModel model = train_profile_models(fixture.pointers, fixture.shapes,
                                                    opts);

    const auto& stats = model.at(0, 4);
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 10; ++c) {
            if (r == c) {
                CHECK(stats.sigma_f(r, c) == doctest::Approx(1e-12).epsilon(1e-3));
            } else {
                CHECK(std::abs(stats.sigma_f(r, c)) < 1e-15);
            }
        }
    }

    // The training profile scores zero against its own statistics.
    const Matrix3Xd normals = estimate_normals(fixture.shapes[0]);
    const VectorXd feature = extract_profile(
        *fixture.pointers[0], landmark(fixture.shapes[0], 4), normals.col(4),
        opts.spec);
    CHECK(profile_cost(model, 0, 4, feature) < 1e-12);
}

TEST_CASE("training fills the full (level, landmark) table with SPD covariances") {
    TrainFixture fixture(20, 32, 1234, /*identical=*/false);
    ProfileTrainOptions opts;
    opts.n_levels = 2;
    opts.ae.epochs = 25;
    const ProfileModel model = train_profile_models(fixture.pointers, fixture.shapes,
                                                    opts);
    REQUIRE(model.stats.size() == 2 * 32);
    CHECK(model.m == 32);
    for (const auto& stats : model.stats) {
        const Eigen::SelfAdjointEigenSolver<MatrixXd> solver(stats.sigma_f);
        CHECK(solver.eigenvalues().minCoeff() > 0.0);
        CHECK(stats.ae.has_value());
    }
}

TEST_CASE("raw-profile mode stores Gaussians over scaled profiles") {
    TrainFixture fixture(6, 12, 777, /*identical=*/false);
    ProfileTrainOptions opts;
    opts.n_levels = 1;
    opts.use_autoencoder = false;
    const ProfileModel model = train_profile_models(fixture.pointers, fixture.shapes,
                                                    opts);
    CHECK_FALSE(model.use_autoencoder);
    CHECK(model.at(0, 0).mu_f.size() == opts.spec.feature_length());
    CHECK_FALSE(model.at(0, 0).ae.has_value());
}

TEST_CASE("profile cost is invariant to the order of training pairs") {
    TrainFixture fixture(8, 12, 55, /*identical=*/false);
    ProfileTrainOptions opts;
    opts.n_levels = 1;
    opts.ae.epochs = 20;
    const ProfileModel forward = train_profile_models(fixture.pointers,
                                                      fixture.shapes, opts);

    std::vector<const IntensityVolume*> reversed_vols(fixture.pointers.rbegin(),
                                                      fixture.pointers.rend());
    std::vector<VectorXd> reversed_shapes(fixture.shapes.rbegin(),
                                          fixture.shapes.rend());
    const ProfileModel backward =
        train_profile_models(reversed_vols, reversed_shapes, opts);

    const Matrix3Xd normals = estimate_normals(fixture.shapes[2]);
    for (int i = 0; i < 12; i += 3) {
        const VectorXd feature = extract_profile(
            *fixture.pointers[2], landmark(fixture.shapes[2], i), normals.col(i),
            opts.spec);
        CHECK(profile_cost(forward, 0, i, feature) ==
              doctest::Approx(profile_cost(backward, 0, i, feature)).epsilon(1e-8));
    }
}

TEST_CASE("held-in Mahalanobis costs sit in the chi-squared band") {
    TrainFixture fixture(40, 12, 2024, /*identical=*/false);
    ProfileTrainOptions opts;
    opts.n_levels = 1;
    opts.ae.epochs = 40;
    const ProfileModel model = train_profile_models(fixture.pointers, fixture.shapes,
                                                    opts);

    double total = 0.0;
    int count = 0;
    for (int landmark_id = 0; landmark_id < 8; ++landmark_id) {
        for (std::size_t pair = 0; pair < fixture.pointers.size(); ++pair) {
            const Matrix3Xd normals = estimate_normals(fixture.shapes[pair]);
            const VectorXd feature = extract_profile(
                *fixture.pointers[pair], landmark(fixture.shapes[pair], landmark_id),
                normals.col(landmark_id), opts.spec);
            total += profile_cost(model, 0, landmark_id, feature);
            ++count;
        }
    }
    const double mean_cost = total / count;
    CHECK(mean_cost > 5.0);
    CHECK(mean_cost < 20.0);
}

TEST_CASE("direct Mahalanobis checks: identity and dense-inverse oracle") {
    // Raw-profile model with a single center line of length 3.
    ProfileModel model;
    model.spec.ell = 1;
    model.spec.offsets = {{0.0, 0.0}};
    model.n_levels = 1;
    model.m = 1;
    model.use_autoencoder = false;

    LandmarkProfileStats stats;
    stats.lo = 0.0;
    stats.hi = 1.0;
    stats.mu_f = (VectorXd(3) << 0.1, 0.2, 0.3).finished();
    stats.sigma_f = MatrixXd::Identity(3, 3);
    stats.chol_l = Eigen::LLT<MatrixXd>(stats.sigma_f).matrixL();
    model.stats.push_back(stats);

    const VectorXd f = (VectorXd(3) << 0.4, 0.1, 0.5).finished();
    CHECK(profile_cost(model, 0, 0, f) ==
          doctest::Approx((f - stats.mu_f).squaredNorm()).epsilon(1e-14));
    CHECK(profile_cost(model, 0, 0, stats.mu_f) < 1e-24);

    MatrixXd cov(3, 3);
    cov << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.1;
    model.stats[0].sigma_f = cov;
    model.stats[0].chol_l = Eigen::LLT<MatrixXd>(cov).matrixL();
    const VectorXd diff = f - stats.mu_f;
    const double expected = diff.dot(cov.inverse() * diff);
    CHECK(profile_cost(model, 0, 0, f) == doctest::Approx(expected).epsilon(1e-10));

    CHECK_THROWS_AS(profile_cost(model, 0, 0, VectorXd::Zero(5)), DimensionError);
    CHECK_THROWS_AS(profile_cost(model, 1, 0, f), DimensionError);
}

TEST_CASE("profile model serialization round trip preserves costs") {
    testutil::TempDir dir("profile-json");
    TrainFixture fixture(5, 10, 31, /*identical=*/false);
    ProfileTrainOptions opts;
    opts.n_levels = 2;
    opts.ae.epochs = 15;
    const ProfileModel model = train_profile_models(fixture.pointers, fixture.shapes,
                                                    opts);
    save_profile_model(model, dir.file("profiles.json"));
    const ProfileModel loaded = load_profile_model(dir.file("profiles.json"));

    CHECK(loaded.n_levels == model.n_levels);
    CHECK(loaded.m == model.m);
    CHECK(loaded.use_autoencoder == model.use_autoencoder);
    const Matrix3Xd normals = estimate_normals(fixture.shapes[1]);
    for (int level = 0; level < 2; ++level) {
        for (int i = 0; i < 10; i += 4) {
            const VectorXd feature = extract_profile(
                *fixture.pointers[1], landmark(fixture.shapes[1], i), normals.col(i),
                opts.spec);
            CHECK(profile_cost(loaded, level, i, feature) ==
                  doctest::Approx(profile_cost(model, level, i, feature))
                      .epsilon(1e-12));
        }
    }
}
