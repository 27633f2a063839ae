// Microbenchmarks for the hot paths: trilinear sampling, profile extraction,
// mixture fitting, autoencoder epochs, local search, and voxelization.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "shapegem/autoencoder.hpp"
#include "shapegem/eval.hpp"
#include "shapegem/mixture.hpp"
#include "shapegem/profile.hpp"
#include "shapegem/segmentation.hpp"
#include "shapegem/shape.hpp"
#include "shapegem/synth.hpp"
#include "shapegem/volume.hpp"

using namespace shapegem;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

IntensityVolume make_noise_volume(std::array<int, 3> dims, std::uint64_t seed) {
    std::mt19937_64 engine(seed);
    std::vector<double> data(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    for (auto& v : data) {
        v = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    }
    return IntensityVolume(dims, {1, 1, 1}, {0, 0, 0}, std::move(data));
}

SynthConfig small_synth() {
    SynthConfig cfg;
    cfg.k = 2;
    cfg.grid = 14;
    cfg.n_per_component = 8;
    cfg.dims = {48, 48, 48};
    cfg.base_radius = 11.0;
    cfg.bump_amplitude = 4.0;
    return cfg;
}

void BM_TrilinearSample(benchmark::State& state) {
    const auto vol = make_noise_volume({64, 64, 64}, 1);
    std::mt19937_64 engine(2);
    std::vector<Vector3d> points(1024);
    for (auto& p : points) {
        for (int a = 0; a < 3; ++a) {
            p[a] = 63.0 * static_cast<double>(engine() >> 11) * 0x1.0p-53;
        }
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample(vol, points[i++ & 1023]));
    }
}
BENCHMARK(BM_TrilinearSample);

void BM_ExtractProfile(benchmark::State& state) {
    const auto vol = make_noise_volume({64, 64, 64}, 3);
    const ProfileSpec spec;
    const Vector3d p(32, 32, 32);
    const Vector3d n = Vector3d(1, 2, 3).normalized();
    for (auto _ : state) {
        benchmark::DoNotOptimize(extract_profile(vol, p, n, spec));
    }
}
BENCHMARK(BM_ExtractProfile);

void BM_BuildPyramid(benchmark::State& state) {
    const auto vol = make_noise_volume({64, 64, 64}, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_pyramid(vol, 2));
    }
}
BENCHMARK(BM_BuildPyramid);

void BM_AutoencoderEpoch(benchmark::State& state) {
    const auto ae = init_autoencoder(55, 5);
    std::mt19937_64 engine(6);
    const MatrixXd batch = MatrixXd::NullaryExpr(55, 80, [&](Eigen::Index, Eigen::Index) {
        return static_cast<double>(engine() >> 11) * 0x1.0p-53;
    });
    const AeTrainConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_and_gradient(ae, batch, cfg));
    }
}
BENCHMARK(BM_AutoencoderEpoch);

void BM_FitMixture(benchmark::State& state) {
    const SynthConfig cfg = small_synth();
    const SynthShapes shapes = generate_shapes(cfg);
    MatrixXd train(shapes.train[0].size(),
                   static_cast<Eigen::Index>(shapes.train.size()));
    for (std::size_t i = 0; i < shapes.train.size(); ++i) {
        train.col(static_cast<Eigen::Index>(i)) = shapes.train[i];
    }
    const ShapeDataset dataset(train);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            fit_mixture(dataset, FitOptions{.k = 2, .seed = 1, .max_iters = 10}));
    }
}
BENCHMARK(BM_FitMixture);

void BM_LocalSearch(benchmark::State& state) {
    static const SynthPopulation population = generate_population(small_synth());
    std::vector<const IntensityVolume*> volumes;
    std::vector<VectorXd> shape_list;
    for (const auto& item : population.train) {
        volumes.push_back(&item.image);
        shape_list.push_back(item.shape);
    }
    ProfileTrainOptions opts;
    opts.n_levels = 1;
    opts.ae.epochs = 30;
    static const ProfileModel model =
        train_profile_models(volumes, shape_list, opts, population.triangles);

    SegmentationConfig cfg;
    cfg.search_length = 4;
    cfg.n_levels = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(local_search(population.test[0].shape,
                                              population.test[0].image, model, 0,
                                              cfg, population.triangles));
    }
}
BENCHMARK(BM_LocalSearch);

void BM_Voxelize(benchmark::State& state) {
    static const SynthPopulation population = generate_population(small_synth());
    for (auto _ : state) {
        benchmark::DoNotOptimize(voxelize(population.test[0].shape,
                                          population.triangles,
                                          population.test[0].label.dims,
                                          population.test[0].label.spacing,
                                          population.test[0].label.origin));
    }
}
BENCHMARK(BM_Voxelize);

} // namespace

BENCHMARK_MAIN();
