#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapegem/volume.hpp"

namespace shapegem {

/// Synthetic population of star-shaped surfaces on a G x G latitude-
/// longitude sphere grid (poles merged, M = G*(G-2)+2). Components differ by
/// their fixed radial bump patterns; within-component variation comes from a
/// low-dimensional latent field of smooth spherical harmonics.
struct SynthConfig {
    int k = 3;
    int grid = 34;              // G
    int n_per_component = 34;   // total cases = k * n_per_component
    int latent_dim = 4;         // <= 8
    double latent_amplitude = 0.7;
    std::uint64_t seed = 0;
    std::array<int, 3> dims{64, 64, 64};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    double inside = 0.8;
    double outside = 0.2;
    double edge_width = 1.0; // voxels; <= 0 gives a hard step
    double noise_sigma = 0.05;
    double bias_amplitude = 0.0;
    double base_radius = 16.0;
    double bump_amplitude = 7.0;
    double bump_width = 0.5; // radians
    std::vector<int> bumps_per_component; // empty: component z gets z+2 bumps
};

/// Radii at the grid nodes, landmark-indexed; rendering interpolates these
/// bilinearly in (theta, phi).
struct RadialGrid {
    int grid = 0;
    Eigen::VectorXd values;
};

struct SynthCase {
    Eigen::VectorXd shape;
    IntensityVolume image;
    IntensityVolume label;
    int component_id = 0;
};

struct PlantedTruth {
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    std::vector<Eigen::VectorXd> component_means; // zero-latent template shapes
};

struct SynthPopulation {
    std::vector<SynthCase> train;
    std::vector<SynthCase> test;
    std::vector<std::array<int, 3>> triangles;
    PlantedTruth truth;
};

/// Shapes without the rendered volumes; identical to the shapes produced by
/// generate_population for the same config.
struct SynthShapes {
    std::vector<Eigen::VectorXd> train;
    std::vector<Eigen::VectorXd> test;
    std::vector<int> train_labels;
    std::vector<int> test_labels;
    std::vector<Eigen::VectorXd> component_means;
};

int synth_landmark_count(int grid);

/// Outward-oriented triangulation of the sphere grid.
std::vector<std::array<int, 3>> sphere_triangles(int grid);

/// Deterministic per seed; cases are i.i.d. across component ids with
/// uniform proportions; split is by index with floor(total/5) test cases.
/// Throws ConfigError on invalid parameters or any non-star-shaped case.
SynthPopulation generate_population(const SynthConfig& cfg);
SynthShapes generate_shapes(const SynthConfig& cfg);

/// Renders one radial field into (image, label) volumes. The label marks
/// voxel centers strictly inside the interpolated radial surface; the image
/// blends inside/outside intensities through a sigmoid edge, then adds
/// Gaussian noise and an optional smooth bias field.
std::pair<IntensityVolume, IntensityVolume> render_volume(const RadialGrid& field,
                                                          const SynthConfig& cfg,
                                                          std::uint64_t noise_seed);

/// Writes volumes, per-case landmark CSVs, and `manifest.json` (cases,
/// component ids, split, seed, grid triangles) into dir.
void write_population(const SynthPopulation& population, const SynthConfig& cfg,
                      const std::string& dir);

} // namespace shapegem
