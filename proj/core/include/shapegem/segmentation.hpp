#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapegem/mixture.hpp"
#include "shapegem/profile.hpp"
#include "shapegem/volume.hpp"

namespace shapegem {

enum class MStepMode { Soft, Hard };
enum class InitMode { GlobalMean, ComponentMean };

struct SegmentationConfig {
    int search_length = 4; // candidate steps per side, in level voxels
    int iters_per_level = 10;
    int n_levels = 2;
    std::optional<double> clamp_sd = 3.0; // nullopt disables clamping
    MStepMode mstep = MStepMode::Soft;
    InitMode init = InitMode::GlobalMean;
    int init_component = 0; // used when init == ComponentMean
};

struct LocalSearchResult {
    Eigen::VectorXd shape;
    Eigen::VectorXd costs; // selected candidate cost per landmark
};

/// Independent per-landmark argmin over candidate positions p + j*h*n for
/// integer j in [-s, s]; ties prefer the smallest |j|, then the smallest j.
LocalSearchResult local_search(const Eigen::VectorXd& shape,
                               const IntensityVolume& volume,
                               const ProfileModel& model, int level,
                               const SegmentationConfig& cfg,
                               const std::vector<std::array<int, 3>>& triangles = {});

/// Subspace regularization. Hard mode projects onto the argmax-responsibility
/// component; soft mode (default) blends the per-component reconstructions by
/// responsibility.
Eigen::VectorXd regularize(const ShapeMixture& mix, const Eigen::VectorXd& shape,
                           const Eigen::VectorXd& resp,
                           const SegmentationConfig& cfg);

struct TraceEntry {
    int level = 0;
    int iteration = 0;
    Eigen::VectorXd responsibilities;
    double mean_profile_cost = 0.0;
    double mean_displacement = 0.0;   // per-landmark, level coordinates
    double expected_log_density = 0.0; // sum_k r_k log p(S | k)
    int k_star = 0;
    double prior_before = 0.0; // log p(S' | k*) before regularization
    double prior_after = 0.0;  // log p(S | k*) after regularization
};

struct SegmentationResult {
    Eigen::VectorXd final_shape; // level-0 scale
    std::vector<TraceEntry> trace;
};

/// The generalized-EM loop: initialize at the training mean scaled to the
/// coarsest level, then per level (coarse to fine) alternate local profile
/// search, responsibility computation, and subspace regularization a fixed
/// number of times. The mixture is rescaled per level (means by 1/2^level,
/// variances by 1/4^level), which leaves responsibilities unchanged.
SegmentationResult segment(const VolumePyramid& pyramid, const ShapeMixture& mix,
                           const ProfileModel& model, const SegmentationConfig& cfg,
                           const std::vector<std::array<int, 3>>& triangles = {});

/// Writes `result.json` (final landmarks, config echo, per-iteration trace)
/// and `landmarks.csv` (index,x,y,z) into out_dir.
void write_segmentation_result(const SegmentationResult& result,
                               const SegmentationConfig& cfg,
                               const std::string& out_dir);

} // namespace shapegem
