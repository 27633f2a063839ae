#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapegem/volume.hpp"

namespace shapegem {

struct EvalReport {
    Eigen::VectorXd distances; // per landmark, world units
    double mean = 0.0;
    double median = 0.0;
    double max = 0.0;
    std::optional<double> dice;
    double outlier_threshold = 10.0;
    int outlier_count = 0;
};

/// Per-landmark Euclidean distances between two shapes of equal M.
Eigen::VectorXd point_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Parity scan conversion of a watertight triangulated surface: one +x ray
/// per (y, z) voxel row, jittered by 1e-6 voxel on degenerate hits; voxel
/// centers with an odd crossing count to their left are labeled 1. Throws
/// NonWatertight when a row's total crossing parity is odd.
IntensityVolume voxelize(const Eigen::VectorXd& shape,
                         const std::vector<std::array<int, 3>>& triangles,
                         std::array<int, 3> dims, std::array<double, 3> spacing,
                         std::array<double, 3> origin = {0.0, 0.0, 0.0});

/// 2|A n B| / (|A| + |B|), with 1.0 when both labels are empty. Values above
/// 0.5 count as foreground.
double dice(const IntensityVolume& a, const IntensityVolume& b);

EvalReport make_report(const Eigen::VectorXd& distances,
                       std::optional<double> dice_value,
                       double outlier_threshold = 10.0);

/// Writes `report.json` (summary) and `distances.csv` (landmark,distance).
void write_report(const EvalReport& report, const std::string& out_dir);

} // namespace shapegem
