#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace shapegem {

/// 3-D scalar grid. Voxel (i,j,k) is centered at origin + spacing * (i,j,k);
/// data is stored x-fastest. Values are doubles in memory and 32-bit floats
/// on disk. Instances are immutable by convention after construction and
/// safe to share across threads.
struct IntensityVolume {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::vector<double> data;

    IntensityVolume() = default;
    IntensityVolume(std::array<int, 3> dims_in,
                    std::array<double, 3> spacing_in,
                    std::array<double, 3> origin_in,
                    std::vector<double> values);

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }
    double at(int i, int j, int k) const { return data[index(i, j, k)]; }
    double& at(int i, int j, int k) { return data[index(i, j, k)]; }

    Eigen::Vector3d world_center() const;
};

/// Level 0 is the finest (input) volume; each coarser level halves the voxel
/// counts (ceil) and doubles the spacing.
struct VolumePyramid {
    std::vector<IntensityVolume> levels;
};

/// Trilinear interpolation; points outside the grid clamp to the nearest
/// boundary voxel, so sampling is total.
double sample(const IntensityVolume& volume, const Eigen::Vector3d& point);

/// Gaussian smoothing (sigma = 1 voxel, radius 2, kernel renormalized at the
/// borders) followed by factor-2 subsampling per level. Throws TooManyLevels
/// if a level would have any dim < 2.
VolumePyramid build_pyramid(const IntensityVolume& volume, int n_levels);

/// Volume file pair: `<name>.json` header + `<name>.raw` little-endian f32
/// payload in x-fastest order. `path` may name either the header or the base.
IntensityVolume read_volume(const std::string& path);
void write_volume(const IntensityVolume& volume, const std::string& path);

/// Rewrites the metadata of a pyramid-level volume into the divided
/// coordinate frame used when working at that level: world coordinates,
/// spacing, and origin are all scaled by 1/2^level, so one voxel of the
/// level volume spans the finest-level spacing again.
IntensityVolume level_frame(IntensityVolume level_volume, int level);

} // namespace shapegem
