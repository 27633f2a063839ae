#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "shapegem/autoencoder.hpp"
#include "shapegem/volume.hpp"

namespace shapegem {

/// Sampling geometry of one intensity profile: 2*ell+1 derivative values per
/// line, one line per tangent-plane offset (in voxels), samples step voxels
/// apart along the normal.
struct ProfileSpec {
    int ell = 5;
    double step = 1.0;
    std::vector<std::array<double, 2>> offsets = default_thick_offsets();

    static std::vector<std::array<double, 2>> default_thick_offsets() {
        return {{0.0, 0.0}, {0.5, 0.0}, {-0.5, 0.0}, {0.0, 0.5}, {0.0, -0.5}};
    }

    int line_length() const { return 2 * ell + 1; }
    int feature_length() const {
        return line_length() * static_cast<int>(offsets.size());
    }
};

/// Unit surface normals, one column per landmark. With a triangle list the
/// normal is the area-weighted average of incident triangle normals; without
/// one it is the least-variance direction of a local PCA over the 8 nearest
/// landmarks, oriented away from the landmark centroid.
Eigen::Matrix3Xd estimate_normals(
    const Eigen::VectorXd& shape,
    const std::vector<std::array<int, 3>>& triangles = {});

/// Thick profile of normalized first derivatives of interpolated intensities:
/// per line, samples at 2*ell+2 half-offset points along the normal, first
/// differences, then L1 normalization (all-zero lines stay zero). Lines are
/// concatenated in offset order. Total via boundary clamping.
Eigen::VectorXd extract_profile(const IntensityVolume& volume,
                                const Eigen::Vector3d& point,
                                const Eigen::Vector3d& normal,
                                const ProfileSpec& spec);

/// Per (level, landmark) appearance statistics: the [0,1] rescale fitted on
/// training profiles, the trained autoencoder (absent in raw-profile mode),
/// and the feature-space Gaussian.
struct LandmarkProfileStats {
    double lo = 0.0;
    double hi = 1.0;
    std::optional<SparseAutoencoder> ae;
    Eigen::VectorXd mu_f;
    Eigen::MatrixXd sigma_f;
    Eigen::MatrixXd chol_l; // cached lower Cholesky factor of sigma_f
};

struct ProfileModel {
    ProfileSpec spec;
    int n_levels = 1;
    int m = 0;
    bool use_autoencoder = true;
    std::vector<LandmarkProfileStats> stats; // level-major: stats[level*m + i]

    const LandmarkProfileStats& at(int level, int landmark) const {
        return stats[static_cast<std::size_t>(level) * m + landmark];
    }
};

struct ProfileTrainOptions {
    ProfileSpec spec{};
    int n_levels = 2;
    AeTrainConfig ae{};
    double ridge = 1e-3;
    bool use_autoencoder = true;
};

/// Trains one appearance model per (pyramid level, landmark). Profiles are
/// gathered at the ground-truth landmarks of every training pair, combined
/// across pairs, rescaled to [0,1], optionally autoencoded, and summarized
/// by a ridged Gaussian in feature space.
ProfileModel train_profile_models(
    const std::vector<const IntensityVolume*>& volumes,
    const std::vector<Eigen::VectorXd>& shapes, const ProfileTrainOptions& opts,
    const std::vector<std::array<int, 3>>& triangles = {});

/// Mahalanobis distance of the encoded feature to the stored Gaussian,
/// solved through the cached Cholesky factor.
double profile_cost(const ProfileModel& model, int level, int landmark,
                    const Eigen::VectorXd& feature);

void save_profile_model(const ProfileModel& model, const std::string& path);
ProfileModel load_profile_model(const std::string& path);

} // namespace shapegem
