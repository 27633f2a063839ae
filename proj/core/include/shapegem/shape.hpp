#pragma once

#include <string>

#include <Eigen/Core>

namespace shapegem {

// A shape is a flattened landmark configuration in R^{3M}: landmark i
// occupies coefficients 3i..3i+2, world units. Plain Eigen vectors keep the
// mixture algebra direct; these helpers cover the landmark view.

inline int landmark_count(const Eigen::VectorXd& shape) {
    return static_cast<int>(shape.size()) / 3;
}

inline Eigen::Vector3d landmark(const Eigen::VectorXd& shape, int i) {
    return shape.segment<3>(3 * i);
}

inline void set_landmark(Eigen::VectorXd& shape, int i, const Eigen::Vector3d& p) {
    shape.segment<3>(3 * i) = p;
}

/// Training population: one shape per column, all sharing the landmark
/// count and a common coordinate frame.
struct ShapeDataset {
    Eigen::MatrixXd shapes; // ambient_dim x N
    int m = 0;

    ShapeDataset() = default;
    explicit ShapeDataset(Eigen::MatrixXd shapes_in);

    int count() const { return static_cast<int>(shapes.cols()); }
    int ambient_dim() const { return static_cast<int>(shapes.rows()); }
};

/// Landmark CSV: header `index,x,y,z`, one row per landmark.
Eigen::VectorXd read_landmarks_csv(const std::string& path);
void write_landmarks_csv(const Eigen::VectorXd& shape, const std::string& path);

} // namespace shapegem
