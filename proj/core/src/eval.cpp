#include "shapegem/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"
#include "shapegem/parallel.hpp"
#include "shapegem/shape.hpp"

namespace fs = std::filesystem;
using Eigen::Vector3d;
using Eigen::VectorXd;
using nlohmann::json;

namespace shapegem {

VectorXd point_error(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size() || a.size() % 3 != 0) {
        throw DimensionError("point_error needs two shapes with the same M");
    }
    const int m = landmark_count(a);
    VectorXd distances(m);
    for (int i = 0; i < m; ++i) {
        distances[i] = (landmark(a, i) - landmark(b, i)).norm();
    }
    return distances;
}

namespace {

struct RowCrossings {
    std::vector<double> xs;
    bool degenerate = false;
};

// All x-coordinates where the +x ray at (y, z) crosses the mesh. Flags an
// edge/vertex hit as degenerate so the caller can jitter and retry. Edge-on
// triangles (zero projected area) are skipped: a generic ray misses them and
// a grazing one is resolved by the parity retry.
RowCrossings cast_ray(const std::vector<Vector3d>& points,
                      const std::vector<std::array<int, 3>>& triangles,
                      double y, double z, double eps) {
    RowCrossings out;
    for (const auto& tri : triangles) {
        const Vector3d& a = points[tri[0]];
        const Vector3d& b = points[tri[1]];
        const Vector3d& c = points[tri[2]];
        const double lo_y = std::min({a[1], b[1], c[1]});
        const double hi_y = std::max({a[1], b[1], c[1]});
        const double lo_z = std::min({a[2], b[2], c[2]});
        const double hi_z = std::max({a[2], b[2], c[2]});
        if (y < lo_y - eps || y > hi_y + eps || z < lo_z - eps || z > hi_z + eps) {
            continue;
        }
        const double denom = (b[1] - a[1]) * (c[2] - a[2]) -
                             (c[1] - a[1]) * (b[2] - a[2]);
        const double extent = (hi_y - lo_y) + (hi_z - lo_z);
        if (std::abs(denom) <= 1e-12 * extent * extent) {
            continue;
        }
        const double w1 = ((y - a[1]) * (c[2] - a[2]) - (z - a[2]) * (c[1] - a[1])) /
                          denom;
        const double w2 = ((b[1] - a[1]) * (z - a[2]) - (b[2] - a[2]) * (y - a[1])) /
                          denom;
        const double w0 = 1.0 - w1 - w2;
        const double margin = 1e-10;
        if (w0 < -margin || w1 < -margin || w2 < -margin) {
            continue;
        }
        if (w0 < margin || w1 < margin || w2 < margin) {
            out.degenerate = true;
            return out;
        }
        out.xs.push_back(w0 * a[0] + w1 * b[0] + w2 * c[0]);
    }
    std::sort(out.xs.begin(), out.xs.end());
    return out;
}

} // namespace

IntensityVolume voxelize(const VectorXd& shape,
                         const std::vector<std::array<int, 3>>& triangles,
                         std::array<int, 3> dims, std::array<double, 3> spacing,
                         std::array<double, 3> origin) {
    if (shape.size() % 3 != 0) {
        throw DimensionError("shape length must be a multiple of 3");
    }
    const int m = landmark_count(shape);
    std::vector<Vector3d> points(m);
    for (int i = 0; i < m; ++i) {
        points[i] = landmark(shape, i);
    }
    for (const auto& tri : triangles) {
        for (const int v : tri) {
            if (v < 0 || v >= m) {
                throw DimensionError("triangle index out of range");
            }
        }
    }

    const double jitter_unit = 1e-6 * std::min({spacing[0], spacing[1], spacing[2]});
    std::vector<double> labels(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2],
                               0.0);

    const std::int64_t rows = static_cast<std::int64_t>(dims[1]) * dims[2];
    parallel_for(rows, [&](std::int64_t row) {
        const int j = static_cast<int>(row % dims[1]);
        const int k = static_cast<int>(row / dims[1]);
        const double y0 = origin[1] + spacing[1] * j;
        const double z0 = origin[2] + spacing[2] * k;

        RowCrossings crossings;
        bool resolved = false;
        for (int attempt = 0; attempt < 8 && !resolved; ++attempt) {
            const double y = y0 + jitter_unit * attempt;
            const double z = z0 + jitter_unit * 1.37 * attempt;
            crossings = cast_ray(points, triangles, y, z, jitter_unit);
            if (crossings.degenerate || crossings.xs.size() % 2 != 0) {
                continue;
            }
            // A crossing exactly at a voxel center is also ambiguous.
            bool on_center = false;
            for (const double x : crossings.xs) {
                const double q = (x - origin[0]) / spacing[0];
                if (std::abs(q - std::round(q)) < 1e-9 && std::round(q) >= 0 &&
                    std::round(q) < dims[0]) {
                    on_center = true;
                    break;
                }
            }
            resolved = !on_center;
        }
        if (!resolved) {
            throw NonWatertight("row (" + std::to_string(j) + ", " +
                                std::to_string(k) +
                                ") kept an odd or degenerate crossing parity "
                                "after jittering");
        }

        std::size_t at = static_cast<std::size_t>(k) * dims[0] * dims[1] +
                         static_cast<std::size_t>(j) * dims[0];
        std::size_t seen = 0;
        for (int i = 0; i < dims[0]; ++i) {
            const double x = origin[0] + spacing[0] * i;
            while (seen < crossings.xs.size() && crossings.xs[seen] < x) {
                ++seen;
            }
            labels[at + i] = (seen % 2 == 1) ? 1.0 : 0.0;
        }
    });

    return IntensityVolume(dims, spacing, origin, std::move(labels));
}

double dice(const IntensityVolume& a, const IntensityVolume& b) {
    if (a.dims != b.dims) {
        throw DimensionError("dice needs label volumes with identical dims");
    }
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool in_a = a.data[i] > 0.5;
        const bool in_b = b.data[i] > 0.5;
        count_a += in_a;
        count_b += in_b;
        overlap += in_a && in_b;
    }
    if (count_a + count_b == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(overlap) /
           static_cast<double>(count_a + count_b);
}

EvalReport make_report(const VectorXd& distances, std::optional<double> dice_value,
                       double outlier_threshold) {
    EvalReport report;
    report.distances = distances;
    report.mean = distances.mean();
    report.max = distances.maxCoeff();
    std::vector<double> sorted(distances.data(), distances.data() + distances.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    report.median = n % 2 == 1 ? sorted[n / 2]
                               : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    report.dice = dice_value;
    report.outlier_threshold = outlier_threshold;
    report.outlier_count = static_cast<int>(
        (distances.array() > outlier_threshold).count());
    return report;
}

void write_report(const EvalReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);

    json summary = {
        {"mean_distance", report.mean},
        {"median_distance", report.median},
        {"max_distance", report.max},
        {"outlier_threshold", report.outlier_threshold},
        {"outlier_count", report.outlier_count},
        {"landmarks", report.distances.size()},
        {"dice", report.dice ? json(*report.dice) : json(nullptr)},
    };
    const fs::path json_path = fs::path(out_dir) / "report.json";
    std::ofstream out(json_path);
    if (!out) {
        throw FormatError("cannot write " + json_path.string());
    }
    out << json{{"summary", summary}}.dump(2) << "\n";

    const fs::path csv_path = fs::path(out_dir) / "distances.csv";
    std::ofstream csv(csv_path);
    if (!csv) {
        throw FormatError("cannot write " + csv_path.string());
    }
    csv << "landmark,distance\n";
    std::ostringstream row;
    row.precision(17);
    for (Eigen::Index i = 0; i < report.distances.size(); ++i) {
        row.str("");
        row << i << "," << report.distances[i] << "\n";
        csv << row.str();
    }
}

} // namespace shapegem
