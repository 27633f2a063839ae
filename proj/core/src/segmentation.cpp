#include "shapegem/segmentation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"
#include "shapegem/parallel.hpp"
#include "shapegem/shape.hpp"

namespace fs = std::filesystem;
using Eigen::Vector3d;
using Eigen::VectorXd;
using nlohmann::json;

namespace shapegem {

LocalSearchResult local_search(const VectorXd& shape, const IntensityVolume& volume,
                               const ProfileModel& model, int level,
                               const SegmentationConfig& cfg,
                               const std::vector<std::array<int, 3>>& triangles) {
    const int m = landmark_count(shape);
    if (m != model.m) {
        throw DimensionError("shape landmark count does not match profile model");
    }
    if (level < 0 || level >= model.n_levels) {
        throw DimensionError("invalid level for profile model");
    }
    if (cfg.search_length < 0) {
        throw DimensionError("search length must be >= 0");
    }

    const Eigen::Matrix3Xd normals = estimate_normals(shape, triangles);
    const double h = std::min({volume.spacing[0], volume.spacing[1],
                               volume.spacing[2]});

    // Candidate steps in tie-break order: 0, -1, +1, -2, +2, ...
    std::vector<int> steps;
    steps.reserve(2 * cfg.search_length + 1);
    steps.push_back(0);
    for (int j = 1; j <= cfg.search_length; ++j) {
        steps.push_back(-j);
        steps.push_back(j);
    }

    LocalSearchResult result;
    result.shape = shape;
    result.costs.resize(m);
    parallel_for(m, [&](std::int64_t i) {
        const Vector3d p = landmark(shape, static_cast<int>(i));
        const Vector3d n = normals.col(static_cast<int>(i));
        double best_cost = std::numeric_limits<double>::infinity();
        Vector3d best_point = p;
        for (const int j : steps) {
            const Vector3d candidate = p + static_cast<double>(j) * h * n;
            const VectorXd feature = extract_profile(volume, candidate, n, model.spec);
            const double cost =
                profile_cost(model, level, static_cast<int>(i), feature);
            if (cost < best_cost) {
                best_cost = cost;
                best_point = candidate;
            }
        }
        set_landmark(result.shape, static_cast<int>(i), best_point);
        result.costs[i] = best_cost;
    });
    return result;
}

VectorXd regularize(const ShapeMixture& mix, const VectorXd& shape,
                    const VectorXd& resp, const SegmentationConfig& cfg) {
    if (shape.size() != mix.ambient_dim) {
        throw DimensionError("shape length does not match mixture dimension");
    }
    if (resp.size() != mix.k()) {
        throw DimensionError("responsibility length does not match mixture K");
    }
    if (cfg.mstep == MStepMode::Hard) {
        int k_star = 0;
        resp.maxCoeff(&k_star);
        const MixtureComponent& c = mix.components[k_star];
        return reconstruct(c, project(c, shape), cfg.clamp_sd);
    }
    VectorXd blended = VectorXd::Zero(shape.size());
    for (int k = 0; k < mix.k(); ++k) {
        const MixtureComponent& c = mix.components[k];
        blended += resp[k] * reconstruct(c, project(c, shape), cfg.clamp_sd);
    }
    return blended;
}

SegmentationResult segment(const VolumePyramid& pyramid, const ShapeMixture& mix,
                           const ProfileModel& model, const SegmentationConfig& cfg,
                           const std::vector<std::array<int, 3>>& triangles) {
    const int n_levels = cfg.n_levels;
    if (static_cast<int>(pyramid.levels.size()) != n_levels ||
        model.n_levels != n_levels) {
        throw LevelMismatch("pyramid has " + std::to_string(pyramid.levels.size()) +
                            " levels, profile model " + std::to_string(model.n_levels) +
                            ", config wants " + std::to_string(n_levels));
    }
    if (mix.m != model.m) {
        throw DimensionError("mixture and profile model disagree on landmark count");
    }

    VectorXd shape;
    if (cfg.init == InitMode::ComponentMean) {
        if (cfg.init_component < 0 || cfg.init_component >= mix.k()) {
            throw DimensionError("init component index out of range");
        }
        shape = mix.components[cfg.init_component].mu;
    } else {
        shape = VectorXd::Zero(mix.ambient_dim);
        for (const auto& c : mix.components) {
            shape += c.pi * c.mu;
        }
    }
    shape /= std::pow(2.0, n_levels - 1);

    SegmentationResult result;
    result.trace.reserve(static_cast<std::size_t>(n_levels) * cfg.iters_per_level);

    for (int level = n_levels - 1; level >= 0; --level) {
        const IntensityVolume frame = level_frame(pyramid.levels[level], level);
        const ShapeMixture level_mix = scale_mixture(mix, std::pow(2.0, level));

        for (int iter = 0; iter < cfg.iters_per_level; ++iter) {
            const LocalSearchResult searched =
                local_search(shape, frame, model, level, cfg, triangles);
            const VectorXd resp = responsibilities(level_mix, searched.shape);

            int k_star = 0;
            resp.maxCoeff(&k_star);
            const double prior_before =
                log_density_component(level_mix.components[k_star], searched.shape);

            const VectorXd updated = regularize(level_mix, searched.shape, resp, cfg);
            const double prior_after =
                log_density_component(level_mix.components[k_star], updated);

            TraceEntry entry;
            entry.level = level;
            entry.iteration = iter;
            entry.responsibilities = resp;
            entry.mean_profile_cost = searched.costs.mean();
            double displacement = 0.0;
            for (int i = 0; i < mix.m; ++i) {
                displacement += (landmark(updated, i) - landmark(shape, i)).norm();
            }
            entry.mean_displacement = displacement / mix.m;
            entry.expected_log_density = 0.0;
            for (int k = 0; k < mix.k(); ++k) {
                entry.expected_log_density +=
                    resp[k] * log_density_component(level_mix.components[k], updated);
            }
            entry.k_star = k_star;
            entry.prior_before = prior_before;
            entry.prior_after = prior_after;
            result.trace.push_back(std::move(entry));

            shape = updated;
        }
        if (level > 0) {
            shape *= 2.0;
        }
    }
    result.final_shape = std::move(shape);
    return result;
}

void write_segmentation_result(const SegmentationResult& result,
                               const SegmentationConfig& cfg,
                               const std::string& out_dir) {
    fs::create_directories(out_dir);

    json config = {
        {"search_length", cfg.search_length},
        {"iters_per_level", cfg.iters_per_level},
        {"n_levels", cfg.n_levels},
        {"clamp_sd", cfg.clamp_sd ? json(*cfg.clamp_sd) : json(nullptr)},
        {"mstep", cfg.mstep == MStepMode::Hard ? "hard" : "soft"},
        {"init", cfg.init == InitMode::ComponentMean
                     ? "component:" + std::to_string(cfg.init_component)
                     : "global"},
    };

    json trace = json::array();
    for (const auto& entry : result.trace) {
        json resp = json::array();
        for (Eigen::Index k = 0; k < entry.responsibilities.size(); ++k) {
            resp.push_back(entry.responsibilities[k]);
        }
        trace.push_back({{"level", entry.level},
                         {"iteration", entry.iteration},
                         {"responsibilities", resp},
                         {"mean_profile_cost", entry.mean_profile_cost},
                         {"mean_displacement", entry.mean_displacement},
                         {"expected_log_density", entry.expected_log_density},
                         {"k_star", entry.k_star},
                         {"prior_before", entry.prior_before},
                         {"prior_after", entry.prior_after}});
    }

    json landmarks = json::array();
    for (int i = 0; i < landmark_count(result.final_shape); ++i) {
        const Vector3d p = landmark(result.final_shape, i);
        landmarks.push_back({p[0], p[1], p[2]});
    }

    json doc = {{"config", config}, {"final", landmarks}, {"trace", trace}};
    const fs::path json_path = fs::path(out_dir) / "result.json";
    std::ofstream out(json_path);
    if (!out) {
        throw FormatError("cannot write " + json_path.string());
    }
    out << doc.dump(2) << "\n";

    write_landmarks_csv(result.final_shape, (fs::path(out_dir) / "landmarks.csv").string());
}

} // namespace shapegem
