#include "shapegem/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"
#include "shapegem/parallel.hpp"
#include "shapegem/rng.hpp"
#include "shapegem/shape.hpp"
#include "json_codec.hpp"

using Eigen::Matrix3Xd;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;
using nlohmann::json;

namespace shapegem {

namespace {

Matrix3Xd normals_from_mesh(const VectorXd& shape,
                            const std::vector<std::array<int, 3>>& triangles) {
    const int m = landmark_count(shape);
    Matrix3Xd normals = Matrix3Xd::Zero(3, m);
    for (const auto& tri : triangles) {
        const Vector3d a = landmark(shape, tri[0]);
        const Vector3d b = landmark(shape, tri[1]);
        const Vector3d c = landmark(shape, tri[2]);
        const Vector3d weighted = (b - a).cross(c - a); // 2x area-weighted
        for (const int v : tri) {
            normals.col(v) += weighted;
        }
    }
    for (int i = 0; i < m; ++i) {
        const double norm = normals.col(i).norm();
        if (norm < 1e-12) {
            throw DegenerateNeighborhood("zero area-weighted normal at landmark " +
                                         std::to_string(i));
        }
        normals.col(i) /= norm;
    }
    return normals;
}

Matrix3Xd normals_from_pca(const VectorXd& shape) {
    const int m = landmark_count(shape);
    constexpr int kNeighbors = 8;
    if (m < kNeighbors + 1) {
        throw DimensionError("PCA normals need at least 9 landmarks");
    }

    Matrix3Xd points(3, m);
    for (int i = 0; i < m; ++i) {
        points.col(i) = landmark(shape, i);
    }
    const Vector3d centroid = points.rowwise().mean();

    Matrix3Xd normals(3, m);
    parallel_for(m, [&](std::int64_t i) {
        std::vector<std::pair<double, int>> dist;
        dist.reserve(m - 1);
        for (int j = 0; j < m; ++j) {
            if (j == static_cast<int>(i)) {
                continue;
            }
            dist.emplace_back((points.col(j) - points.col(i)).squaredNorm(), j);
        }
        std::partial_sort(dist.begin(), dist.begin() + kNeighbors, dist.end());

        Matrix3Xd patch(3, kNeighbors + 1);
        patch.col(0) = points.col(i);
        for (int j = 0; j < kNeighbors; ++j) {
            patch.col(j + 1) = points.col(dist[j].second);
        }
        const Vector3d mean = patch.rowwise().mean();
        const Matrix3Xd centered = patch.colwise() - mean;
        const Eigen::Matrix3d cov = centered * centered.transpose();

        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
        const auto& eigenvalues = solver.eigenvalues(); // ascending
        if (!(eigenvalues[2] > 0.0) || eigenvalues[1] <= 1e-12 * eigenvalues[2]) {
            throw DegenerateNeighborhood("landmark " + std::to_string(i) +
                                         " has a rank-deficient neighborhood");
        }
        Vector3d normal = solver.eigenvectors().col(0);
        if (normal.dot(points.col(i) - centroid) < 0.0) {
            normal = -normal;
        }
        normals.col(i) = normal.normalized();
    });
    return normals;
}

void tangent_frame(const Vector3d& normal, Vector3d& t1, Vector3d& t2) {
    int axis = 0;
    double best = std::abs(normal[0]);
    for (int a = 1; a < 3; ++a) {
        const double aligned = std::abs(normal[a]);
        if (aligned < best) {
            best = aligned;
            axis = a;
        }
    }
    Vector3d e = Vector3d::Zero();
    e[axis] = 1.0;
    t1 = (e - normal.dot(e) * normal).normalized();
    t2 = normal.cross(t1);
}

MatrixXd gather_features(const std::vector<const IntensityVolume*>& frames,
                         const std::vector<VectorXd>& shapes,
                         const Matrix3Xd* normals, int landmark_id, int level,
                         const ProfileSpec& spec) {
    const double scale = std::pow(2.0, level);
    MatrixXd features(spec.feature_length(), static_cast<Eigen::Index>(frames.size()));
    for (std::size_t pair = 0; pair < frames.size(); ++pair) {
        const Vector3d p = landmark(shapes[pair], landmark_id) / scale;
        features.col(static_cast<Eigen::Index>(pair)) =
            extract_profile(*frames[pair], p, normals[pair].col(landmark_id), spec);
    }
    return features;
}

MatrixXd apply_scale(const MatrixXd& features, double lo, double hi) {
    if (hi - lo < 1e-12) {
        return MatrixXd::Constant(features.rows(), features.cols(), 0.5);
    }
    return ((features.array() - lo) / (hi - lo)).matrix();
}

json spec_to_json(const ProfileSpec& spec) {
    json offsets = json::array();
    for (const auto& o : spec.offsets) {
        offsets.push_back({o[0], o[1]});
    }
    return {{"ell", spec.ell}, {"step", spec.step}, {"offsets", offsets}};
}

ProfileSpec spec_from_json(const json& j) {
    ProfileSpec spec;
    spec.ell = j.at("ell").get<int>();
    spec.step = j.at("step").get<double>();
    spec.offsets.clear();
    for (const auto& o : j.at("offsets")) {
        spec.offsets.push_back({o.at(0).get<double>(), o.at(1).get<double>()});
    }
    return spec;
}

json ae_to_json(const SparseAutoencoder& ae) {
    json weights = json::array();
    json biases = json::array();
    for (int layer = 0; layer < 4; ++layer) {
        weights.push_back(codec::matrix_to_json(ae.weights[layer]));
        biases.push_back(codec::vector_to_json(ae.biases[layer]));
    }
    return {{"n_in", ae.n_in}, {"weights", weights}, {"biases", biases}};
}

SparseAutoencoder ae_from_json(const json& j) {
    SparseAutoencoder ae;
    ae.n_in = j.at("n_in").get<int>();
    for (int layer = 0; layer < 4; ++layer) {
        ae.weights[layer] = codec::matrix_from_json(j.at("weights").at(layer));
        ae.biases[layer] = codec::vector_from_json(j.at("biases").at(layer));
    }
    return ae;
}

} // namespace

Matrix3Xd estimate_normals(const VectorXd& shape,
                           const std::vector<std::array<int, 3>>& triangles) {
    if (shape.size() % 3 != 0) {
        throw DimensionError("shape length must be a multiple of 3");
    }
    if (landmark_count(shape) < 4) {
        throw DimensionError("normal estimation needs at least 4 landmarks");
    }
    if (!triangles.empty()) {
        return normals_from_mesh(shape, triangles);
    }
    return normals_from_pca(shape);
}

VectorXd extract_profile(const IntensityVolume& volume, const Vector3d& point,
                         const Vector3d& normal, const ProfileSpec& spec) {
    if (std::abs(normal.norm() - 1.0) > 1e-6) {
        throw DimensionError("profile normal must be unit length");
    }
    const double h = std::min({volume.spacing[0], volume.spacing[1],
                               volume.spacing[2]});
    Vector3d t1;
    Vector3d t2;
    tangent_frame(normal, t1, t2);

    const int len = spec.line_length();
    VectorXd feature(spec.feature_length());
    VectorXd samples(len + 1);
    for (std::size_t line = 0; line < spec.offsets.size(); ++line) {
        const auto& offset = spec.offsets[line];
        const Vector3d center = point + offset[0] * h * t1 + offset[1] * h * t2;
        for (int i = 0; i <= len; ++i) {
            const double along = (static_cast<double>(i) - spec.ell - 0.5) *
                                 spec.step * h;
            samples[i] = sample(volume, center + along * normal);
        }
        VectorXd derivative = samples.tail(len) - samples.head(len);
        const double total = derivative.cwiseAbs().sum();
        if (total < 1e-12) {
            derivative.setZero();
        } else {
            derivative /= total;
        }
        feature.segment(static_cast<Eigen::Index>(line) * len, len) = derivative;
    }
    return feature;
}

ProfileModel train_profile_models(
    const std::vector<const IntensityVolume*>& volumes,
    const std::vector<VectorXd>& shapes, const ProfileTrainOptions& opts,
    const std::vector<std::array<int, 3>>& triangles) {
    if (volumes.size() != shapes.size()) {
        throw DimensionError("training needs one volume per shape");
    }
    if (volumes.size() < 2) {
        throw DimensionError("training needs at least 2 pairs");
    }
    const int m = landmark_count(shapes.front());
    for (const auto& s : shapes) {
        if (landmark_count(s) != m || s.size() % 3 != 0) {
            throw DimensionError("training shapes disagree on landmark count");
        }
    }

    const std::size_t n_pairs = volumes.size();

    // Pyramid levels viewed in their divided frames; normals are shared
    // across levels because uniform scaling preserves directions.
    std::vector<std::vector<IntensityVolume>> frames(n_pairs);
    std::vector<Matrix3Xd> normals(n_pairs);
    parallel_for(static_cast<std::int64_t>(n_pairs), [&](std::int64_t pair) {
        VolumePyramid pyramid = build_pyramid(*volumes[pair], opts.n_levels);
        frames[pair].reserve(opts.n_levels);
        for (int level = 0; level < opts.n_levels; ++level) {
            frames[pair].push_back(
                level_frame(std::move(pyramid.levels[level]), level));
        }
        normals[pair] = estimate_normals(shapes[pair], triangles);
    });

    ProfileModel model;
    model.spec = opts.spec;
    model.n_levels = opts.n_levels;
    model.m = m;
    model.use_autoencoder = opts.use_autoencoder;
    model.stats.resize(static_cast<std::size_t>(opts.n_levels) * m);

    const int feature_dim =
        opts.use_autoencoder ? SparseAutoencoder::kHidden : opts.spec.feature_length();

    parallel_for(static_cast<std::int64_t>(model.stats.size()), [&](std::int64_t slot) {
        const int level = static_cast<int>(slot) / m;
        const int landmark_id = static_cast<int>(slot) % m;

        std::vector<const IntensityVolume*> level_frames(n_pairs);
        for (std::size_t pair = 0; pair < n_pairs; ++pair) {
            level_frames[pair] = &frames[pair][level];
        }
        const MatrixXd features = gather_features(level_frames, shapes,
                                                  normals.data(), landmark_id,
                                                  level, opts.spec);

        LandmarkProfileStats stats;
        stats.lo = features.minCoeff();
        stats.hi = features.maxCoeff();
        const MatrixXd scaled = apply_scale(features, stats.lo, stats.hi);

        MatrixXd codes;
        if (opts.use_autoencoder) {
            AeTrainConfig cfg = opts.ae;
            cfg.seed = mix_seed(opts.ae.seed, static_cast<std::uint64_t>(slot));
            try {
                stats.ae = train_autoencoder(
                               init_autoencoder(opts.spec.feature_length(), cfg.seed),
                               scaled, cfg)
                               .model;
            } catch (const NonFiniteLoss& e) {
                throw NonFiniteLoss("level " + std::to_string(level) +
                                    ", landmark " + std::to_string(landmark_id) +
                                    ": " + e.what());
            }
            codes = encode_batch(*stats.ae, scaled);
        } else {
            codes = scaled;
        }

        stats.mu_f = codes.rowwise().mean();
        const MatrixXd centered = codes.colwise() - stats.mu_f;
        stats.sigma_f = centered * centered.transpose() /
                        static_cast<double>(codes.cols() - 1);
        const double ridge =
            opts.ridge * stats.sigma_f.trace() / static_cast<double>(feature_dim) +
            1e-12;
        stats.sigma_f += ridge * MatrixXd::Identity(feature_dim, feature_dim);
        stats.chol_l = Eigen::LLT<MatrixXd>(stats.sigma_f).matrixL();
        model.stats[static_cast<std::size_t>(slot)] = std::move(stats);
    });
    return model;
}

double profile_cost(const ProfileModel& model, int level, int landmark_id,
                    const VectorXd& feature) {
    if (feature.size() != model.spec.feature_length()) {
        throw DimensionError("profile feature length " +
                             std::to_string(feature.size()) + " does not match spec " +
                             std::to_string(model.spec.feature_length()));
    }
    if (level < 0 || level >= model.n_levels || landmark_id < 0 ||
        landmark_id >= model.m) {
        throw DimensionError("profile model has no entry for level " +
                             std::to_string(level) + ", landmark " +
                             std::to_string(landmark_id));
    }
    const LandmarkProfileStats& stats = model.at(level, landmark_id);
    const VectorXd scaled = apply_scale(feature, stats.lo, stats.hi);
    const VectorXd code = stats.ae ? encode(*stats.ae, scaled) : scaled;
    const VectorXd solved =
        stats.chol_l.triangularView<Eigen::Lower>().solve(code - stats.mu_f);
    return solved.squaredNorm();
}

void save_profile_model(const ProfileModel& model, const std::string& path) {
    json doc;
    doc["spec"] = spec_to_json(model.spec);
    doc["n_levels"] = model.n_levels;
    doc["m"] = model.m;
    doc["use_autoencoder"] = model.use_autoencoder;
    json entries = json::array();
    for (const auto& stats : model.stats) {
        json entry = {{"scale", {{"lo", stats.lo}, {"hi", stats.hi}}},
                      {"mu_f", codec::vector_to_json(stats.mu_f)},
                      {"sigma_f", codec::matrix_to_json(stats.sigma_f)}};
        if (stats.ae) {
            entry["ae"] = ae_to_json(*stats.ae);
        }
        entries.push_back(std::move(entry));
    }
    doc["entries"] = std::move(entries);
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot write profile model: " + path);
    }
    out << doc.dump() << "\n";
}

ProfileModel load_profile_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open profile model: " + path);
    }
    json doc;
    try {
        in >> doc;
        ProfileModel model;
        model.spec = spec_from_json(doc.at("spec"));
        model.n_levels = doc.at("n_levels").get<int>();
        model.m = doc.at("m").get<int>();
        model.use_autoencoder = doc.at("use_autoencoder").get<bool>();
        for (const auto& entry : doc.at("entries")) {
            LandmarkProfileStats stats;
            stats.lo = entry.at("scale").at("lo").get<double>();
            stats.hi = entry.at("scale").at("hi").get<double>();
            stats.mu_f = codec::vector_from_json(entry.at("mu_f"));
            stats.sigma_f = codec::matrix_from_json(entry.at("sigma_f"));
            if (entry.contains("ae")) {
                stats.ae = ae_from_json(entry.at("ae"));
            }
            stats.chol_l = Eigen::LLT<MatrixXd>(stats.sigma_f).matrixL();
            model.stats.push_back(std::move(stats));
        }
        if (model.stats.size() !=
            static_cast<std::size_t>(model.n_levels) * model.m) {
            throw FormatError("profile model table size mismatch in " + path);
        }
        return model;
    } catch (const json::exception& e) {
        throw FormatError("bad profile model " + path + ": " + e.what());
    }
}

} // namespace shapegem
