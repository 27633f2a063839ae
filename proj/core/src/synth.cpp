#include "shapegem/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"
#include "shapegem/parallel.hpp"
#include "shapegem/rng.hpp"
#include "shapegem/shape.hpp"

namespace fs = std::filesystem;
using Eigen::Vector3d;
using Eigen::VectorXd;
using nlohmann::json;

namespace shapegem {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxLatent = 8;
constexpr double kLatentDecay = 0.75;

Vector3d grid_direction(int grid, int row, int col) {
    const double theta = kPi * row / (grid - 1);
    const double phi = 2.0 * kPi * col / grid;
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi),
            std::cos(theta)};
}

int node_index(int grid, int row, int col) {
    if (row == 0) {
        return 0;
    }
    if (row == grid - 1) {
        return synth_landmark_count(grid) - 1;
    }
    return 1 + (row - 1) * grid + (col % grid + grid) % grid;
}

// Smooth low-order real spherical-harmonic-style basis, |H| <= 1.
double latent_basis(int mode, const Vector3d& dir) {
    const double x = dir[0];
    const double y = dir[1];
    const double z = dir[2];
    switch (mode) {
        case 0: return z;
        case 1: return x;
        case 2: return y;
        case 3: return 0.5 * (3.0 * z * z - 1.0);
        case 4: return x * z;
        case 5: return y * z;
        case 6: return x * x - y * y;
        case 7: return 2.0 * x * y;
        default: return 0.0;
    }
}

std::vector<Vector3d> bump_anchors(int component, int count) {
    // Golden-angle rotation per component decorrelates the bump layouts, so
    // component templates differ even where bump counts coincide.
    constexpr double kGolden = 2.399963229728653;
    std::vector<Vector3d> anchors;
    anchors.reserve(count);
    for (int b = 0; b < count; ++b) {
        const double theta = kPi / 2.0 + 0.35 * (b % 2 == 0 ? 1.0 : -1.0);
        const double phi = 2.0 * kPi * b / count + kGolden * (component + 1);
        anchors.push_back({std::sin(theta) * std::cos(phi),
                           std::sin(theta) * std::sin(phi), std::cos(theta)});
    }
    return anchors;
}

void validate_config(const SynthConfig& cfg) {
    if (cfg.grid < 8) {
        throw ConfigError("grid must be >= 8");
    }
    if (cfg.k < 1) {
        throw ConfigError("k must be >= 1");
    }
    if (cfg.n_per_component < 1) {
        throw ConfigError("n_per_component must be >= 1");
    }
    if (cfg.latent_dim < 0 || cfg.latent_dim > kMaxLatent) {
        throw ConfigError("latent_dim must be in [0, 8]");
    }
    if (cfg.noise_sigma < 0.0) {
        throw ConfigError("noise sigma must be >= 0");
    }
    if (!(cfg.base_radius > 0.0)) {
        throw ConfigError("base radius must be > 0");
    }
    if (!cfg.bumps_per_component.empty() &&
        static_cast<int>(cfg.bumps_per_component.size()) != cfg.k) {
        throw ConfigError("bumps_per_component must list one count per component");
    }
}

struct GeneratedCase {
    int component = 0;
    RadialGrid field;
    VectorXd shape;
};

// Template radii (no latent variation) for one component.
VectorXd template_radii(const SynthConfig& cfg,
                        const std::vector<Vector3d>& directions, int component) {
    const int bumps = cfg.bumps_per_component.empty()
                          ? component + 2
                          : cfg.bumps_per_component[component];
    const auto anchors = bump_anchors(component, bumps);
    VectorXd radii = VectorXd::Constant(directions.size(), cfg.base_radius);
    const double inv_two_width_sq = 1.0 / (2.0 * cfg.bump_width * cfg.bump_width);
    for (std::size_t node = 0; node < directions.size(); ++node) {
        for (const auto& anchor : anchors) {
            const double cosine =
                std::clamp(directions[node].dot(anchor), -1.0, 1.0);
            const double angle = std::acos(cosine);
            radii[static_cast<Eigen::Index>(node)] +=
                cfg.bump_amplitude * std::exp(-angle * angle * inv_two_width_sq);
        }
    }
    return radii;
}

VectorXd shape_from_radii(const VectorXd& radii,
                          const std::vector<Vector3d>& directions,
                          const Vector3d& center) {
    VectorXd shape(3 * radii.size());
    for (Eigen::Index i = 0; i < radii.size(); ++i) {
        shape.segment<3>(3 * i) = center + radii[i] * directions[i];
    }
    return shape;
}

struct Blueprint {
    std::vector<Vector3d> directions; // per landmark
    Vector3d center;
    std::vector<VectorXd> templates; // per component, node radii
    std::vector<GeneratedCase> cases;
};

Blueprint make_cases(const SynthConfig& cfg) {
    validate_config(cfg);
    const int m = synth_landmark_count(cfg.grid);

    Blueprint bp;
    bp.directions.reserve(m);
    bp.directions.push_back(grid_direction(cfg.grid, 0, 0));
    for (int row = 1; row <= cfg.grid - 2; ++row) {
        for (int col = 0; col < cfg.grid; ++col) {
            bp.directions.push_back(grid_direction(cfg.grid, row, col));
        }
    }
    bp.directions.push_back(grid_direction(cfg.grid, cfg.grid - 1, 0));

    const IntensityVolume dummy(cfg.dims, cfg.spacing, {0.0, 0.0, 0.0},
                                std::vector<double>(
                                    static_cast<std::size_t>(cfg.dims[0]) *
                                        cfg.dims[1] * cfg.dims[2],
                                    0.0));
    bp.center = dummy.world_center();

    bp.templates.reserve(cfg.k);
    for (int component = 0; component < cfg.k; ++component) {
        bp.templates.push_back(template_radii(cfg, bp.directions, component));
    }

    const int total = cfg.k * cfg.n_per_component;
    bp.cases.resize(total);
    for (int index = 0; index < total; ++index) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(index)));
        GeneratedCase& item = bp.cases[index];
        item.component = rng.uniform_int(cfg.k);
        VectorXd radii = bp.templates[item.component];
        for (int mode = 0; mode < cfg.latent_dim; ++mode) {
            const double scale =
                cfg.latent_amplitude * std::pow(kLatentDecay, mode);
            const double coeff = scale * rng.normal();
            for (int node = 0; node < m; ++node) {
                radii[node] += coeff * latent_basis(mode, bp.directions[node]);
            }
        }
        if (radii.minCoeff() <= 0.0) {
            throw ConfigError("case " + std::to_string(index) +
                              " is not star-shaped (min radius " +
                              std::to_string(radii.minCoeff()) + ")");
        }
        item.field = RadialGrid{cfg.grid, radii};
        item.shape = shape_from_radii(radii, bp.directions, bp.center);
    }
    return bp;
}

// Bilinear interpolation of node radii in the (theta, phi) chart.
double radial_interp(const RadialGrid& field, const Vector3d& offset) {
    const int grid = field.grid;
    const double dist = offset.norm();
    if (dist < 1e-12) {
        return field.values[0];
    }
    const double theta = std::acos(std::clamp(offset[2] / dist, -1.0, 1.0));
    double phi = std::atan2(offset[1], offset[0]);
    if (phi < 0.0) {
        phi += 2.0 * kPi;
    }
    const double u = theta / (kPi / (grid - 1));
    int row = std::min(static_cast<int>(u), grid - 2);
    const double fu = std::clamp(u - row, 0.0, 1.0);
    const double v = phi / (2.0 * kPi / grid);
    int col = std::min(static_cast<int>(v), grid - 1);
    const double fv = std::clamp(v - col, 0.0, 1.0);

    auto value = [&](int r, int c) {
        return field.values[node_index(grid, r, c)];
    };
    return (1.0 - fu) * ((1.0 - fv) * value(row, col) + fv * value(row, col + 1)) +
           fu * ((1.0 - fv) * value(row + 1, col) + fv * value(row + 1, col + 1));
}

} // namespace

int synth_landmark_count(int grid) { return grid * (grid - 2) + 2; }

std::vector<std::array<int, 3>> sphere_triangles(int grid) {
    std::vector<std::array<int, 3>> triangles;
    triangles.reserve(2 * grid * (grid - 2));
    const int south = synth_landmark_count(grid) - 1;
    for (int col = 0; col < grid; ++col) {
        triangles.push_back({0, node_index(grid, 1, col),
                             node_index(grid, 1, col + 1)});
    }
    for (int row = 1; row <= grid - 3; ++row) {
        for (int col = 0; col < grid; ++col) {
            const int a = node_index(grid, row, col);
            const int b = node_index(grid, row, col + 1);
            const int c = node_index(grid, row + 1, col);
            const int d = node_index(grid, row + 1, col + 1);
            triangles.push_back({a, c, b});
            triangles.push_back({b, c, d});
        }
    }
    for (int col = 0; col < grid; ++col) {
        triangles.push_back({south, node_index(grid, grid - 2, col + 1),
                             node_index(grid, grid - 2, col)});
    }

    // Orient outward: flip everything if the signed volume of the unit
    // sphere mesh comes out negative.
    std::vector<Vector3d> points;
    points.reserve(synth_landmark_count(grid));
    points.push_back(grid_direction(grid, 0, 0));
    for (int row = 1; row <= grid - 2; ++row) {
        for (int col = 0; col < grid; ++col) {
            points.push_back(grid_direction(grid, row, col));
        }
    }
    points.push_back(grid_direction(grid, grid - 1, 0));
    double signed_volume = 0.0;
    for (const auto& tri : triangles) {
        signed_volume +=
            points[tri[0]].dot(points[tri[1]].cross(points[tri[2]]));
    }
    if (signed_volume < 0.0) {
        for (auto& tri : triangles) {
            std::swap(tri[1], tri[2]);
        }
    }
    return triangles;
}

std::pair<IntensityVolume, IntensityVolume> render_volume(const RadialGrid& field,
                                                          const SynthConfig& cfg,
                                                          std::uint64_t noise_seed) {
    const auto [nx, ny, nz] = cfg.dims;
    std::vector<double> image(static_cast<std::size_t>(nx) * ny * nz);
    std::vector<double> label(image.size());

    const IntensityVolume probe(cfg.dims, cfg.spacing, {0.0, 0.0, 0.0},
                                std::vector<double>(image.size(), 0.0));
    const Vector3d center = probe.world_center();
    const double contrast = cfg.inside - cfg.outside;

    parallel_for(nz, [&](std::int64_t k) {
        Rng rng(mix_seed(noise_seed, static_cast<std::uint64_t>(k)));
        std::size_t at = static_cast<std::size_t>(k) * nx * ny;
        for (int j = 0; j < ny; ++j) {
            for (int i = 0; i < nx; ++i, ++at) {
                const Vector3d p{cfg.spacing[0] * i, cfg.spacing[1] * j,
                                 cfg.spacing[2] * static_cast<double>(k)};
                const Vector3d offset = p - center;
                const double dist = offset.norm();
                const double radius = radial_interp(field, offset);
                label[at] = dist < radius ? 1.0 : 0.0;

                double value;
                if (cfg.edge_width > 0.0) {
                    value = cfg.outside +
                            contrast /
                                (1.0 + std::exp(-(radius - dist) / cfg.edge_width));
                } else {
                    value = dist < radius ? cfg.inside : cfg.outside;
                }
                if (cfg.noise_sigma > 0.0) {
                    value += cfg.noise_sigma * rng.normal();
                }
                if (cfg.bias_amplitude != 0.0) {
                    value += cfg.bias_amplitude *
                             std::sin(kPi * i / (nx - 1)) *
                             std::sin(kPi * j / (ny - 1)) *
                             std::sin(kPi * static_cast<double>(k) / (nz - 1));
                }
                image[at] = value;
            }
        }
    });

    IntensityVolume image_volume(cfg.dims, cfg.spacing, {0.0, 0.0, 0.0},
                                 std::move(image));
    IntensityVolume label_volume(cfg.dims, cfg.spacing, {0.0, 0.0, 0.0},
                                 std::move(label));
    return {std::move(image_volume), std::move(label_volume)};
}

SynthShapes generate_shapes(const SynthConfig& cfg) {
    const Blueprint bp = make_cases(cfg);
    const int total = static_cast<int>(bp.cases.size());
    const int test_count = total / 5;
    const int train_count = total - test_count;

    SynthShapes out;
    for (int index = 0; index < total; ++index) {
        if (index < train_count) {
            out.train.push_back(bp.cases[index].shape);
            out.train_labels.push_back(bp.cases[index].component);
        } else {
            out.test.push_back(bp.cases[index].shape);
            out.test_labels.push_back(bp.cases[index].component);
        }
    }
    for (const auto& radii : bp.templates) {
        out.component_means.push_back(
            shape_from_radii(radii, bp.directions, bp.center));
    }
    return out;
}

SynthPopulation generate_population(const SynthConfig& cfg) {
    const Blueprint bp = make_cases(cfg);
    const int total = static_cast<int>(bp.cases.size());
    const int test_count = total / 5;
    const int train_count = total - test_count;

    std::vector<SynthCase> rendered(total);
    parallel_for(total, [&](std::int64_t index) {
        const GeneratedCase& item = bp.cases[index];
        SynthCase& out = rendered[index];
        out.shape = item.shape;
        out.component_id = item.component;
        auto [image, label] = render_volume(
            item.field, cfg,
            mix_seed(cfg.seed ^ 0x5eedu, static_cast<std::uint64_t>(index)));
        out.image = std::move(image);
        out.label = std::move(label);
    });

    SynthPopulation population;
    population.triangles = sphere_triangles(cfg.grid);
    for (int index = 0; index < total; ++index) {
        if (index < train_count) {
            population.truth.train_labels.push_back(rendered[index].component_id);
            population.train.push_back(std::move(rendered[index]));
        } else {
            population.truth.test_labels.push_back(rendered[index].component_id);
            population.test.push_back(std::move(rendered[index]));
        }
    }
    for (const auto& radii : bp.templates) {
        population.truth.component_means.push_back(
            shape_from_radii(radii, bp.directions, bp.center));
    }
    return population;
}

void write_population(const SynthPopulation& population, const SynthConfig& cfg,
                      const std::string& dir) {
    fs::create_directories(dir);
    const fs::path base(dir);

    json cases = json::array();
    auto write_case = [&](const SynthCase& item, int index, const char* split) {
        char name[32];
        std::snprintf(name, sizeof(name), "case_%03d", index);
        write_volume(item.image, (base / (std::string(name) + "_image.json")).string());
        write_volume(item.label, (base / (std::string(name) + "_label.json")).string());
        write_landmarks_csv(item.shape,
                            (base / (std::string(name) + "_shape.csv")).string());
        cases.push_back({{"name", name},
                         {"component", item.component_id},
                         {"split", split},
                         {"image", std::string(name) + "_image.json"},
                         {"label", std::string(name) + "_label.json"},
                         {"shape", std::string(name) + "_shape.csv"}});
    };
    int index = 0;
    for (const auto& item : population.train) {
        write_case(item, index++, "train");
    }
    for (const auto& item : population.test) {
        write_case(item, index++, "test");
    }

    json triangles = json::array();
    for (const auto& tri : population.triangles) {
        triangles.push_back({tri[0], tri[1], tri[2]});
    }

    json manifest = {
        {"seed", cfg.seed},
        {"grid", cfg.grid},
        {"m", synth_landmark_count(cfg.grid)},
        {"k", cfg.k},
        {"n_train", population.train.size()},
        {"n_test", population.test.size()},
        {"cases", std::move(cases)},
        {"triangles", std::move(triangles)},
    };
    std::ofstream out(base / "manifest.json");
    if (!out) {
        throw FormatError("cannot write manifest.json in " + dir);
    }
    out << manifest.dump(2) << "\n";
}

} // namespace shapegem
