#include "shapegem/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "shapegem/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace shapegem {

IntensityVolume::IntensityVolume(std::array<int, 3> dims_in,
                                 std::array<double, 3> spacing_in,
                                 std::array<double, 3> origin_in,
                                 std::vector<double> values)
    : dims(dims_in), spacing(spacing_in), origin(origin_in), data(std::move(values)) {
    for (int axis = 0; axis < 3; ++axis) {
        if (dims[axis] < 2) {
            throw FormatError("volume dims must all be >= 2");
        }
        if (!(spacing[axis] > 0.0) || !std::isfinite(spacing[axis])) {
            throw FormatError("volume spacing must be positive and finite");
        }
        if (!std::isfinite(origin[axis])) {
            throw FormatError("volume origin must be finite");
        }
    }
    if (data.size() != voxel_count()) {
        throw FormatError("volume payload size does not match dims");
    }
    for (const double v : data) {
        if (!std::isfinite(v)) {
            throw FormatError("volume contains non-finite values");
        }
    }
}

Eigen::Vector3d IntensityVolume::world_center() const {
    return {origin[0] + spacing[0] * (dims[0] - 1) * 0.5,
            origin[1] + spacing[1] * (dims[1] - 1) * 0.5,
            origin[2] + spacing[2] * (dims[2] - 1) * 0.5};
}

double sample(const IntensityVolume& volume, const Eigen::Vector3d& point) {
    double frac[3];
    int base[3];
    for (int axis = 0; axis < 3; ++axis) {
        double q = (point[axis] - volume.origin[axis]) / volume.spacing[axis];
        q = std::clamp(q, 0.0, static_cast<double>(volume.dims[axis] - 1));
        int lo = static_cast<int>(std::floor(q));
        lo = std::min(lo, volume.dims[axis] - 2);
        base[axis] = lo;
        frac[axis] = q - lo;
    }
    double value = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
        const int dx = corner & 1;
        const int dy = (corner >> 1) & 1;
        const int dz = (corner >> 2) & 1;
        const double weight = (dx ? frac[0] : 1.0 - frac[0]) *
                              (dy ? frac[1] : 1.0 - frac[1]) *
                              (dz ? frac[2] : 1.0 - frac[2]);
        value += weight * volume.at(base[0] + dx, base[1] + dy, base[2] + dz);
    }
    return value;
}

namespace {

// One separable smoothing pass along `axis` with border renormalization.
std::vector<double> smooth_axis(const IntensityVolume& shape_ref,
                                const std::vector<double>& input, int axis) {
    static const double taps[5] = {std::exp(-2.0), std::exp(-0.5), 1.0,
                                   std::exp(-0.5), std::exp(-2.0)};
    const auto& dims = shape_ref.dims;
    std::vector<double> output(input.size());
    const int n = dims[axis];

    std::array<std::size_t, 3> stride = {
        1, static_cast<std::size_t>(dims[0]),
        static_cast<std::size_t>(dims[0]) * dims[1]};

    const int other_a = axis == 0 ? 1 : 0;
    const int other_b = axis == 2 ? 1 : 2;
    for (int b = 0; b < dims[other_b]; ++b) {
        for (int a = 0; a < dims[other_a]; ++a) {
            const std::size_t row = stride[other_a] * a + stride[other_b] * b;
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                double norm = 0.0;
                for (int t = -2; t <= 2; ++t) {
                    const int j = i + t;
                    if (j < 0 || j >= n) {
                        continue;
                    }
                    acc += taps[t + 2] * input[row + stride[axis] * j];
                    norm += taps[t + 2];
                }
                output[row + stride[axis] * i] = acc / norm;
            }
        }
    }
    return output;
}

IntensityVolume downsample(const IntensityVolume& fine) {
    std::vector<double> smoothed = fine.data;
    for (int axis = 0; axis < 3; ++axis) {
        smoothed = smooth_axis(fine, smoothed, axis);
    }
    std::array<int, 3> coarse_dims;
    for (int axis = 0; axis < 3; ++axis) {
        coarse_dims[axis] = (fine.dims[axis] + 1) / 2;
    }
    std::vector<double> coarse(static_cast<std::size_t>(coarse_dims[0]) *
                               coarse_dims[1] * coarse_dims[2]);
    std::size_t out = 0;
    for (int k = 0; k < coarse_dims[2]; ++k) {
        for (int j = 0; j < coarse_dims[1]; ++j) {
            for (int i = 0; i < coarse_dims[0]; ++i) {
                coarse[out++] = smoothed[fine.index(2 * i, 2 * j, 2 * k)];
            }
        }
    }
    return IntensityVolume(
        coarse_dims,
        {fine.spacing[0] * 2.0, fine.spacing[1] * 2.0, fine.spacing[2] * 2.0},
        fine.origin, std::move(coarse));
}

fs::path header_path(const std::string& path) {
    fs::path p(path);
    if (p.extension() != ".json") {
        p += ".json";
    }
    return p;
}

} // namespace

VolumePyramid build_pyramid(const IntensityVolume& volume, int n_levels) {
    if (n_levels < 1) {
        throw TooManyLevels("pyramid needs at least one level");
    }
    VolumePyramid pyramid;
    pyramid.levels.push_back(volume);
    for (int level = 1; level < n_levels; ++level) {
        const IntensityVolume& prev = pyramid.levels.back();
        for (int axis = 0; axis < 3; ++axis) {
            if ((prev.dims[axis] + 1) / 2 < 2) {
                throw TooManyLevels("pyramid level " + std::to_string(level) +
                                    " would have a dim < 2");
            }
        }
        pyramid.levels.push_back(downsample(prev));
    }
    return pyramid;
}

IntensityVolume read_volume(const std::string& path) {
    const fs::path header = header_path(path);
    std::ifstream header_stream(header);
    if (!header_stream) {
        throw FormatError("cannot open volume header: " + header.string());
    }
    json meta;
    try {
        header_stream >> meta;
    } catch (const json::exception& e) {
        throw FormatError("bad volume header " + header.string() + ": " + e.what());
    }

    std::array<int, 3> dims;
    std::array<double, 3> spacing;
    std::array<double, 3> origin;
    std::string raw_name;
    try {
        for (int axis = 0; axis < 3; ++axis) {
            dims[axis] = meta.at("dims").at(axis).get<int>();
            spacing[axis] = meta.at("spacing").at(axis).get<double>();
            origin[axis] = meta.at("origin").at(axis).get<double>();
        }
        if (meta.at("dtype").get<std::string>() != "f32le") {
            throw FormatError("unsupported dtype in " + header.string());
        }
        raw_name = meta.at("raw").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError("bad volume header " + header.string() + ": " + e.what());
    }

    const fs::path raw_path = header.parent_path() / raw_name;
    std::ifstream raw_stream(raw_path, std::ios::binary);
    if (!raw_stream) {
        throw FormatError("cannot open volume payload: " + raw_path.string());
    }
    raw_stream.seekg(0, std::ios::end);
    const std::uint64_t bytes = static_cast<std::uint64_t>(raw_stream.tellg());
    raw_stream.seekg(0, std::ios::beg);

    const std::uint64_t expected =
        4ull * static_cast<std::uint64_t>(dims[0]) * dims[1] * dims[2];
    if (bytes != expected) {
        throw FormatError("volume payload size mismatch in " + raw_path.string() +
                          ": expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(bytes));
    }

    std::vector<float> raw(expected / 4);
    raw_stream.read(reinterpret_cast<char*>(raw.data()),
                    static_cast<std::streamsize>(bytes));
    if (!raw_stream) {
        throw FormatError("short read from " + raw_path.string());
    }
    std::vector<double> values(raw.begin(), raw.end());
    return IntensityVolume(dims, spacing, origin, std::move(values));
}

void write_volume(const IntensityVolume& volume, const std::string& path) {
    const fs::path header = header_path(path);
    fs::path raw_path = header;
    raw_path.replace_extension(".raw");

    std::vector<float> raw(volume.data.size());
    for (std::size_t i = 0; i < volume.data.size(); ++i) {
        if (!std::isfinite(volume.data[i])) {
            throw FormatError("refusing to write non-finite voxel value");
        }
        raw[i] = static_cast<float>(volume.data[i]);
    }

    json meta = {
        {"dims", {volume.dims[0], volume.dims[1], volume.dims[2]}},
        {"spacing", {volume.spacing[0], volume.spacing[1], volume.spacing[2]}},
        {"origin", {volume.origin[0], volume.origin[1], volume.origin[2]}},
        {"dtype", "f32le"},
        {"raw", raw_path.filename().string()},
    };
    std::ofstream header_stream(header);
    if (!header_stream) {
        throw FormatError("cannot write volume header: " + header.string());
    }
    header_stream << meta.dump(2) << "\n";

    std::ofstream raw_stream(raw_path, std::ios::binary);
    if (!raw_stream) {
        throw FormatError("cannot write volume payload: " + raw_path.string());
    }
    raw_stream.write(reinterpret_cast<const char*>(raw.data()),
                     static_cast<std::streamsize>(raw.size() * 4));
}

IntensityVolume level_frame(IntensityVolume level_volume, int level) {
    const double scale = std::pow(2.0, level);
    for (int axis = 0; axis < 3; ++axis) {
        level_volume.spacing[axis] /= scale;
        level_volume.origin[axis] /= scale;
    }
    return level_volume;
}

} // namespace shapegem
