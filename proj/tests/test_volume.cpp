#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "shapegem/errors.hpp"
#include "shapegem/volume.hpp"
#include "support/testutil.hpp"

using namespace shapegem;
using Eigen::Vector3d;

TEST_CASE("sampling a constant volume returns the constant everywhere") {
    const auto vol = testutil::constant_volume({4, 4, 4}, 3.25);
    CHECK(sample(vol, {1.5, 2.0, 0.25}) == doctest::Approx(3.25).epsilon(1e-15));
    CHECK(sample(vol, {-10.0, 50.0, 1.0}) == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("sampling is linear along an axis ramp") {
    const auto vol = testutil::ramp_volume({4, 4, 4}, {1.0, 0.0, 0.0});
    CHECK(sample(vol, {1.5, 0.0, 0.0}) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(sample(vol, {2.25, 1.0, 2.0}) == doctest::Approx(2.25).epsilon(1e-14));
}

namespace {

// Direct 8-corner weighted sum, independent of the library implementation.
double interp_oracle(const IntensityVolume& vol, const Vector3d& p) {
    double q[3];
    for (int a = 0; a < 3; ++a) {
        q[a] = (p[a] - vol.origin[a]) / vol.spacing[a];
        q[a] = std::max(0.0, std::min(q[a], static_cast<double>(vol.dims[a] - 1)));
    }
    const int i0 = std::min(static_cast<int>(q[0]), vol.dims[0] - 2);
    const int j0 = std::min(static_cast<int>(q[1]), vol.dims[1] - 2);
    const int k0 = std::min(static_cast<int>(q[2]), vol.dims[2] - 2);
    const double fx = q[0] - i0;
    const double fy = q[1] - j0;
    const double fz = q[2] - k0;
    double total = 0.0;
    for (int dx = 0; dx <= 1; ++dx) {
        for (int dy = 0; dy <= 1; ++dy) {
            for (int dz = 0; dz <= 1; ++dz) {
                const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) *
                                 (dz ? fz : 1 - fz);
                total += w * vol.at(i0 + dx, j0 + dy, k0 + dz);
            }
        }
    }
    return total;
}

} // namespace

TEST_CASE("sampling matches the direct 8-corner oracle") {
    const auto vol = testutil::random_volume({4, 4, 4}, 99);

    // Exact voxel centers return stored values.
    CHECK(sample(vol, {2.0, 1.0, 3.0}) == doctest::Approx(vol.at(2, 1, 3)).epsilon(1e-15));

    // Midpoint between two centers is their average.
    const double mid = sample(vol, {1.5, 2.0, 2.0});
    CHECK(mid == doctest::Approx(0.5 * (vol.at(1, 2, 2) + vol.at(2, 2, 2))).epsilon(1e-13));

    std::mt19937_64 engine(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector3d p{6.0 * static_cast<double>(engine() >> 11) * 0x1.0p-53 - 1.5,
                         6.0 * static_cast<double>(engine() >> 11) * 0x1.0p-53 - 1.5,
                         6.0 * static_cast<double>(engine() >> 11) * 0x1.0p-53 - 1.5};
        CHECK(sample(vol, p) == doctest::Approx(interp_oracle(vol, p)).epsilon(1e-12));
    }
}

TEST_CASE("out-of-bounds points clamp to the boundary voxel") {
    const auto vol = testutil::random_volume({4, 4, 4}, 7);
    CHECK(sample(vol, {100.0, 100.0, 100.0}) ==
          doctest::Approx(vol.at(3, 3, 3)).epsilon(1e-15));
    CHECK(sample(vol, {-5.0, 1.0, 2.0}) ==
          doctest::Approx(sample(vol, {0.0, 1.0, 2.0})).epsilon(1e-15));
}

TEST_CASE("sampling is Lipschitz in the adjacent-difference constant") {
    const auto vol = testutil::random_volume({6, 6, 6}, 11);
    double max_adjacent = 0.0;
    for (int k = 0; k < 6; ++k) {
        for (int j = 0; j < 6; ++j) {
            for (int i = 0; i < 6; ++i) {
                if (i + 1 < 6) max_adjacent = std::max(max_adjacent, std::abs(vol.at(i + 1, j, k) - vol.at(i, j, k)));
                if (j + 1 < 6) max_adjacent = std::max(max_adjacent, std::abs(vol.at(i, j + 1, k) - vol.at(i, j, k)));
                if (k + 1 < 6) max_adjacent = std::max(max_adjacent, std::abs(vol.at(i, j, k + 1) - vol.at(i, j, k)));
            }
        }
    }
    std::mt19937_64 engine(13);
    auto uniform = [&]() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; };
    for (int trial = 0; trial < 300; ++trial) {
        const Vector3d p{5.0 * uniform(), 5.0 * uniform(), 5.0 * uniform()};
        const Vector3d delta{0.2 * (uniform() - 0.5), 0.2 * (uniform() - 0.5),
                             0.2 * (uniform() - 0.5)};
        const double change = std::abs(sample(vol, p + delta) - sample(vol, p));
        const double bound = max_adjacent * delta.cwiseAbs().sum();
        CHECK(change <= bound + 1e-12);
    }
}

TEST_CASE("pyramid of a constant volume stays constant at every level") {
    const auto vol = testutil::constant_volume({16, 16, 16}, 0.75);
    const auto pyramid = build_pyramid(vol, 3);
    REQUIRE(pyramid.levels.size() == 3);
    double previous_mean = 0.75;
    for (std::size_t level = 0; level < 3; ++level) {
        const auto& v = pyramid.levels[level];
        double mean = 0.0;
        for (const double value : v.data) {
            CHECK(value == doctest::Approx(0.75).epsilon(1e-12));
            mean += value;
        }
        mean /= static_cast<double>(v.data.size());
        CHECK(mean == doctest::Approx(previous_mean).epsilon(1e-6));
        previous_mean = mean;
    }

    CHECK(pyramid.levels[1].dims == std::array<int, 3>{8, 8, 8});
    CHECK(pyramid.levels[2].dims == std::array<int, 3>{4, 4, 4});
    CHECK(pyramid.levels[1].spacing[0] == doctest::Approx(2.0));
    CHECK(pyramid.levels[2].spacing[0] == doctest::Approx(4.0));
}

TEST_CASE("single-level pyramid is the input volume") {
    const auto vol = testutil::random_volume({5, 7, 4}, 21);
    const auto pyramid = build_pyramid(vol, 1);
    REQUIRE(pyramid.levels.size() == 1);
    CHECK(pyramid.levels[0].data == vol.data);
    CHECK(pyramid.levels[0].dims == vol.dims);
}

namespace {

// Dense smoothing oracle: per-axis renormalized kernels multiply, so the
// composite 3-D weight for (a,b,c) -> (i,j,k) is the product of per-axis
// renormalized taps. Then subsample even indices.
IntensityVolume pyramid_oracle_level1(const IntensityVolume& fine) {
    const double taps[5] = {std::exp(-2.0), std::exp(-0.5), 1.0, std::exp(-0.5),
                            std::exp(-2.0)};
    auto axis_weight = [&](int from, int to, int n) {
        double norm = 0.0;
        for (int t = -2; t <= 2; ++t) {
            if (to + t >= 0 && to + t < n) {
                norm += taps[t + 2];
            }
        }
        const int offset = from - to;
        if (offset < -2 || offset > 2) {
            return 0.0;
        }
        return taps[offset + 2] / norm;
    };

    std::array<int, 3> coarse_dims{(fine.dims[0] + 1) / 2, (fine.dims[1] + 1) / 2,
                                   (fine.dims[2] + 1) / 2};
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(coarse_dims[0]) * coarse_dims[1] *
                coarse_dims[2]);
    for (int k = 0; k < coarse_dims[2]; ++k) {
        for (int j = 0; j < coarse_dims[1]; ++j) {
            for (int i = 0; i < coarse_dims[0]; ++i) {
                const int ci = 2 * i;
                const int cj = 2 * j;
                const int ck = 2 * k;
                double value = 0.0;
                for (int a = 0; a < fine.dims[0]; ++a) {
                    const double wx = axis_weight(a, ci, fine.dims[0]);
                    if (wx == 0.0) continue;
                    for (int b = 0; b < fine.dims[1]; ++b) {
                        const double wy = axis_weight(b, cj, fine.dims[1]);
                        if (wy == 0.0) continue;
                        for (int c = 0; c < fine.dims[2]; ++c) {
                            const double wz = axis_weight(c, ck, fine.dims[2]);
                            if (wz == 0.0) continue;
                            value += wx * wy * wz * fine.at(a, b, c);
                        }
                    }
                }
                out.push_back(value);
            }
        }
    }
    return IntensityVolume(coarse_dims,
                           {2 * fine.spacing[0], 2 * fine.spacing[1],
                            2 * fine.spacing[2]},
                           fine.origin, std::move(out));
}

} // namespace

TEST_CASE("impulse pyramid level matches the dense convolution oracle") {
    auto vol = testutil::constant_volume({8, 8, 8}, 0.0);
    vol.at(3, 4, 2) = 1.0;
    vol.at(0, 0, 7) = 2.0; // border case exercises renormalization

    const auto pyramid = build_pyramid(vol, 2);
    const auto expected = pyramid_oracle_level1(vol);
    REQUIRE(pyramid.levels[1].data.size() == expected.data.size());
    for (std::size_t i = 0; i < expected.data.size(); ++i) {
        CHECK(pyramid.levels[1].data[i] ==
              doctest::Approx(expected.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("too many pyramid levels is an error") {
    const auto vol = testutil::constant_volume({8, 8, 8}, 1.0);
    CHECK_NOTHROW(build_pyramid(vol, 3));
    CHECK_THROWS_AS(build_pyramid(vol, 4), TooManyLevels);
}

TEST_CASE("volume file round trip is bit-exact") {
    testutil::TempDir dir("volume-roundtrip");
    auto vol = testutil::random_volume({2, 2, 2}, 31);
    // Stored as f32; make in-memory values exactly representable first.
    for (auto& v : vol.data) {
        v = static_cast<float>(v);
    }
    vol.spacing = {1.0, 1.0, 2.0};
    vol.origin = {0.5, -1.0, 0.0};

    write_volume(vol, dir.file("vol.json"));
    const auto loaded = read_volume(dir.file("vol.json"));
    CHECK(loaded.dims == vol.dims);
    CHECK(loaded.spacing == vol.spacing);
    CHECK(loaded.origin == vol.origin);
    CHECK(loaded.data == vol.data);

    // Second generation round trip stays identical.
    write_volume(loaded, dir.file("vol2.json"));
    const auto reloaded = read_volume(dir.file("vol2.json"));
    CHECK(reloaded.data == loaded.data);
}

TEST_CASE("header metadata passes through unchanged") {
    testutil::TempDir dir("volume-meta");
    std::vector<double> data(27, 1.0);
    const IntensityVolume vol({3, 3, 3}, {1.0, 1.0, 2.0}, {0, 0, 0}, data);
    write_volume(vol, dir.file("meta.json"));
    const auto loaded = read_volume(dir.file("meta.json"));
    CHECK(loaded.dims == std::array<int, 3>{3, 3, 3});
    CHECK(loaded.spacing == std::array<double, 3>{1.0, 1.0, 2.0});
}

TEST_CASE("payload size mismatch is a FormatError") {
    testutil::TempDir dir("volume-badraw");
    const auto vol = testutil::constant_volume({3, 3, 3}, 1.0);
    write_volume(vol, dir.file("bad.json"));
    // Truncate the payload.
    std::ofstream raw(dir.file("bad.raw"), std::ios::binary | std::ios::trunc);
    raw << "wrong";
    raw.close();
    CHECK_THROWS_AS(read_volume(dir.file("bad.json")), FormatError);
}

TEST_CASE("bad header and non-finite payload are FormatErrors") {
    testutil::TempDir dir("volume-badheader");
    std::ofstream header(dir.file("junk.json"));
    header << "{ not json";
    header.close();
    CHECK_THROWS_AS(read_volume(dir.file("junk.json")), FormatError);

    const auto vol = testutil::constant_volume({2, 2, 2}, 1.0);
    write_volume(vol, dir.file("nan.json"));
    std::ofstream raw(dir.file("nan.raw"), std::ios::binary | std::ios::trunc);
    const float bad[8] = {1, 2, 3, std::numeric_limits<float>::quiet_NaN(), 5, 6, 7, 8};
    raw.write(reinterpret_cast<const char*>(bad), sizeof(bad));
    raw.close();
    CHECK_THROWS_AS(read_volume(dir.file("nan.json")), FormatError);

    CHECK_THROWS_AS(IntensityVolume({1, 2, 2}, {1, 1, 1}, {0, 0, 0},
                                    std::vector<double>(4, 0.0)),
                    FormatError);
}
