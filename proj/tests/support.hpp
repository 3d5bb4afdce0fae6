#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "anomforge/rng.hpp"
#include "anomforge/volume.hpp"

namespace testing {

using namespace anomforge;

// Values are float32-representable so NIfTI round trips compare exactly.
inline Volume3D random_volume(Dims d, std::uint64_t seed, double lo = 0.0, double hi = 1.0, Spacing s = {}) {
    Rng rng(seed);
    Volume3D v(d, s);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

inline BinaryMask3D random_mask(Dims d, std::uint64_t seed, double p) {
    Rng rng(seed);
    BinaryMask3D m(d);
    for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.bernoulli(p));
    return m;
}

inline BinaryMask3D box_mask(Dims d, std::size_t lo, std::size_t hi) {
    BinaryMask3D m(d);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x)
                m.set(x, y, z, x >= lo && x < hi && y >= lo && y < hi && z >= lo && z < hi);
    return m;
}

inline BinaryMask3D ball_mask(Dims d, double cx, double cy, double cz, double r) {
    BinaryMask3D m(d);
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const double dx = double(x) - cx, dy = double(y) - cy, dz = double(z) - cz;
                m.set(x, y, z, dx * dx + dy * dy + dz * dz <= r * r);
            }
    return m;
}

inline double mask_sum(const Volume3D& v, const BinaryMask3D& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (m[i]) s += v[i];
    return s;
}

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("anomforge_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace testing
