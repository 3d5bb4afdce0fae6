#include "anomforge/phantom.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "anomforge/filters.hpp"
#include "anomforge/rng.hpp"

namespace anomforge {

namespace {

struct Ellipsoid {
    std::array<double, 3> centre;
    std::array<double, 3> axes;

    bool contains(double x, double y, double z) const {
        const double dx = (x - centre[0]) / axes[0];
        const double dy = (y - centre[1]) / axes[1];
        const double dz = (z - centre[2]) / axes[2];
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

}  // namespace

Phantom make_phantom(const PhantomSpec& spec) {
    const Dims& d = spec.dims;
    if (d.nx < 16 || d.ny < 16 || d.nz < 16) throw std::invalid_argument("make_phantom: dims must be >= 16 per axis");
    for (double v : {spec.gray, spec.white, spec.ventricle}) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("make_phantom: intensities must lie in [0, 1]");
    }
    if (spec.smoothness < 0) throw std::invalid_argument("make_phantom: smoothness must be >= 0");

    Rng rng(hash_values(spec.seed, {0xb7a1}));
    auto jit = [&](double frac) { return 1.0 + frac * rng.uniform(-1.0, 1.0); };
    const std::array<double, 3> n{static_cast<double>(d.nx), static_cast<double>(d.ny), static_cast<double>(d.nz)};

    Ellipsoid brain_e{}, wm_e{};
    for (int a = 0; a < 3; ++a) {
        brain_e.centre[a] = 0.5 * (n[a] - 1.0) + 0.02 * n[a] * rng.uniform(-1.0, 1.0);
        brain_e.axes[a] = 0.42 * n[a] * jit(0.05);
    }
    for (int a = 0; a < 3; ++a) {
        wm_e.centre[a] = brain_e.centre[a];
        wm_e.axes[a] = 0.82 * brain_e.axes[a] * jit(0.03);
    }
    std::array<Ellipsoid, 2> vent{};
    const double vx_off = 0.18 * brain_e.axes[0] * jit(0.1);
    for (int k = 0; k < 2; ++k) {
        vent[k].centre = brain_e.centre;
        vent[k].centre[0] += (k == 0 ? -vx_off : vx_off);
        vent[k].axes = {0.08 * brain_e.axes[0] * jit(0.1), 0.3 * brain_e.axes[1] * jit(0.1),
                        0.15 * brain_e.axes[2] * jit(0.1)};
    }

    Phantom ph{Volume3D(d), Volume3D(d), BinaryMask3D(d), BinaryMask3D(d)};
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                const double fx = static_cast<double>(x), fy = static_cast<double>(y), fz = static_cast<double>(z);
                if (!brain_e.contains(fx, fy, fz)) continue;
                const std::size_t i = ph.unsmoothed.index(x, y, z);
                ph.brain.set(i, true);
                double v = spec.gray;
                if (vent[0].contains(fx, fy, fz) || vent[1].contains(fx, fy, fz)) {
                    v = spec.ventricle;
                } else if (wm_e.contains(fx, fy, fz)) {
                    v = spec.white;
                    ph.wm_mask.set(i, true);
                }
                ph.unsmoothed[i] = v;
            }

    ph.volume = spec.smoothness > 0
                    ? separable_filter(ph.unsmoothed, gaussian_kernel(0.5 * spec.smoothness, spec.smoothness))
                    : ph.unsmoothed;
    for (std::size_t i = 0; i < ph.volume.size(); ++i) {
        if (!ph.brain[i]) ph.volume[i] = 0.0;
    }
    return ph;
}

std::vector<Offset3> sphere_offsets(double radius) {
    const auto r = static_cast<std::ptrdiff_t>(std::floor(radius));
    const double r2 = radius * radius;
    std::vector<Offset3> out;
    for (std::ptrdiff_t dz = -r; dz <= r; ++dz)
        for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
            for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                if (static_cast<double>(dx * dx + dy * dy + dz * dz) <= r2) out.push_back({dx, dy, dz});
            }
    return out;
}

LesionSeed make_lesion_seed(const BinaryMask3D& brain, double radius, std::uint64_t rng_seed) {
    if (!(radius >= 1.0)) throw std::invalid_argument("make_lesion_seed: radius must be >= 1");
    const Dims& d = brain.dims();
    const auto offsets = sphere_offsets(radius);
    auto fits = [&](std::size_t i) {
        const auto x = static_cast<std::ptrdiff_t>(i % d.nx);
        const auto y = static_cast<std::ptrdiff_t>((i / d.nx) % d.ny);
        const auto z = static_cast<std::ptrdiff_t>(i / (d.nx * d.ny));
        for (const auto& o : offsets) {
            const std::ptrdiff_t px = x + o[0], py = y + o[1], pz = z + o[2];
            if (px < 0 || py < 0 || pz < 0 || px >= static_cast<std::ptrdiff_t>(d.nx) ||
                py >= static_cast<std::ptrdiff_t>(d.ny) || pz >= static_cast<std::ptrdiff_t>(d.nz))
                return false;
            if (!brain.at(static_cast<std::size_t>(px), static_cast<std::size_t>(py), static_cast<std::size_t>(pz)))
                return false;
        }
        return true;
    };

    std::vector<std::size_t> voxels;
    for (std::size_t i = 0; i < brain.size(); ++i) {
        if (brain[i]) voxels.push_back(i);
    }
    if (voxels.empty()) throw std::runtime_error("make_lesion_seed: empty brain mask");

    Rng rng(hash_values(rng_seed, {0x1e51}));
    std::optional<std::size_t> centre;
    for (int attempt = 0; attempt < 256 && !centre; ++attempt) {
        const std::size_t i = voxels[rng.below(voxels.size())];
        if (fits(i)) centre = i;
    }
    if (!centre) {
        std::vector<std::size_t> feasible;
        for (std::size_t i : voxels) {
            if (fits(i)) feasible.push_back(i);
        }
        if (feasible.empty()) throw std::runtime_error("make_lesion_seed: no sphere of this radius fits in the brain");
        centre = feasible[rng.below(feasible.size())];
    }

    LesionSeed out{BinaryMask3D(d), {0, 0, 0}};
    const auto cx = static_cast<std::ptrdiff_t>(*centre % d.nx);
    const auto cy = static_cast<std::ptrdiff_t>((*centre / d.nx) % d.ny);
    const auto cz = static_cast<std::ptrdiff_t>(*centre / (d.nx * d.ny));
    for (const auto& o : offsets) {
        out.lesion_mask.set(static_cast<std::size_t>(cx + o[0]), static_cast<std::size_t>(cy + o[1]),
                            static_cast<std::size_t>(cz + o[2]), true);
    }
    return out;
}

}  // namespace anomforge
