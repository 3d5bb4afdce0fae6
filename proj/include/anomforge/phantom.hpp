#pragma once

#include <cstdint>
#include <vector>

#include "anomforge/encoder.hpp"
#include "anomforge/volume.hpp"

namespace anomforge {

struct PhantomSpec {
    Dims dims{64, 64, 64};
    double gray = 0.4;
    double white = 0.8;
    double ventricle = 0.15;
    std::uint64_t seed = 0;
    int smoothness = 1;  // blur radius in voxels, 0 disables smoothing
};

struct Phantom {
    Volume3D volume;      // smoothed, multiplied by the brain mask
    Volume3D unsmoothed;  // piecewise constant tissue labels
    BinaryMask3D wm_mask;
    BinaryMask3D brain;
};

// Nested ellipsoids: brain (gray), white matter core, two ventricles.
// Axes and centre carry a few percent of per-seed jitter.
Phantom make_phantom(const PhantomSpec& spec);

// Offsets d with |d|^2 <= radius^2.
std::vector<Offset3> sphere_offsets(double radius);

// Sphere of the given radius centred on a uniformly chosen brain voxel whose
// whole sphere lies inside the brain. Throws std::runtime_error when no
// centre fits.
LesionSeed make_lesion_seed(const BinaryMask3D& brain, double radius, std::uint64_t rng_seed);

}  // namespace anomforge
