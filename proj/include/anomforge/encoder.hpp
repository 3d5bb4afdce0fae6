#pragma once

#include <cstdint>
#include <optional>

#include "anomforge/fluid.hpp"
#include "anomforge/volume.hpp"

namespace anomforge {

struct LesionSeed {
    BinaryMask3D lesion_mask;
    Offset3 jitter{0, 0, 0};
};

struct DeltaParams {
    double flip_probability = 0.2;
    bool clamp_output = true;
};

struct WhiteMatterStats {
    double mu_w = 0.0;
};

// P0 = 1 on the jittered lesion mask intersected with the brain, 0 elsewhere.
// Throws if nothing of the lesion lands inside the brain.
Volume3D seed_probability(const LesionSeed& seed, const BinaryMask3D& brain, const Spacing& spacing = {});

// Mean intensity inside wm_mask when given; otherwise the mean of in-brain
// voxels at or above the 60th percentile of in-brain intensities.
WhiteMatterStats estimate_mu_w(const Volume3D& vol, const std::optional<BinaryMask3D>& wm_mask,
                               const BinaryMask3D& brain);

inline constexpr double kWhiteMatterPercentile = 0.6;

struct DeltaSample {
    Volume3D delta;
    bool flipped = false;
};

// Inside the support: i.i.d. normal, mean -mu_w/2, standard deviation mu_w/2.
// Outside: exactly 0. With probability flip_probability the sign of the whole
// field is flipped (one decision per call).
DeltaSample sample_delta(const BinaryMask3D& support, double mu_w, const DeltaParams& params,
                         std::uint64_t rng_seed, const Spacing& spacing = {});

// Same draw with the flip decision fixed by the caller.
Volume3D sample_delta_fixed(const BinaryMask3D& support, double mu_w, bool flip, std::uint64_t rng_seed,
                            const Spacing& spacing = {});

// x_h + delta * P, optionally clipped to [0, 1].
Volume3D encode(const Volume3D& x_h, const Volume3D& delta, const Volume3D& p, bool clamp);

struct PseudoPathology {
    Volume3D x_p;
    Volume3D p_final;
    double mu_w = 0.0;
    bool flipped = false;
    std::size_t steps = 0;
    double dt = 0.0;
    double max_clamp_excursion = 0.0;
};

struct PathologyMasks {
    std::optional<BinaryMask3D> wm_mask;  // heuristic mu_w when empty
    std::optional<BinaryMask3D> brain;    // x_h > 0 when empty
};

// Seed of the potentials drawn for one pseudo-pathology.
std::uint64_t pathology_potential_seed(std::uint64_t potentials_seed, std::uint64_t rng_seed);

// seed_probability -> randomize -> estimate_mu_w -> sample_delta -> encode.
// Potentials are seeded from (potentials.seed, rng_seed); the flip decision
// and delta draw come from separate streams of rng_seed.
PseudoPathology make_pseudo_pathology(const Volume3D& x_h, const LesionSeed& seed, const PotentialParams& potentials,
                                      const IntegrationParams& ip, const DeltaParams& dp, std::uint64_t rng_seed,
                                      const PathologyMasks& masks = {});

}  // namespace anomforge
