#include "anomforge/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "anomforge/filters.hpp"
#include "anomforge/rng.hpp"

namespace anomforge {

Volume3D seed_probability(const LesionSeed& seed, const BinaryMask3D& brain, const Spacing& spacing) {
    require_same_dims(seed.lesion_mask.dims(), brain.dims(), "lesion mask vs brain");
    const BinaryMask3D moved = translate(seed.lesion_mask, seed.jitter);
    Volume3D p0(brain.dims(), spacing);
    std::size_t n = 0;
    for (std::size_t i = 0; i < p0.size(); ++i) {
        if (moved[i] && brain[i]) {
            p0[i] = 1.0;
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("seed_probability: lesion lies entirely outside the brain");
    return p0;
}

WhiteMatterStats estimate_mu_w(const Volume3D& vol, const std::optional<BinaryMask3D>& wm_mask,
                               const BinaryMask3D& brain) {
    require_same_dims(vol.dims(), brain.dims(), "estimate_mu_w brain");
    if (wm_mask) {
        require_same_dims(vol.dims(), wm_mask->dims(), "estimate_mu_w wm_mask");
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < vol.size(); ++i) {
            if ((*wm_mask)[i]) {
                sum += vol[i];
                ++n;
            }
        }
        if (n == 0) throw std::invalid_argument("estimate_mu_w: empty white-matter mask");
        return {sum / static_cast<double>(n)};
    }

    std::vector<double> in_brain;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (brain[i]) in_brain.push_back(vol[i]);
    }
    if (in_brain.empty()) throw std::invalid_argument("estimate_mu_w: empty brain mask");
    // Nearest-rank percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(kWhiteMatterPercentile * static_cast<double>(in_brain.size())));
    const std::size_t k = std::clamp<std::size_t>(rank, 1, in_brain.size()) - 1;
    std::nth_element(in_brain.begin(), in_brain.begin() + static_cast<std::ptrdiff_t>(k), in_brain.end());
    const double cut = in_brain[k];
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : in_brain) {
        if (v >= cut) {
            sum += v;
            ++n;
        }
    }
    return {sum / static_cast<double>(n)};
}

Volume3D sample_delta_fixed(const BinaryMask3D& support, double mu_w, bool flip, std::uint64_t rng_seed,
                            const Spacing& spacing) {
    if (!(mu_w > 0.0)) throw std::invalid_argument("sample_delta: mu_w must be > 0");
    Rng rng(hash_values(rng_seed, {0xde17aULL}));
    const double mean = -0.5 * mu_w;
    const double stddev = 0.5 * mu_w;
    const double sign = flip ? -1.0 : 1.0;
    Volume3D delta(support.dims(), spacing);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        if (support[i]) delta[i] = sign * rng.normal(mean, stddev);
    }
    return delta;
}

DeltaSample sample_delta(const BinaryMask3D& support, double mu_w, const DeltaParams& params, std::uint64_t rng_seed,
                         const Spacing& spacing) {
    if (params.flip_probability < 0.0 || params.flip_probability > 1.0) {
        throw std::invalid_argument("sample_delta: flip_probability must lie in [0, 1]");
    }
    Rng flip_rng(hash_values(rng_seed, {0xf11bULL}));
    const bool flip = flip_rng.bernoulli(params.flip_probability);
    return {sample_delta_fixed(support, mu_w, flip, rng_seed, spacing), flip};
}

Volume3D encode(const Volume3D& x_h, const Volume3D& delta, const Volume3D& p, bool clamp) {
    require_same_dims(x_h.dims(), delta.dims(), "encode delta");
    require_same_dims(x_h.dims(), p.dims(), "encode probability");
    Volume3D out(x_h.dims(), x_h.spacing());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x_h[i] + delta[i] * p[i];
        out[i] = clamp ? std::clamp(v, 0.0, 1.0) : v;
    }
    return out;
}

std::uint64_t pathology_potential_seed(std::uint64_t potentials_seed, std::uint64_t rng_seed) {
    return hash_values(potentials_seed, {rng_seed, 0x707eULL});
}

PseudoPathology make_pseudo_pathology(const Volume3D& x_h, const LesionSeed& seed, const PotentialParams& potentials,
                                      const IntegrationParams& ip, const DeltaParams& dp, std::uint64_t rng_seed,
                                      const PathologyMasks& masks) {
    const BinaryMask3D brain = masks.brain ? *masks.brain : brain_mask(x_h, 0.0);
    require_same_dims(x_h.dims(), brain.dims(), "make_pseudo_pathology brain");

    const Volume3D p0 = seed_probability(seed, brain, x_h.spacing());

    PotentialParams pp = potentials;
    pp.seed = pathology_potential_seed(potentials.seed, rng_seed);
    const PotentialSet set = make_potentials(pp, x_h.dims(), x_h.spacing());
    const IntegrationReport rep =
        integrate(p0, curl_velocity(set.psi), diffusivity(set.phi), ip, brain);

    const WhiteMatterStats wm = estimate_mu_w(x_h, masks.wm_mask, brain);
    BinaryMask3D support(x_h.dims());
    for (std::size_t i = 0; i < support.size(); ++i) support.set(i, rep.p[i] > 0.0);
    const DeltaSample ds = sample_delta(support, wm.mu_w, dp, rng_seed, x_h.spacing());

    PseudoPathology out{encode(x_h, ds.delta, rep.p, dp.clamp_output), rep.p, wm.mu_w, ds.flipped, rep.steps,
                        rep.dt, rep.max_clamp_excursion};
    return out;
}

}  // namespace anomforge
