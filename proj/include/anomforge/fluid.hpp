#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>

#include "anomforge/volume.hpp"

namespace anomforge {

struct PerlinParams {
    std::uint64_t seed = 0;
    int octaves = 4;
    double base_frequency = 2.0;  // cycles per grid axis
    double persistence = 0.5;
    double amplitude = 1.0;
};

// Largest |value| a single unit-amplitude octave can reach (unit-length
// lattice gradients, quintic fade): sqrt(3)/2.
inline constexpr double kPerlinOctaveBound = 0.86602540378443864676;

// Octave sum of 3D gradient noise. Lattice gradients come from a hash of
// (seed, octave, cell), so the field is a pure function of its inputs.
Volume3D perlin3(const PerlinParams& params, const Dims& dims, const Spacing& spacing = {});

struct PotentialSet {
    std::array<Volume3D, 3> psi;  // vector potential
    Volume3D phi;                 // scalar potential, D = phi^2
};

struct VelocityField {
    std::array<Volume3D, 3> component;
};

struct DiffusivityField {
    Volume3D d;
};

struct PotentialParams {
    std::uint64_t seed = 0;
    int octaves = 4;
    double base_frequency = 2.0;
    double persistence = 0.5;
    double amplitude_v = 0.5;   // target max |curl psi|, voxels per unit time
    double amplitude_d = 0.25;  // target max phi^2, voxels^2 per unit time
};

// Draws Perlin potentials and rescales them so the resulting velocity and
// diffusivity peak at the requested amplitudes.
PotentialSet make_potentials(const PotentialParams& params, const Dims& dims, const Spacing& spacing = {});

// v = curl(psi) in voxel units: central differences inside, one-sided on the
// array border.
VelocityField curl_velocity(const std::array<Volume3D, 3>& psi);

// Central-difference divergence matched to curl_velocity. Only voxels at
// least two cells from every array face use a fully central stencil chain;
// there it vanishes up to rounding.
Volume3D divergence(const VelocityField& v);

DiffusivityField diffusivity(const Volume3D& phi);

// Largest stable step of the explicit scheme (no safety factor), or +inf when
// both fields vanish. grid is the cell size in solver units.
double cfl_limit(const VelocityField& v, const DiffusivityField& d, const Spacing& grid = {});

// safety * min(dt_adv, dt_diff); returns t_max when both fields vanish.
double cfl_dt(const VelocityField& v, const DiffusivityField& d, const Spacing& grid, double t_max,
              double safety = 0.9);

struct StepDiagnostics {
    // Largest distance of any pre-clamp value from [0, 1].
    double max_clamp_excursion = 0.0;
};

// Admissible pre-clamp excursion; anything larger means the scheme lost
// monotonicity and step() throws.
inline constexpr double kClampTolerance = 1e-12;

// One explicit step on unit voxels: dimensionally split first-order upwind
// advection (x, y, z sweeps), then flux-form central diffusion with
// face-averaged D. Faces shared with voxels outside the mask carry zero flux.
// Voxels outside the mask stay zero.
Volume3D step(const Volume3D& p, const VelocityField& v, const DiffusivityField& d, double dt,
              const BinaryMask3D& mask, StepDiagnostics* diag = nullptr);

struct IntegrationParams {
    double t_max = 4.0;
    std::optional<double> dt;  // empty selects cfl_dt
    double safety = 0.9;
};

struct IntegrationReport {
    Volume3D p;
    std::size_t steps = 0;
    double dt = 0.0;
    double max_clamp_excursion = 0.0;
};

// Called after every step with (step index starting at 1, time, field).
using StepObserver = std::function<void(std::size_t, double, const Volume3D&)>;

IntegrationReport integrate(const Volume3D& p0, const VelocityField& v, const DiffusivityField& d,
                            const IntegrationParams& ip, const BinaryMask3D& mask,
                            const StepObserver& observer = {});

// Integrates from P0 to t_max with the potentials' velocity and diffusivity.
Volume3D randomize(const Volume3D& p0, const PotentialSet& potentials, const IntegrationParams& ip,
                   const BinaryMask3D& mask);

}  // namespace anomforge
