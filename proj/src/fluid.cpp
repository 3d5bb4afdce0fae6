#include "anomforge/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "anomforge/parallel.hpp"
#include "anomforge/rng.hpp"

namespace anomforge {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Cube edge midpoints, normalized to unit length.
constexpr double kGradients[12][3] = {
    {kInvSqrt2, kInvSqrt2, 0},  {-kInvSqrt2, kInvSqrt2, 0},  {kInvSqrt2, -kInvSqrt2, 0},
    {-kInvSqrt2, -kInvSqrt2, 0}, {kInvSqrt2, 0, kInvSqrt2},  {-kInvSqrt2, 0, kInvSqrt2},
    {kInvSqrt2, 0, -kInvSqrt2}, {-kInvSqrt2, 0, -kInvSqrt2}, {0, kInvSqrt2, kInvSqrt2},
    {0, -kInvSqrt2, kInvSqrt2}, {0, kInvSqrt2, -kInvSqrt2},  {0, -kInvSqrt2, -kInvSqrt2},
};

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double lerp(double a, double b, double t) { return a + t * (b - a); }

double gradient_noise(std::uint64_t seed, double x, double y, double z) {
    const double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const auto iz = static_cast<std::int64_t>(fz);
    const double rx = x - fx, ry = y - fy, rz = z - fz;

    double corner[8];
    for (int c = 0; c < 8; ++c) {
        const int cx = c & 1, cy = (c >> 1) & 1, cz = (c >> 2) & 1;
        const std::uint64_t h = hash_values(seed, {static_cast<std::uint64_t>(ix + cx),
                                                   static_cast<std::uint64_t>(iy + cy),
                                                   static_cast<std::uint64_t>(iz + cz)});
        const double* g = kGradients[h % 12];
        corner[c] = g[0] * (rx - cx) + g[1] * (ry - cy) + g[2] * (rz - cz);
    }
    const double u = fade(rx), v = fade(ry), w = fade(rz);
    const double x00 = lerp(corner[0], corner[1], u);
    const double x10 = lerp(corner[2], corner[3], u);
    const double x01 = lerp(corner[4], corner[5], u);
    const double x11 = lerp(corner[6], corner[7], u);
    return lerp(lerp(x00, x10, v), lerp(x01, x11, v), w);
}

// Derivative along axis in voxel units.
double diff(const Volume3D& f, int axis, std::size_t x, std::size_t y, std::size_t z) {
    const Dims& d = f.dims();
    const std::size_t n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    const std::size_t c = axis == 0 ? x : axis == 1 ? y : z;
    if (n < 2) return 0.0;
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
    const std::size_t i = f.index(x, y, z);
    if (c == 0) return f[i + stride] - f[i];
    if (c == n - 1) return f[i] - f[i - stride];
    return 0.5 * (f[i + stride] - f[i - stride]);
}

double max_abs(const Volume3D& v) {
    double m = 0.0;
    for (double x : v.values()) m = std::max(m, std::fabs(x));
    return m;
}

void check_field_dims(const Dims& dims, const VelocityField& v, const DiffusivityField& d) {
    for (const auto& c : v.component) require_same_dims(dims, c.dims(), "velocity component");
    require_same_dims(dims, d.d.dims(), "diffusivity");
}

}  // namespace

Volume3D perlin3(const PerlinParams& params, const Dims& dims, const Spacing& spacing) {
    if (params.octaves < 1) throw std::invalid_argument("perlin3: octaves must be >= 1");
    if (!(params.base_frequency > 0.0)) throw std::invalid_argument("perlin3: base_frequency must be > 0");
    Volume3D out(dims, spacing);
    for (int o = 0; o < params.octaves; ++o) {
        const std::uint64_t oseed = hash_values(params.seed, {0x9e71ULL, static_cast<std::uint64_t>(o)});
        const double freq = params.base_frequency * std::ldexp(1.0, o);
        const double amp = params.amplitude * std::pow(params.persistence, o);
        const double kx = freq / static_cast<double>(dims.nx);
        const double ky = freq / static_cast<double>(dims.ny);
        const double kz = freq / static_cast<double>(dims.nz);
        parallel_for(0, dims.nz, [&](std::size_t z) {
            const double pz = (static_cast<double>(z) + 0.5) * kz;
            for (std::size_t y = 0; y < dims.ny; ++y) {
                const double py = (static_cast<double>(y) + 0.5) * ky;
                for (std::size_t x = 0; x < dims.nx; ++x) {
                    const double px = (static_cast<double>(x) + 0.5) * kx;
                    out.at(x, y, z) += amp * gradient_noise(oseed, px, py, pz);
                }
            }
        });
    }
    return out;
}

PotentialSet make_potentials(const PotentialParams& params, const Dims& dims, const Spacing& spacing) {
    if (params.amplitude_v < 0.0 || params.amplitude_d < 0.0) {
        throw std::invalid_argument("make_potentials: amplitudes must be >= 0");
    }
    PerlinParams pp{0, params.octaves, params.base_frequency, params.persistence, 1.0};
    PotentialSet set;
    for (std::uint64_t a = 0; a < 3; ++a) {
        pp.seed = hash_values(params.seed, {1, a});
        set.psi[a] = perlin3(pp, dims, spacing);
    }
    pp.seed = hash_values(params.seed, {2});
    set.phi = perlin3(pp, dims, spacing);

    const VelocityField raw = curl_velocity(set.psi);
    double vmax = 0.0;
    for (std::size_t i = 0; i < dims.count(); ++i) {
        const double vx = raw.component[0][i], vy = raw.component[1][i], vz = raw.component[2][i];
        vmax = std::max(vmax, std::sqrt(vx * vx + vy * vy + vz * vz));
    }
    const double sv = vmax > 0.0 ? params.amplitude_v / vmax : 0.0;
    for (auto& c : set.psi) {
        for (double& x : c.values()) x *= sv;
    }
    const double pmax = max_abs(set.phi);
    const double sd = pmax > 0.0 ? std::sqrt(params.amplitude_d) / pmax : 0.0;
    for (double& x : set.phi.values()) x *= sd;
    return set;
}

VelocityField curl_velocity(const std::array<Volume3D, 3>& psi) {
    const Dims d = psi[0].dims();
    require_same_dims(d, psi[1].dims(), "psi components");
    require_same_dims(d, psi[2].dims(), "psi components");
    VelocityField v{{Volume3D(d, psi[0].spacing()), Volume3D(d, psi[0].spacing()), Volume3D(d, psi[0].spacing())}};
    parallel_for(0, d.nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                v.component[0].at(x, y, z) = diff(psi[2], 1, x, y, z) - diff(psi[1], 2, x, y, z);
                v.component[1].at(x, y, z) = diff(psi[0], 2, x, y, z) - diff(psi[2], 0, x, y, z);
                v.component[2].at(x, y, z) = diff(psi[1], 0, x, y, z) - diff(psi[0], 1, x, y, z);
            }
        }
    });
    return v;
}

Volume3D divergence(const VelocityField& v) {
    const Dims d = v.component[0].dims();
    Volume3D out(d, v.component[0].spacing());
    parallel_for(0, d.nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                out.at(x, y, z) =
                    diff(v.component[0], 0, x, y, z) + diff(v.component[1], 1, x, y, z) + diff(v.component[2], 2, x, y, z);
            }
        }
    });
    return out;
}

DiffusivityField diffusivity(const Volume3D& phi) {
    DiffusivityField out{Volume3D(phi.dims(), phi.spacing())};
    for (std::size_t i = 0; i < phi.size(); ++i) out.d[i] = phi[i] * phi[i];
    return out;
}

double cfl_limit(const VelocityField& v, const DiffusivityField& d, const Spacing& grid) {
    const std::array<double, 3> h{grid.sx, grid.sy, grid.sz};
    double limit = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double vmax = max_abs(v.component[a]);
        if (vmax > 0.0) limit = std::min(limit, h[a] / vmax);
    }
    const double dmax = max_abs(d.d);
    if (dmax > 0.0) {
        const double hmin = std::min({h[0], h[1], h[2]});
        limit = std::min(limit, hmin * hmin / (6.0 * dmax));
    }
    return limit;
}

double cfl_dt(const VelocityField& v, const DiffusivityField& d, const Spacing& grid, double t_max, double safety) {
    const double limit = cfl_limit(v, d, grid);
    if (!std::isfinite(limit)) return t_max;
    return safety * limit;
}

namespace {

struct Grid {
    std::size_t nx, ny, nz;
    std::size_t stride[3];
    std::size_t extent[3];
};

Grid make_grid(const Dims& d) { return Grid{d.nx, d.ny, d.nz, {1, d.nx, d.nx * d.ny}, {d.nx, d.ny, d.nz}}; }

void advect_sweep(const Grid& g, int axis, const double* in, double* out, const double* vel, double dt,
                  const BinaryMask3D& mask) {
    const std::size_t st = g.stride[axis];
    const std::size_t n = g.extent[axis];
    parallel_for(0, g.nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < g.ny; ++y) {
            for (std::size_t x = 0; x < g.nx; ++x) {
                const std::size_t i = x + g.nx * (y + g.ny * z);
                if (!mask[i]) {
                    out[i] = 0.0;
                    continue;
                }
                const std::size_t c = axis == 0 ? x : axis == 1 ? y : z;
                const double courant = vel[i] * dt;
                double upwind = in[i];
                if (courant > 0.0) {
                    if (c > 0 && mask[i - st]) upwind = in[i - st];
                } else if (courant < 0.0) {
                    if (c + 1 < n && mask[i + st]) upwind = in[i + st];
                }
                const double w = std::fabs(courant);
                out[i] = (1.0 - w) * in[i] + w * upwind;
            }
        }
    });
}

void diffuse(const Grid& g, const double* in, double* out, const double* dif, double dt, const BinaryMask3D& mask) {
    parallel_for(0, g.nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < g.ny; ++y) {
            for (std::size_t x = 0; x < g.nx; ++x) {
                const std::size_t i = x + g.nx * (y + g.ny * z);
                if (!mask[i]) {
                    out[i] = 0.0;
                    continue;
                }
                const std::size_t coord[3] = {x, y, z};
                double acc = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const std::size_t st = g.stride[a];
                    if (coord[a] > 0 && mask[i - st]) {
                        acc += dt * (0.5 * (dif[i] + dif[i - st])) * (in[i - st] - in[i]);
                    }
                    if (coord[a] + 1 < g.extent[a] && mask[i + st]) {
                        acc += dt * (0.5 * (dif[i] + dif[i + st])) * (in[i + st] - in[i]);
                    }
                }
                out[i] = in[i] + acc;
            }
        }
    });
}

}  // namespace

Volume3D step(const Volume3D& p, const VelocityField& v, const DiffusivityField& d, double dt,
              const BinaryMask3D& mask, StepDiagnostics* diag) {
    check_field_dims(p.dims(), v, d);
    require_same_dims(p.dims(), mask.dims(), "mask");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("step: dt must be positive and finite");
    const double limit = cfl_limit(v, d);
    if (dt > limit * (1.0 + 1e-12)) {
        throw std::invalid_argument("step: dt " + std::to_string(dt) + " exceeds CFL bound " +
                                    std::to_string(limit));
    }

    const Grid g = make_grid(p.dims());
    Volume3D a = p;
    Volume3D b(p.dims(), p.spacing());
    for (int axis = 0; axis < 3; ++axis) {
        advect_sweep(g, axis, a.values().data(), b.values().data(), v.component[axis].values().data(), dt, mask);
        std::swap(a, b);
    }
    diffuse(g, a.values().data(), b.values().data(), d.d.values().data(), dt, mask);

    double excursion = 0.0;
    for (double& x : b.values()) {
        excursion = std::max({excursion, -x, x - 1.0});
        x = std::clamp(x, 0.0, 1.0);
    }
    if (diag) diag->max_clamp_excursion = std::max(diag->max_clamp_excursion, excursion);
    if (excursion > kClampTolerance) {
        throw std::runtime_error("step: pre-clamp excursion " + std::to_string(excursion) +
                                 " exceeds tolerance; scheme not monotone");
    }
    return b;
}

IntegrationReport integrate(const Volume3D& p0, const VelocityField& v, const DiffusivityField& d,
                            const IntegrationParams& ip, const BinaryMask3D& mask, const StepObserver& observer) {
    check_field_dims(p0.dims(), v, d);
    require_same_dims(p0.dims(), mask.dims(), "mask");
    if (!(ip.t_max >= 0.0) || !std::isfinite(ip.t_max)) throw std::invalid_argument("integrate: t_max must be >= 0");
    for (std::size_t i = 0; i < p0.size(); ++i) {
        if (p0[i] < 0.0 || p0[i] > 1.0) throw std::invalid_argument("integrate: P0 must lie in [0, 1]");
        if (!mask[i] && p0[i] != 0.0) throw std::invalid_argument("integrate: P0 must be zero outside the mask");
    }
    IntegrationReport report{p0, 0, 0.0, 0.0};
    if (ip.t_max == 0.0) return report;

    const double dt0 = ip.dt ? *ip.dt : cfl_dt(v, d, Spacing{}, ip.t_max, ip.safety);
    if (!(dt0 > 0.0)) throw std::invalid_argument("integrate: dt must be > 0");
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(ip.t_max / dt0 - 1e-12)));
    const double dt = ip.t_max / static_cast<double>(steps);
    report.dt = dt;

    StepDiagnostics diag;
    for (std::size_t s = 1; s <= steps; ++s) {
        report.p = step(report.p, v, d, dt, mask, &diag);
        if (observer) observer(s, dt * static_cast<double>(s), report.p);
    }
    report.steps = steps;
    report.max_clamp_excursion = diag.max_clamp_excursion;
    return report;
}

Volume3D randomize(const Volume3D& p0, const PotentialSet& potentials, const IntegrationParams& ip,
                   const BinaryMask3D& mask) {
    return integrate(p0, curl_velocity(potentials.psi), diffusivity(potentials.phi), ip, mask).p;
}

}  // namespace anomforge
