#include "anomforge/filters.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "anomforge/parallel.hpp"

namespace anomforge {

namespace {

Volume3D affine_map(const Volume3D& vol, double lo, double hi, const BinaryMask3D* mask) {
    Volume3D out(vol.dims(), vol.spacing());
    const double range = hi - lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (mask && !(*mask)[i]) continue;
        out[i] = std::clamp((vol[i] - lo) / range, 0.0, 1.0);
    }
    return out;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return 0;
    if (static_cast<std::size_t>(i) >= n) return n - 1;
    return static_cast<std::size_t>(i);
}

}  // namespace

Volume3D minmax_normalize(const Volume3D& vol) {
    if (vol.size() == 0) return vol;
    const auto [lo, hi] = std::minmax_element(vol.values().begin(), vol.values().end());
    return affine_map(vol, *lo, *hi, nullptr);
}

Volume3D minmax_normalize_masked(const Volume3D& vol, const BinaryMask3D& mask) {
    require_same_dims(vol.dims(), mask.dims(), "minmax_normalize_masked");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!mask[i]) continue;
        lo = std::min(lo, vol[i]);
        hi = std::max(hi, vol[i]);
    }
    return affine_map(vol, lo, hi, &mask);
}

BinaryMask3D brain_mask(const Volume3D& vol, double eps) {
    if (eps < 0.0) throw std::invalid_argument("brain_mask: eps must be >= 0");
    BinaryMask3D out(vol.dims());
    for (std::size_t i = 0; i < vol.size(); ++i) out.set(i, vol[i] > eps);
    return out;
}

namespace {

BinaryMask3D erode_once(const BinaryMask3D& m) {
    const Dims& d = m.dims();
    BinaryMask3D out(d);
    parallel_for(0, d.nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                if (!m.at(x, y, z)) continue;
                const bool keep = x > 0 && x + 1 < d.nx && y > 0 && y + 1 < d.ny && z > 0 && z + 1 < d.nz &&
                                  m.at(x - 1, y, z) && m.at(x + 1, y, z) && m.at(x, y - 1, z) &&
                                  m.at(x, y + 1, z) && m.at(x, y, z - 1) && m.at(x, y, z + 1);
                out.set(x, y, z, keep);
            }
        }
    });
    return out;
}

BinaryMask3D dilate_once(const BinaryMask3D& m) {
    const Dims& d = m.dims();
    BinaryMask3D out(d);
    parallel_for(0, d.nz, [&](std::size_t z) {
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                const bool on = m.at(x, y, z) || (x > 0 && m.at(x - 1, y, z)) ||
                                (x + 1 < d.nx && m.at(x + 1, y, z)) || (y > 0 && m.at(x, y - 1, z)) ||
                                (y + 1 < d.ny && m.at(x, y + 1, z)) || (z > 0 && m.at(x, y, z - 1)) ||
                                (z + 1 < d.nz && m.at(x, y, z + 1));
                out.set(x, y, z, on);
            }
        }
    });
    return out;
}

}  // namespace

BinaryMask3D erode(const BinaryMask3D& mask, unsigned iters) {
    BinaryMask3D out = mask;
    for (unsigned i = 0; i < iters; ++i) {
        if (out.empty()) break;
        out = erode_once(out);
    }
    return out;
}

BinaryMask3D dilate(const BinaryMask3D& mask, unsigned iters) {
    BinaryMask3D out = mask;
    for (unsigned i = 0; i < iters; ++i) out = dilate_once(out);
    return out;
}

Volume3D median_filter(const Volume3D& vol, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("median_filter: kernel size must be odd and >= 1");
    if (k == 1) return vol;
    const Dims& d = vol.dims();
    const int r = k / 2;
    Volume3D out(d, vol.spacing());
    parallel_for(0, d.nz, [&](std::size_t z) {
        std::vector<double> window(static_cast<std::size_t>(k) * k * k);
        const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
        for (std::size_t y = 0; y < d.ny; ++y) {
            for (std::size_t x = 0; x < d.nx; ++x) {
                std::size_t n = 0;
                for (int dz = -r; dz <= r; ++dz) {
                    const std::size_t zz = clamp_index(static_cast<std::ptrdiff_t>(z) + dz, d.nz);
                    for (int dy = -r; dy <= r; ++dy) {
                        const std::size_t yy = clamp_index(static_cast<std::ptrdiff_t>(y) + dy, d.ny);
                        for (int dx = -r; dx <= r; ++dx) {
                            const std::size_t xx = clamp_index(static_cast<std::ptrdiff_t>(x) + dx, d.nx);
                            window[n++] = vol.at(xx, yy, zz);
                        }
                    }
                }
                std::nth_element(window.begin(), mid, window.end());
                out.at(x, y, z) = *mid;
            }
        }
    });
    return out;
}

Volume3D crop_or_pad(const Volume3D& vol, const Dims& target) {
    if (target.nx == 0 || target.ny == 0 || target.nz == 0) {
        throw std::invalid_argument("crop_or_pad: target dims must be positive");
    }
    const Dims& d = vol.dims();
    auto low_offset = [](std::size_t n, std::size_t m) -> std::ptrdiff_t {
        const auto diff = static_cast<std::ptrdiff_t>(n) - static_cast<std::ptrdiff_t>(m);
        return diff >= 0 ? (diff + 1) / 2 : -((-diff + 1) / 2);
    };
    const std::ptrdiff_t ox = low_offset(d.nx, target.nx);
    const std::ptrdiff_t oy = low_offset(d.ny, target.ny);
    const std::ptrdiff_t oz = low_offset(d.nz, target.nz);
    Volume3D out(target, vol.spacing());
    for (std::size_t z = 0; z < target.nz; ++z) {
        const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(z) + oz;
        for (std::size_t y = 0; y < target.ny; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
            for (std::size_t x = 0; x < target.nx; ++x) {
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + ox;
                if (vol.in_bounds(sx, sy, sz)) {
                    out.at(x, y, z) = vol.at(static_cast<std::size_t>(sx), static_cast<std::size_t>(sy),
                                             static_cast<std::size_t>(sz));
                }
            }
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    if (!(sigma > 0.0) || radius < 0) throw std::invalid_argument("gaussian_kernel: bad parameters");
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        taps[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : taps) w /= sum;
    return taps;
}

Volume3D separable_filter(const Volume3D& vol, const std::vector<double>& taps) {
    if (taps.size() % 2 == 0) throw std::invalid_argument("separable_filter: odd tap count required");
    const Dims& d = vol.dims();
    const auto r = static_cast<std::ptrdiff_t>(taps.size() / 2);
    Volume3D a = vol;
    Volume3D b(d, vol.spacing());
    const std::array<std::size_t, 3> extent{d.nx, d.ny, d.nz};
    for (int axis = 0; axis < 3; ++axis) {
        parallel_for(0, d.nz, [&](std::size_t z) {
            for (std::size_t y = 0; y < d.ny; ++y) {
                for (std::size_t x = 0; x < d.nx; ++x) {
                    std::array<std::size_t, 3> p{x, y, z};
                    const auto c = static_cast<std::ptrdiff_t>(p[axis]);
                    double acc = 0.0;
                    for (std::ptrdiff_t k = -r; k <= r; ++k) {
                        p[axis] = clamp_index(c + k, extent[axis]);
                        acc += taps[static_cast<std::size_t>(k + r)] * a.at(p[0], p[1], p[2]);
                    }
                    b.at(x, y, z) = acc;
                }
            }
        });
        std::swap(a, b);
    }
    return a;
}

}  // namespace anomforge
