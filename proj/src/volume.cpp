#include "anomforge/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace anomforge {

namespace {

void check_dims(const Dims& dims) {
    if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) {
        throw std::invalid_argument("volume dims must be positive");
    }
}

void check_spacing(const Spacing& s) {
    if (!(s.sx > 0.0) || !(s.sy > 0.0) || !(s.sz > 0.0) || !std::isfinite(s.sx) || !std::isfinite(s.sy) ||
        !std::isfinite(s.sz)) {
        throw std::invalid_argument("volume spacing must be positive and finite");
    }
}

}  // namespace

Volume3D::Volume3D(Dims dims, Spacing spacing, double fill)
    : dims_(dims), spacing_(spacing), values_(dims.count(), fill) {
    check_dims(dims);
    check_spacing(spacing);
}

Volume3D::Volume3D(Dims dims, Spacing spacing, std::vector<double> values)
    : dims_(dims), spacing_(spacing), values_(std::move(values)) {
    check_dims(dims);
    check_spacing(spacing);
    if (values_.size() != dims.count()) {
        throw std::invalid_argument("volume value count does not match dims");
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw std::invalid_argument("volume values must be finite");
    }
}

BinaryMask3D::BinaryMask3D(Dims dims, bool fill) : dims_(dims), bits_(dims.count(), fill ? 1 : 0) {
    check_dims(dims);
}

std::size_t BinaryMask3D::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
    if (!(a == b)) {
        throw std::invalid_argument(std::string("dimension mismatch: ") + what);
    }
}

Volume3D to_volume(const BinaryMask3D& mask, Spacing spacing) {
    Volume3D out(mask.dims(), spacing);
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1.0 : 0.0;
    return out;
}

BinaryMask3D threshold_mask(const Volume3D& vol, double threshold) {
    BinaryMask3D out(vol.dims());
    for (std::size_t i = 0; i < vol.size(); ++i) out.set(i, vol[i] >= threshold);
    return out;
}

BinaryMask3D mask_and(const BinaryMask3D& a, const BinaryMask3D& b) {
    require_same_dims(a.dims(), b.dims(), "mask_and");
    BinaryMask3D out(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] && b[i]);
    return out;
}

namespace {

template <class Get, class Put>
void translate_impl(const Dims& d, const Offset3& off, Get get, Put put) {
    const auto nx = static_cast<std::ptrdiff_t>(d.nx);
    const auto ny = static_cast<std::ptrdiff_t>(d.ny);
    const auto nz = static_cast<std::ptrdiff_t>(d.nz);
    for (std::ptrdiff_t z = 0; z < nz; ++z) {
        const std::ptrdiff_t sz = z - off[2];
        if (sz < 0 || sz >= nz) continue;
        for (std::ptrdiff_t y = 0; y < ny; ++y) {
            const std::ptrdiff_t sy = y - off[1];
            if (sy < 0 || sy >= ny) continue;
            const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, off[0]);
            const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(nx, nx + off[0]);
            for (std::ptrdiff_t x = x0; x < x1; ++x) {
                const auto dst = static_cast<std::size_t>(x + nx * (y + ny * z));
                const auto src = static_cast<std::size_t>((x - off[0]) + nx * (sy + ny * sz));
                put(dst, get(src));
            }
        }
    }
}

}  // namespace

Volume3D translate(const Volume3D& vol, const Offset3& offset) {
    Volume3D out(vol.dims(), vol.spacing());
    translate_impl(
        vol.dims(), offset, [&](std::size_t i) { return vol[i]; }, [&](std::size_t i, double v) { out[i] = v; });
    return out;
}

BinaryMask3D translate(const BinaryMask3D& mask, const Offset3& offset) {
    BinaryMask3D out(mask.dims());
    translate_impl(
        mask.dims(), offset, [&](std::size_t i) { return mask[i]; },
        [&](std::size_t i, bool v) { out.set(i, v); });
    return out;
}

}  // namespace anomforge
