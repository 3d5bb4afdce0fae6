#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace anomforge {

struct Dims {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nz = 0;

    std::size_t count() const { return nx * ny * nz; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

struct Spacing {
    double sx = 1.0;
    double sy = 1.0;
    double sz = 1.0;

    friend bool operator==(const Spacing&, const Spacing&) = default;
};

// Integer voxel offset, used for jitters and alignment shifts.
using Offset3 = std::array<std::ptrdiff_t, 3>;

// Dense scalar field on a regular grid, x-fastest linear order.
class Volume3D {
  public:
    Volume3D() = default;
    Volume3D(Dims dims, Spacing spacing = {}, double fill = 0.0);
    Volume3D(Dims dims, Spacing spacing, std::vector<double> values);

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims_.nx * (y + dims_.ny * z);
    }
    double& at(std::size_t x, std::size_t y, std::size_t z) { return values_[index(x, y, z)]; }
    double at(std::size_t x, std::size_t y, std::size_t z) const { return values_[index(x, y, z)]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool in_bounds(std::ptrdiff_t x, std::ptrdiff_t y, std::ptrdiff_t z) const {
        return x >= 0 && y >= 0 && z >= 0 && static_cast<std::size_t>(x) < dims_.nx &&
               static_cast<std::size_t>(y) < dims_.ny && static_cast<std::size_t>(z) < dims_.nz;
    }

    friend bool operator==(const Volume3D&, const Volume3D&) = default;

  private:
    Dims dims_{};
    Spacing spacing_{};
    std::vector<double> values_;
};

// One bit per voxel; stored as bytes for cheap random access.
class BinaryMask3D {
  public:
    BinaryMask3D() = default;
    explicit BinaryMask3D(Dims dims, bool fill = false);

    const Dims& dims() const { return dims_; }
    std::size_t size() const { return bits_.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + dims_.nx * (y + dims_.ny * z);
    }
    bool at(std::size_t x, std::size_t y, std::size_t z) const { return bits_[index(x, y, z)] != 0; }
    void set(std::size_t x, std::size_t y, std::size_t z, bool v) { bits_[index(x, y, z)] = v ? 1 : 0; }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

    std::size_t count() const;
    bool empty() const { return count() == 0; }

    friend bool operator==(const BinaryMask3D&, const BinaryMask3D&) = default;

  private:
    Dims dims_{};
    std::vector<std::uint8_t> bits_;
};

void require_same_dims(const Dims& a, const Dims& b, const char* what);

// Mask as a 0/1 real volume.
Volume3D to_volume(const BinaryMask3D& mask, Spacing spacing = {});

// Voxels with value >= threshold.
BinaryMask3D threshold_mask(const Volume3D& vol, double threshold);

BinaryMask3D mask_and(const BinaryMask3D& a, const BinaryMask3D& b);

// Voxelwise translation: out(p + offset) = in(p); vacated voxels are zero.
Volume3D translate(const Volume3D& vol, const Offset3& offset);
BinaryMask3D translate(const BinaryMask3D& mask, const Offset3& offset);

}  // namespace anomforge
