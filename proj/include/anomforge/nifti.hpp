#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "anomforge/volume.hpp"

namespace anomforge {

class NiftiError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class ByteOrder { little, big };

// NIFTI_TYPE_* codes accepted on read.
namespace nifti_type {
inline constexpr std::int16_t uint8 = 2;
inline constexpr std::int16_t int16 = 4;
inline constexpr std::int16_t int32 = 8;
inline constexpr std::int16_t float32 = 16;
inline constexpr std::int16_t float64 = 64;
inline constexpr std::int16_t uint16 = 512;
}  // namespace nifti_type

struct VolumeHeader {
    Dims dims;
    Spacing spacing;
    std::int16_t datatype = nifti_type::float32;
    ByteOrder byte_order = ByteOrder::little;
    float vox_offset = 352.0f;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
};

VolumeHeader read_nifti_header(const std::filesystem::path& path);

// Single-file NIfTI-1 (.nii or gzip-compressed .nii.gz, detected from content).
// int/uint types are promoted to reals; scl_slope/scl_inter are applied when
// the slope is nonzero.
Volume3D read_nifti(const std::filesystem::path& path);

// Writes little-endian float32 NIfTI-1. The file is gzip-compressed when the
// path ends in ".gz". Values are narrowed to float32, so the round trip is
// bit-exact for any volume whose values are float32-representable (which
// includes every volume obtained from read_nifti).
void write_nifti(const Volume3D& vol, const std::filesystem::path& path);

// Encodes the file bytes without touching the filesystem (uncompressed).
std::string encode_nifti(const Volume3D& vol);
Volume3D decode_nifti(const std::string& bytes);

}  // namespace anomforge
