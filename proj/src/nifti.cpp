#include "anomforge/nifti.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace anomforge {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;

bool host_is_little() { return std::endian::native == std::endian::little; }

template <class T>
T load(const std::string& buf, std::size_t off, bool swap) {
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    if (swap && sizeof(T) > 1) {
        auto* p = reinterpret_cast<unsigned char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    }
    return v;
}

template <class T>
void store_le(std::string& buf, std::size_t off, T v) {
    auto* p = reinterpret_cast<unsigned char*>(&v);
    if (!host_is_little()) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    }
    std::memcpy(buf.data() + off, p, sizeof(T));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NiftiError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

bool is_gzip(const std::string& buf) {
    return buf.size() >= 2 && static_cast<unsigned char>(buf[0]) == 0x1f &&
           static_cast<unsigned char>(buf[1]) == 0x8b;
}

std::string gunzip(const std::string& in) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 32) != Z_OK) throw NiftiError("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::string out;
    std::array<char, 1 << 16> chunk{};
    int ret = Z_OK;
    do {
        zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
        zs.avail_out = static_cast<uInt>(chunk.size());
        ret = inflate(&zs, Z_NO_FLUSH);
        if (ret != Z_OK && ret != Z_STREAM_END) {
            inflateEnd(&zs);
            throw NiftiError("corrupt gzip stream");
        }
        out.append(chunk.data(), chunk.size() - zs.avail_out);
    } while (ret != Z_STREAM_END && (zs.avail_in > 0 || zs.avail_out == 0));
    inflateEnd(&zs);
    if (ret != Z_STREAM_END) throw NiftiError("truncated gzip stream");
    return out;
}

std::string gzip(const std::string& in) {
    z_stream zs{};
    // windowBits 15 + 16 selects a gzip wrapper with a zero mtime, so output
    // bytes depend only on the input.
    if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw NiftiError("zlib init failed");
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::string out;
    std::array<char, 1 << 16> chunk{};
    int ret = Z_OK;
    do {
        zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
        zs.avail_out = static_cast<uInt>(chunk.size());
        ret = deflate(&zs, Z_FINISH);
        out.append(chunk.data(), chunk.size() - zs.avail_out);
    } while (ret == Z_OK);
    deflateEnd(&zs);
    if (ret != Z_STREAM_END) throw NiftiError("gzip compression failed");
    return out;
}

std::size_t bytes_per_voxel(std::int16_t datatype) {
    switch (datatype) {
        case nifti_type::uint8: return 1;
        case nifti_type::int16: return 2;
        case nifti_type::uint16: return 2;
        case nifti_type::int32: return 4;
        case nifti_type::float32: return 4;
        case nifti_type::float64: return 8;
        default: throw NiftiError("unsupported data type code " + std::to_string(datatype));
    }
}

double positive_or_one(float v) {
    const double a = std::fabs(static_cast<double>(v));
    return (std::isfinite(a) && a > 0.0) ? a : 1.0;
}

VolumeHeader parse_header(const std::string& buf) {
    if (buf.size() < kHeaderSize) throw NiftiError("truncated header");
    bool swap = false;
    const auto sizeof_hdr = load<std::int32_t>(buf, 0, false);
    if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
        if (load<std::int32_t>(buf, 0, true) != static_cast<std::int32_t>(kHeaderSize)) {
            throw NiftiError("bad magic: sizeof_hdr is not 348");
        }
        swap = true;
    }
    if (std::memcmp(buf.data() + 344, "n+1\0", 4) != 0) {
        throw NiftiError("bad magic: expected single-file \"n+1\"");
    }

    VolumeHeader h;
    h.byte_order = (swap == host_is_little()) ? ByteOrder::big : ByteOrder::little;
    std::array<std::int16_t, 8> dim{};
    for (std::size_t i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(buf, 40 + 2 * i, swap);
    if (dim[0] != 3) {
        throw NiftiError("unsupported dimensionality: dim[0] = " + std::to_string(dim[0]));
    }
    if (dim[1] < 1 || dim[2] < 1 || dim[3] < 1) throw NiftiError("non-positive dimension in header");
    h.dims = Dims{static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
                  static_cast<std::size_t>(dim[3])};
    h.datatype = load<std::int16_t>(buf, 70, swap);
    bytes_per_voxel(h.datatype);
    h.spacing = Spacing{positive_or_one(load<float>(buf, 80, swap)), positive_or_one(load<float>(buf, 84, swap)),
                        positive_or_one(load<float>(buf, 88, swap))};
    h.vox_offset = load<float>(buf, 108, swap);
    h.scl_slope = load<float>(buf, 112, swap);
    h.scl_inter = load<float>(buf, 116, swap);
    if (!(h.vox_offset >= static_cast<float>(kHeaderSize))) throw NiftiError("invalid vox_offset");
    return h;
}

std::string load_bytes(const std::filesystem::path& path) {
    std::string buf = read_file(path);
    if (is_gzip(buf)) buf = gunzip(buf);
    return buf;
}

}  // namespace

VolumeHeader read_nifti_header(const std::filesystem::path& path) { return parse_header(load_bytes(path)); }

Volume3D decode_nifti(const std::string& buf) {
    const VolumeHeader h = parse_header(buf);
    const bool swap = (h.byte_order == ByteOrder::little) != host_is_little();
    const std::size_t n = h.dims.count();
    const std::size_t bpv = bytes_per_voxel(h.datatype);
    const auto offset = static_cast<std::size_t>(h.vox_offset);
    if (buf.size() < offset || buf.size() - offset < n * bpv) throw NiftiError("truncated payload");

    const bool scale = h.scl_slope != 0.0f && std::isfinite(h.scl_slope) && std::isfinite(h.scl_inter) &&
                       !(h.scl_slope == 1.0f && h.scl_inter == 0.0f);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t p = offset + i * bpv;
        double v = 0.0;
        switch (h.datatype) {
            case nifti_type::uint8: v = static_cast<unsigned char>(buf[p]); break;
            case nifti_type::int16: v = load<std::int16_t>(buf, p, swap); break;
            case nifti_type::uint16: v = load<std::uint16_t>(buf, p, swap); break;
            case nifti_type::int32: v = load<std::int32_t>(buf, p, swap); break;
            case nifti_type::float32: v = load<float>(buf, p, swap); break;
            case nifti_type::float64: v = load<double>(buf, p, swap); break;
        }
        if (scale) v = v * h.scl_slope + h.scl_inter;
        if (!std::isfinite(v)) throw NiftiError("non-finite voxel value at index " + std::to_string(i));
        values[i] = v;
    }
    return Volume3D(h.dims, h.spacing, std::move(values));
}

Volume3D read_nifti(const std::filesystem::path& path) { return decode_nifti(load_bytes(path)); }

std::string encode_nifti(const Volume3D& vol) {
    const Dims& d = vol.dims();
    if (d.nx > 32767 || d.ny > 32767 || d.nz > 32767) throw NiftiError("dimension exceeds NIfTI-1 limit");
    const Spacing& s = vol.spacing();
    std::string buf(kDataOffset + 4 * vol.size(), '\0');

    store_le<std::int32_t>(buf, 0, static_cast<std::int32_t>(kHeaderSize));
    buf[38] = 'r';
    const std::array<std::int16_t, 8> dim{3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny),
                                          static_cast<std::int16_t>(d.nz), 1, 1, 1, 1};
    for (std::size_t i = 0; i < 8; ++i) store_le<std::int16_t>(buf, 40 + 2 * i, dim[i]);
    store_le<std::int16_t>(buf, 70, nifti_type::float32);
    store_le<std::int16_t>(buf, 72, 32);
    const std::array<float, 8> pixdim{1.0f, static_cast<float>(s.sx), static_cast<float>(s.sy),
                                      static_cast<float>(s.sz), 1.0f, 1.0f, 1.0f, 1.0f};
    for (std::size_t i = 0; i < 8; ++i) store_le<float>(buf, 76 + 4 * i, pixdim[i]);
    store_le<float>(buf, 108, static_cast<float>(kDataOffset));
    store_le<float>(buf, 112, 1.0f);
    store_le<float>(buf, 116, 0.0f);
    buf[123] = 2;  // NIFTI_UNITS_MM
    std::memcpy(buf.data() + 148, "anomforge", 9);
    // Scanner-aligned qform: identity rotation, pixdim scaling.
    store_le<std::int16_t>(buf, 252, 1);
    store_le<std::int16_t>(buf, 254, 0);
    std::memcpy(buf.data() + 344, "n+1\0", 4);

    for (std::size_t i = 0; i < vol.size(); ++i) {
        store_le<float>(buf, kDataOffset + 4 * i, static_cast<float>(vol[i]));
    }
    return buf;
}

void write_nifti(const Volume3D& vol, const std::filesystem::path& path) {
    std::string bytes = encode_nifti(vol);
    if (path.extension() == ".gz") bytes = gzip(bytes);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw NiftiError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw NiftiError("write failed: " + path.string());
}

}  // namespace anomforge
