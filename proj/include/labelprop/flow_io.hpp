#pragma once

// Bit-exact raster interchange: Middlebury .flo flow fields, binary PGM/PPM,
// and 8-bit PNG (grayscale, indexed and RGB, non-interlaced). PNG chunks are
// handled directly on top of zlib so reads and writes stay byte-deterministic.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "labelprop/errors.hpp"
#include "labelprop/grid.hpp"

namespace labelprop {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline std::uint32_t get_u32_le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32_le(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32_le(out, bits);
}

inline float get_f32_le(const std::uint8_t* p) {
    const std::uint32_t bits = get_u32_le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Middlebury .flo: float magic 202021.25, i32 width, i32 height, then
// width*height interleaved (u, v) float32 pairs, all little-endian.
// ---------------------------------------------------------------------------

inline constexpr float kFloMagic = 202021.25f;

inline void write_flo(const FlowField& field, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(12 + field.pixels() * 8);
    detail::put_f32_le(bytes, kFloMagic);
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(field.width));
    detail::put_u32_le(bytes, static_cast<std::uint32_t>(field.height));
    for (const FlowVec& f : field.data) {
        detail::put_f32_le(bytes, f.u);
        detail::put_f32_le(bytes, f.v);
    }
    detail::write_file_bytes(path, bytes);
}

inline FlowField read_flo(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = detail::read_file_bytes(path);
    if (bytes.size() < 12) throw FormatError("flo: truncated header: " + path.string());
    if (detail::get_f32_le(bytes.data()) != kFloMagic)
        throw FormatError("flo: bad magic: " + path.string());
    const std::int32_t w = static_cast<std::int32_t>(detail::get_u32_le(bytes.data() + 4));
    const std::int32_t h = static_cast<std::int32_t>(detail::get_u32_le(bytes.data() + 8));
    if (w <= 0 || h <= 0) throw FormatError("flo: nonpositive dimensions: " + path.string());
    const std::size_t expected = 12 + static_cast<std::size_t>(w) * h * 8;
    if (bytes.size() != expected) throw FormatError("flo: truncated payload: " + path.string());
    FlowField field(w, h);
    const std::uint8_t* p = bytes.data() + 12;
    for (FlowVec& f : field.data) {
        f.u = detail::get_f32_le(p);
        f.v = detail::get_f32_le(p + 4);
        p += 8;
    }
    return field;
}

// ---------------------------------------------------------------------------
// PNG (8-bit, non-interlaced). Writing uses filter 0 on every scanline;
// reading understands all five standard filters.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::array<std::uint8_t, 8> kPngSignature = {137, 80, 78, 71, 13, 10, 26, 10};

inline void png_append_chunk(std::vector<std::uint8_t>& out, const char type[5],
                             const std::vector<std::uint8_t>& payload) {
    const std::uint32_t len = static_cast<std::uint32_t>(payload.size());
    out.push_back(static_cast<std::uint8_t>(len >> 24));
    out.push_back(static_cast<std::uint8_t>(len >> 16));
    out.push_back(static_cast<std::uint8_t>(len >> 8));
    out.push_back(static_cast<std::uint8_t>(len));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + crc_start, static_cast<uInt>(4 + payload.size())));
    out.push_back(static_cast<std::uint8_t>(crc >> 24));
    out.push_back(static_cast<std::uint8_t>(crc >> 16));
    out.push_back(static_cast<std::uint8_t>(crc >> 8));
    out.push_back(static_cast<std::uint8_t>(crc));
}

inline std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> packed(bound);
    if (compress2(packed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_DEFAULT_COMPRESSION) != Z_OK)
        throw FormatError("png: deflate failed");
    packed.resize(bound);
    return packed;
}

inline std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& packed,
                                              std::size_t expected_size) {
    std::vector<std::uint8_t> raw(expected_size);
    uLongf got = static_cast<uLongf>(expected_size);
    if (uncompress(raw.data(), &got, packed.data(), static_cast<uLong>(packed.size())) != Z_OK ||
        got != expected_size)
        throw FormatError("png: inflate failed or wrong scanline size");
    return raw;
}

struct PngData {
    int width = 0;
    int height = 0;
    int color_type = 0;               // 0 gray, 2 rgb, 3 indexed
    std::vector<std::uint8_t> pixels; // unfiltered, 1 or 3 bytes per pixel
};

// color_type 0 or 3 writes `pixels` as one byte per pixel; 2 as three bytes.
inline void png_write(const std::filesystem::path& path, int width, int height, int color_type,
                      const std::vector<std::uint8_t>& pixels,
                      const std::vector<std::uint8_t>& palette_rgb = {}) {
    const int bpp = (color_type == 2) ? 3 : 1;
    std::vector<std::uint8_t> out(kPngSignature.begin(), kPngSignature.end());

    std::vector<std::uint8_t> ihdr;
    ihdr.push_back(static_cast<std::uint8_t>(width >> 24));
    ihdr.push_back(static_cast<std::uint8_t>(width >> 16));
    ihdr.push_back(static_cast<std::uint8_t>(width >> 8));
    ihdr.push_back(static_cast<std::uint8_t>(width));
    ihdr.push_back(static_cast<std::uint8_t>(height >> 24));
    ihdr.push_back(static_cast<std::uint8_t>(height >> 16));
    ihdr.push_back(static_cast<std::uint8_t>(height >> 8));
    ihdr.push_back(static_cast<std::uint8_t>(height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(static_cast<std::uint8_t>(color_type));
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter method
    ihdr.push_back(0); // no interlace
    png_append_chunk(out, "IHDR", ihdr);

    if (color_type == 3) png_append_chunk(out, "PLTE", palette_rgb);

    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(height) * (1 + static_cast<std::size_t>(width) * bpp));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0); // filter type: none
        const std::uint8_t* row = pixels.data() + static_cast<std::size_t>(y) * width * bpp;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * bpp);
    }
    png_append_chunk(out, "IDAT", zlib_deflate(raw));
    png_append_chunk(out, "IEND", {});
    write_file_bytes(path, out);
}

inline PngData png_read(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    if (bytes.size() < 8 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()))
        throw FormatError("png: bad signature: " + path.string());

    PngData png;
    int bit_depth = -1, interlace = -1;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool seen_iend = false;
    while (pos + 8 <= bytes.size() && !seen_iend) {
        const std::uint32_t len = (static_cast<std::uint32_t>(bytes[pos]) << 24) |
                                  (static_cast<std::uint32_t>(bytes[pos + 1]) << 16) |
                                  (static_cast<std::uint32_t>(bytes[pos + 2]) << 8) |
                                  static_cast<std::uint32_t>(bytes[pos + 3]);
        if (pos + 12 + len > bytes.size()) throw FormatError("png: truncated chunk: " + path.string());
        const std::string type(bytes.begin() + pos + 4, bytes.begin() + pos + 8);
        const std::uint8_t* payload = bytes.data() + pos + 8;
        if (type == "IHDR") {
            if (len != 13) throw FormatError("png: bad IHDR: " + path.string());
            png.width = static_cast<int>((payload[0] << 24) | (payload[1] << 16) |
                                         (payload[2] << 8) | payload[3]);
            png.height = static_cast<int>((payload[4] << 24) | (payload[5] << 16) |
                                          (payload[6] << 8) | payload[7]);
            bit_depth = payload[8];
            png.color_type = payload[9];
            interlace = payload[12];
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (!seen_iend || png.width <= 0 || png.height <= 0)
        throw FormatError("png: missing chunks or bad dimensions: " + path.string());
    if (bit_depth != 8 || interlace != 0)
        throw FormatError("png: only 8-bit non-interlaced supported: " + path.string());
    if (png.color_type != 0 && png.color_type != 2 && png.color_type != 3)
        throw FormatError("png: unsupported color type: " + path.string());

    const int bpp = (png.color_type == 2) ? 3 : 1;
    const std::size_t stride = static_cast<std::size_t>(png.width) * bpp;
    const std::vector<std::uint8_t> raw =
        zlib_inflate(idat, static_cast<std::size_t>(png.height) * (stride + 1));

    png.pixels.assign(static_cast<std::size_t>(png.height) * stride, 0);
    std::vector<std::uint8_t> prev(stride, 0);
    for (int y = 0; y < png.height; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        std::uint8_t* dst = png.pixels.data() + static_cast<std::size_t>(y) * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = (i >= static_cast<std::size_t>(bpp)) ? dst[i - bpp] : 0; // left
            const int b = prev[i];                                                 // up
            const int c = (i >= static_cast<std::size_t>(bpp)) ? prev[i - bpp] : 0; // up-left
            int x = src[i];
            switch (filter) {
            case 0: break;
            case 1: x += a; break;
            case 2: x += b; break;
            case 3: x += (a + b) / 2; break;
            case 4: {
                const int p = a + b - c;
                const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                break;
            }
            default: throw FormatError("png: unknown filter: " + path.string());
            }
            dst[i] = static_cast<std::uint8_t>(x & 0xFF);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return png;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Label rasters: single-channel 8-bit, ignore stored as 255. Extension picks
// the container: .pgm (binary P5) or .png (8-bit indexed). A deterministic
// visualization palette is written as palette.json next to the raster.
// ---------------------------------------------------------------------------

// Fixed visualization color per class id, plus gray for the ignore slot.
inline std::array<std::uint8_t, 3> class_color(int id) {
    if (id == kIgnoreId) return {96, 96, 96};
    // Golden-angle hue walk with full saturation steps keeps ids distinguishable.
    const double h = std::fmod(id * 137.50776405003785, 360.0) / 60.0;
    const double v = 0.92, s = 0.68;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(h) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
    }
    return {static_cast<std::uint8_t>(r * 255 + 0.5), static_cast<std::uint8_t>(g * 255 + 0.5),
            static_cast<std::uint8_t>(b * 255 + 0.5)};
}

namespace detail {

inline void write_palette_sidecar(const std::filesystem::path& raster_path, int num_classes) {
    std::string json = "{\n";
    for (int c = 0; c < num_classes; ++c) {
        const auto rgb = class_color(c);
        json += "  \"" + std::to_string(c) + "\": [" + std::to_string(rgb[0]) + ", " +
                std::to_string(rgb[1]) + ", " + std::to_string(rgb[2]) + "],\n";
    }
    const auto ig = class_color(kIgnoreId);
    json += "  \"255\": [" + std::to_string(ig[0]) + ", " + std::to_string(ig[1]) + ", " +
            std::to_string(ig[2]) + "]\n}\n";
    const std::filesystem::path sidecar =
        raster_path.parent_path() / "palette.json";
    write_file_bytes(sidecar, std::vector<std::uint8_t>(json.begin(), json.end()));
}

} // namespace detail

inline void write_label_image(const LabelMap& labels, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(labels.pixels());
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
        const ClassId id = labels.data[i];
        bytes[i] = (id == labels.ignore_id) ? kIgnoreId : id;
    }
    const std::string ext = path.extension().string();
    if (ext == ".pgm") {
        std::vector<std::uint8_t> out;
        const std::string header = "P5\n" + std::to_string(labels.width) + " " +
                                   std::to_string(labels.height) + "\n255\n";
        out.insert(out.end(), header.begin(), header.end());
        out.insert(out.end(), bytes.begin(), bytes.end());
        detail::write_file_bytes(path, out);
    } else if (ext == ".png") {
        std::vector<std::uint8_t> palette(256 * 3, 0);
        for (int c = 0; c < 256; ++c) {
            const bool used = c < labels.num_classes || c == kIgnoreId;
            const auto rgb = used ? class_color(c) : std::array<std::uint8_t, 3>{0, 0, 0};
            palette[c * 3 + 0] = rgb[0];
            palette[c * 3 + 1] = rgb[1];
            palette[c * 3 + 2] = rgb[2];
        }
        detail::png_write(path, labels.width, labels.height, 3, bytes, palette);
    } else {
        throw FormatError("label raster: unsupported extension: " + path.string());
    }
    detail::write_palette_sidecar(path, labels.num_classes);
}

namespace detail {

struct RawRaster {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bytes; // single channel
};

inline RawRaster read_pnm_header(const std::filesystem::path& path, const char* magic,
                                 int bytes_per_pixel) {
    const std::vector<std::uint8_t> raw = read_file_bytes(path);
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < raw.size() && std::isspace(raw[pos])) ++pos;
        if (pos < raw.size() && raw[pos] == '#') { // comment line
            while (pos < raw.size() && raw[pos] != '\n') ++pos;
            while (pos < raw.size() && std::isspace(raw[pos])) ++pos;
        }
        std::string t;
        while (pos < raw.size() && !std::isspace(raw[pos])) t.push_back(static_cast<char>(raw[pos++]));
        return t;
    };
    if (token() != magic) throw FormatError("pnm: bad magic: " + path.string());
    RawRaster r;
    try {
        r.width = std::stoi(token());
        r.height = std::stoi(token());
        const int maxval = std::stoi(token());
        if (maxval != 255) throw FormatError("pnm: maxval must be 255: " + path.string());
    } catch (const std::logic_error&) {
        throw FormatError("pnm: malformed header: " + path.string());
    }
    if (r.width <= 0 || r.height <= 0) throw FormatError("pnm: bad dimensions: " + path.string());
    ++pos; // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(r.width) * r.height * bytes_per_pixel;
    if (raw.size() - pos < need) throw FormatError("pnm: truncated payload: " + path.string());
    r.bytes.assign(raw.begin() + pos, raw.begin() + pos + need);
    return r;
}

} // namespace detail

inline LabelMap read_label_image(const std::filesystem::path& path, int num_classes) {
    detail::RawRaster raw;
    const std::string ext = path.extension().string();
    if (ext == ".pgm") {
        raw = detail::read_pnm_header(path, "P5", 1);
    } else if (ext == ".png") {
        const detail::PngData png = detail::png_read(path);
        if (png.color_type == 2)
            throw FormatError("label raster: multi-channel input: " + path.string());
        raw.width = png.width;
        raw.height = png.height;
        raw.bytes = png.pixels;
    } else {
        throw FormatError("label raster: unsupported extension: " + path.string());
    }
    LabelMap labels(raw.width, raw.height, num_classes);
    for (std::size_t i = 0; i < labels.pixels(); ++i) {
        const std::uint8_t id = raw.bytes[i];
        if (id >= num_classes && id != kIgnoreId)
            throw ValidationError("label raster: id " + std::to_string(id) +
                                  " out of range for " + std::to_string(num_classes) +
                                  " classes: " + path.string());
        labels.data[i] = id;
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Images: 8-bit RGB, values mapped linearly to [0,1]. PPM (binary P6) or PNG.
// ---------------------------------------------------------------------------

inline void write_image(const Image& image, const std::filesystem::path& path) {
    detail::require(image.channels == 3, "write_image: only 3-channel images");
    std::vector<std::uint8_t> bytes(image.pixels() * 3);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        const float v = image.data[i];
        const float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        bytes[i] = static_cast<std::uint8_t>(clamped * 255.0f + 0.5f);
    }
    const std::string ext = path.extension().string();
    if (ext == ".ppm") {
        std::vector<std::uint8_t> out;
        const std::string header = "P6\n" + std::to_string(image.width) + " " +
                                   std::to_string(image.height) + "\n255\n";
        out.insert(out.end(), header.begin(), header.end());
        out.insert(out.end(), bytes.begin(), bytes.end());
        detail::write_file_bytes(path, out);
    } else if (ext == ".png") {
        detail::png_write(path, image.width, image.height, 2, bytes);
    } else {
        throw FormatError("image: unsupported extension: " + path.string());
    }
}

inline Image read_image(const std::filesystem::path& path) {
    detail::RawRaster raw;
    const std::string ext = path.extension().string();
    if (ext == ".ppm") {
        raw = detail::read_pnm_header(path, "P6", 3);
    } else if (ext == ".png") {
        const detail::PngData png = detail::png_read(path);
        if (png.color_type != 2) throw FormatError("image: expected 8-bit RGB: " + path.string());
        raw.width = png.width;
        raw.height = png.height;
        raw.bytes = png.pixels;
    } else {
        throw FormatError("image: unsupported extension: " + path.string());
    }
    Image image(raw.width, raw.height, 3);
    for (std::size_t i = 0; i < image.data.size(); ++i)
        image.data[i] = static_cast<float>(raw.bytes[i]) / 255.0f;
    return image;
}

} // namespace labelprop
