#pragma once

// TIFF stack input, PNG/TIFF output, percentile normalization and overlay
// rendering. TIFF goes through libtiff, PNG through libpng.

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/mask.hpp"

namespace cellmorph {

enum class SampleType { UInt8, UInt16, Float32, Float64 };

struct TiffWriteOptions {
    SampleType sample = SampleType::Float32;
    bool big_endian = false;
    int tile_size = 0;  // 0 writes strips; otherwise a multiple of 16
};

namespace detail {

struct TiffCloser {
    void operator()(TIFF* t) const {
        if (t) TIFFClose(t);
    }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

inline void silence_libtiff() {
    TIFFSetWarningHandler(nullptr);
    TIFFSetErrorHandler(nullptr);
}

inline double decode_sample(const unsigned char* p, int bits, int format) {
    if (format == SAMPLEFORMAT_IEEEFP) {
        if (bits == 32) {
            float f;
            std::memcpy(&f, p, 4);
            return static_cast<double>(f);
        }
        double d;
        std::memcpy(&d, p, 8);
        return d;
    }
    if (format == SAMPLEFORMAT_INT) {
        switch (bits) {
            case 8: return static_cast<double>(*reinterpret_cast<const std::int8_t*>(p));
            case 16: {
                std::int16_t v;
                std::memcpy(&v, p, 2);
                return v;
            }
            default: {
                std::int32_t v;
                std::memcpy(&v, p, 4);
                return v;
            }
        }
    }
    switch (bits) {
        case 8: return *p;
        case 16: {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            return v;
        }
        default: {
            std::uint32_t v;
            std::memcpy(&v, p, 4);
            return v;
        }
    }
}

inline Image read_tiff_page(TIFF* tif, int page, const std::string& path, double pitch) {
    const std::string where = path + " page " + std::to_string(page);
    std::uint32_t w = 0, h = 0;
    std::uint16_t spp = 1, bits = 1, format = SAMPLEFORMAT_UINT, photometric = PHOTOMETRIC_MINISBLACK;
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
    TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLEFORMAT, &format);
    TIFFGetFieldDefaulted(tif, TIFFTAG_PHOTOMETRIC, &photometric);

    if (spp != 1 || photometric == PHOTOMETRIC_RGB || photometric == PHOTOMETRIC_PALETTE ||
        photometric == PHOTOMETRIC_YCBCR || photometric == PHOTOMETRIC_SEPARATED)
        throw FormatError("imageio", where + ": multi-channel or colour TIFF (" + std::to_string(spp) +
                                         " samples/pixel) is not supported");
    const bool float_ok = format == SAMPLEFORMAT_IEEEFP && (bits == 32 || bits == 64);
    const bool int_ok = (format == SAMPLEFORMAT_UINT || format == SAMPLEFORMAT_INT) &&
                        (bits == 8 || bits == 16 || bits == 32);
    if (!float_ok && !int_ok)
        throw FormatError("imageio", where + ": unsupported sample layout (" + std::to_string(bits) + "-bit, format " +
                                         std::to_string(format) + ")");

    const int bytes = bits / 8;
    std::vector<double> values(static_cast<std::size_t>(w) * h);

    if (TIFFIsTiled(tif)) {
        std::uint32_t tw = 0, th = 0;
        TIFFGetField(tif, TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(tif, TIFFTAG_TILELENGTH, &th);
        std::vector<unsigned char> tile(static_cast<std::size_t>(TIFFTileSize(tif)));
        for (std::uint32_t ty = 0; ty < h; ty += th)
            for (std::uint32_t tx = 0; tx < w; tx += tw) {
                if (TIFFReadTile(tif, tile.data(), tx, ty, 0, 0) < 0)
                    throw FormatError("imageio", where + ": failed to decode tile at " + std::to_string(tx) + "," +
                                                     std::to_string(ty));
                for (std::uint32_t y = ty; y < std::min(h, ty + th); ++y)
                    for (std::uint32_t x = tx; x < std::min(w, tx + tw); ++x) {
                        const std::size_t off = (static_cast<std::size_t>(y - ty) * tw + (x - tx)) * bytes;
                        values[static_cast<std::size_t>(y) * w + x] = decode_sample(tile.data() + off, bits, format);
                    }
            }
    } else {
        std::vector<unsigned char> row(static_cast<std::size_t>(TIFFScanlineSize(tif)));
        for (std::uint32_t y = 0; y < h; ++y) {
            if (TIFFReadScanline(tif, row.data(), y, 0) < 0)
                throw FormatError("imageio", where + ": failed to decode row " + std::to_string(y));
            for (std::uint32_t x = 0; x < w; ++x)
                values[static_cast<std::size_t>(y) * w + x] = decode_sample(row.data() + x * bytes, bits, format);
        }
    }
    for (double v : values)
        if (!std::isfinite(v)) throw FormatError("imageio", where + ": non-finite sample");
    return Image(static_cast<int>(w), static_cast<int>(h), std::move(values), pitch);
}

template <typename T>
void encode_row(const Image& img, int y, std::vector<unsigned char>& out) {
    out.resize(static_cast<std::size_t>(img.width()) * sizeof(T));
    for (int x = 0; x < img.width(); ++x) {
        T v;
        if constexpr (std::is_floating_point_v<T>) {
            v = static_cast<T>(img(x, y));
        } else {
            const double r = std::round(img(x, y));
            v = static_cast<T>(std::clamp(r, 0.0, static_cast<double>(std::numeric_limits<T>::max())));
        }
        std::memcpy(out.data() + static_cast<std::size_t>(x) * sizeof(T), &v, sizeof(T));
    }
}

inline void encode_row(const Image& img, int y, SampleType s, std::vector<unsigned char>& out) {
    switch (s) {
        case SampleType::UInt8: encode_row<std::uint8_t>(img, y, out); break;
        case SampleType::UInt16: encode_row<std::uint16_t>(img, y, out); break;
        case SampleType::Float32: encode_row<float>(img, y, out); break;
        case SampleType::Float64: encode_row<double>(img, y, out); break;
    }
}

inline int sample_bits(SampleType s) {
    switch (s) {
        case SampleType::UInt8: return 8;
        case SampleType::UInt16: return 16;
        case SampleType::Float32: return 32;
        case SampleType::Float64: return 64;
    }
    return 0;
}

}  // namespace detail

// Reads every page of a single-channel TIFF as one frame.
inline RasterStack read_stack(const std::filesystem::path& path, double pixel_pitch_um = kDefaultPixelPitchUm) {
    detail::silence_libtiff();
    if (!std::filesystem::exists(path)) throw InputError("imageio", "input file not found: " + path.string());
    detail::TiffHandle tif(TIFFOpen(path.string().c_str(), "r"));
    if (!tif) throw InputError("imageio", "cannot open TIFF: " + path.string());

    std::vector<Image> frames;
    int page = 1;
    do {
        Image img = detail::read_tiff_page(tif.get(), page, path.string(), pixel_pitch_um);
        if (!frames.empty() && img.dims() != frames.front().dims())
            throw FormatError("imageio", path.string() + ": page " + std::to_string(page) + " is " +
                                             to_string(img.dims()) + ", expected " + to_string(frames.front().dims()));
        frames.push_back(std::move(img));
        ++page;
    } while (TIFFReadDirectory(tif.get()));
    return RasterStack(std::move(frames), pixel_pitch_um);
}

// Writes frames as pages of one TIFF. Integer sample types round and clamp.
inline void write_stack(const std::vector<Image>& frames, const std::filesystem::path& path,
                        const TiffWriteOptions& opt = {}) {
    detail::silence_libtiff();
    const std::string mode = opt.big_endian ? "wb" : "wl";
    detail::TiffHandle tif(TIFFOpen(path.string().c_str(), mode.c_str()));
    if (!tif) throw InputError("imageio", "cannot write TIFF: " + path.string());
    const int bits = detail::sample_bits(opt.sample);
    const int bytes = bits / 8;
    const bool is_float = opt.sample == SampleType::Float32 || opt.sample == SampleType::Float64;

    for (std::size_t page = 0; page < frames.size(); ++page) {
        const Image& img = frames[page];
        TIFF* t = tif.get();
        TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(img.width()));
        TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(img.height()));
        TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 1);
        TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, bits);
        TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, is_float ? SAMPLEFORMAT_IEEEFP : SAMPLEFORMAT_UINT);
        TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
        TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
        TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
        if (frames.size() > 1) {
            TIFFSetField(t, TIFFTAG_SUBFILETYPE, FILETYPE_PAGE);
            TIFFSetField(t, TIFFTAG_PAGENUMBER, static_cast<std::uint16_t>(page),
                         static_cast<std::uint16_t>(frames.size()));
        }
        std::vector<unsigned char> row;
        if (opt.tile_size > 0) {
            const int ts = opt.tile_size;
            TIFFSetField(t, TIFFTAG_TILEWIDTH, static_cast<std::uint32_t>(ts));
            TIFFSetField(t, TIFFTAG_TILELENGTH, static_cast<std::uint32_t>(ts));
            std::vector<unsigned char> tile(static_cast<std::size_t>(ts) * ts * bytes);
            for (int ty = 0; ty < img.height(); ty += ts)
                for (int tx = 0; tx < img.width(); tx += ts) {
                    std::fill(tile.begin(), tile.end(), 0);
                    for (int y = ty; y < std::min(img.height(), ty + ts); ++y) {
                        detail::encode_row(img, y, opt.sample, row);
                        const int n = std::min(img.width(), tx + ts) - tx;
                        std::memcpy(tile.data() + static_cast<std::size_t>(y - ty) * ts * bytes,
                                    row.data() + static_cast<std::size_t>(tx) * bytes,
                                    static_cast<std::size_t>(n) * bytes);
                    }
                    if (TIFFWriteTile(t, tile.data(), tx, ty, 0, 0) < 0)
                        throw FormatError("imageio", "failed to write tile to " + path.string());
                }
        } else {
            TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, TIFFDefaultStripSize(t, 0));
            for (int y = 0; y < img.height(); ++y) {
                detail::encode_row(img, y, opt.sample, row);
                if (TIFFWriteScanline(t, row.data(), static_cast<std::uint32_t>(y), 0) < 0)
                    throw FormatError("imageio", "failed to write row to " + path.string());
            }
        }
        if (!TIFFWriteDirectory(t)) throw FormatError("imageio", "failed to finish page in " + path.string());
    }
}

inline void write_image(const Image& img, const std::filesystem::path& path, const TiffWriteOptions& opt = {}) {
    write_stack({img}, path, opt);
}

// ---------------------------------------------------------------------------
// Percentiles and normalization

// Nearest-rank percentile: the smallest sample with at least pct% of the
// samples at or below it; pct = 0 gives the minimum.
inline double percentile(std::span<const double> values, double pct) {
    if (values.empty()) throw ProcessingError("imageio", "percentile of an empty sample");
    const std::size_t n = values.size();
    const double rank = std::ceil(pct * static_cast<double>(n) / 100.0 - 1e-9);
    const std::size_t k = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(n))) - 1;
    std::vector<double> tmp(values.begin(), values.end());
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k), tmp.end());
    return tmp[k];
}

inline constexpr double kDefaultNormLoPct = 0.1;
inline constexpr double kDefaultNormHiPct = 99.9;

// Affine map sending the lo percentile to 0 and the hi percentile to 1,
// clamped to [0, 1]. A degenerate range maps everything to 0.
inline Image normalize(const Image& img, double lo_pct = kDefaultNormLoPct, double hi_pct = kDefaultNormHiPct) {
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
        throw ProcessingError("imageio", "normalize needs 0 <= lo < hi <= 100");
    Image out(img.width(), img.height(), 0.0, img.pixel_pitch_um());
    if (img.empty()) return out;
    const double lo = percentile(img.values(), lo_pct);
    const double hi = percentile(img.values(), hi_pct);
    if (!(hi > lo)) return out;
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::clamp((img[i] - lo) * scale, 0.0, 1.0);
    return out;
}

// ---------------------------------------------------------------------------
// PNG

struct PngPixels {
    int width = 0;
    int height = 0;
    int channels = 0;   // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
    int bit_depth = 0;  // 8 or 16 after expansion
    std::vector<std::uint16_t> samples;

    std::uint16_t at(int x, int y, int c = 0) const {
        return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

// Returns an empty string on success. Kept free of C++ objects with
// destructors between setjmp and any libpng call that may longjmp.
inline std::string png_read_raw(std::FILE* fp, PngPixels& out, std::vector<unsigned char>& raw) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return "out of memory";
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        return "out of memory";
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return "corrupt PNG data";
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    const png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_read_update_info(png, info);
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    depth = png_get_bit_depth(png, info);
    out.bit_depth = depth;
    const std::size_t stride = png_get_rowbytes(png, info);
    raw.resize(stride * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return {};
}

inline std::string png_write_raw(std::FILE* fp, int width, int height, int channels, int depth,
                                 const std::vector<unsigned char>& raw) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) return "out of memory";
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        return "out of memory";
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(raw.data() + stride * y);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return "libpng write failure";
    }
    png_init_io(png, fp);
    const int color = channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return {};
}

}  // namespace detail

inline PngPixels read_png(const std::filesystem::path& path) {
    detail::FileHandle fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw InputError("imageio", "cannot open PNG: " + path.string());
    PngPixels px;
    std::vector<unsigned char> raw;
    const std::string err = detail::png_read_raw(fp.get(), px, raw);
    if (!err.empty()) throw FormatError("imageio", path.string() + ": " + err);
    const std::size_t n = static_cast<std::size_t>(px.width) * px.height * px.channels;
    px.samples.resize(n);
    if (px.bit_depth == 16)
        for (std::size_t i = 0; i < n; ++i)
            px.samples[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    else
        for (std::size_t i = 0; i < n; ++i) px.samples[i] = raw[i];
    return px;
}

// channels is 1 (gray) or 3 (RGB); depth 8 or 16. Samples are row-major,
// interleaved.
inline void write_png(const std::filesystem::path& path, int width, int height, int channels, int depth,
                      const std::vector<std::uint16_t>& samples) {
    std::vector<unsigned char> raw;
    if (depth == 16) {
        raw.resize(samples.size() * 2);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            raw[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            raw[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xFF);
        }
    } else {
        raw.resize(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) raw[i] = static_cast<unsigned char>(samples[i]);
    }
    detail::FileHandle fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw InputError("imageio", "cannot write PNG: " + path.string());
    const std::string err = detail::png_write_raw(fp.get(), width, height, channels, depth, raw);
    if (!err.empty()) throw FormatError("imageio", path.string() + ": " + err);
}

// Deterministic, well-separated colour for mask index i.
inline std::array<std::uint8_t, 3> mask_color(std::size_t i) {
    const double hue = std::fmod(static_cast<double>(i) * 0.618033988749895, 1.0) * 6.0;
    const double s = 0.8, v = 1.0;
    const int sector = static_cast<int>(hue) % 6;
    const double f = hue - std::floor(hue);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = 0, g = 0, b = 0;
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    auto q8 = [](double c) { return static_cast<std::uint8_t>(std::lround(c * 255.0)); };
    return {q8(r), q8(g), q8(b)};
}

// 8-bit RGB: grayscale background (min-max scaled), each mask tinted with its
// index colour at 50% and outlined with a 1-px contour in full colour.
inline void write_overlay(const Image& img, const MaskSet& masks, const std::filesystem::path& path) {
    if (!masks.empty() && masks.dims() != img.dims())
        throw FormatError("imageio", "overlay masks are " + to_string(masks.dims()) + ", image is " +
                                         to_string(img.dims()));
    const int w = img.width(), h = img.height();
    double lo = 0.0, hi = 0.0;
    if (!img.empty()) {
        const auto [mn, mx] = std::minmax_element(img.values().begin(), img.values().end());
        lo = *mn;
        hi = *mx;
    }
    std::vector<std::uint16_t> rgb(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double g = hi > lo ? (img[i] - lo) / (hi - lo) : 0.0;
        const auto v = static_cast<std::uint16_t>(std::lround(std::clamp(g, 0.0, 1.0) * 255.0));
        rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = v;
    }
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const Mask& m = masks[k];
        const auto color = mask_color(k);
        const BBox& b = m.bbox();
        for (int y = b.y0; y <= b.y1; ++y)
            for (int x = b.x0; x <= b.x1; ++x) {
                if (!m.at(x, y)) continue;
                const bool edge = !m.contains_point(x - 1, y) || !m.contains_point(x + 1, y) ||
                                  !m.contains_point(x, y - 1) || !m.contains_point(x, y + 1);
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                for (int c = 0; c < 3; ++c) {
                    auto& s = rgb[3 * i + c];
                    s = edge ? color[c] : static_cast<std::uint16_t>((s + color[c] + 1) / 2);
                }
            }
    }
    write_png(path, w, h, 3, 8, rgb);
}

// 16-bit label map: 0 background, mask i stored as i + 1. Masks must be disjoint.
inline void write_label_map(const MaskSet& masks, const std::filesystem::path& path) {
    const Dims d = masks.dims();
    if (masks.size() > 65534) throw FormatError("imageio", "too many masks for a 16-bit label map");
    std::vector<std::uint16_t> labels(d.size(), 0);
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const Bitmap& bits = masks[k].bitmap();
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (!bits[i]) continue;
            if (labels[i] != 0)
                throw FormatError("imageio", "label map needs disjoint masks; masks " + std::to_string(labels[i] - 1) +
                                                 " and " + std::to_string(k) + " overlap");
            labels[i] = static_cast<std::uint16_t>(k + 1);
        }
    }
    write_png(path, d.width, d.height, 1, 16, labels);
}

}  // namespace cellmorph
