#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/mask.hpp"

namespace cellmorph {

enum class ElementShape { Disk, Square, Cross };

// Symmetric binary structuring element centred on the origin.
struct StructuringElement {
    ElementShape shape = ElementShape::Disk;
    int radius = 1;

    struct Offset {
        int dx, dy;
    };

    std::vector<Offset> offsets() const {
        std::vector<Offset> out;
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                bool in = false;
                switch (shape) {
                    case ElementShape::Disk: in = dx * dx + dy * dy <= radius * radius; break;
                    case ElementShape::Square: in = true; break;
                    case ElementShape::Cross: in = dx == 0 || dy == 0; break;
                }
                if (in) out.push_back({dx, dy});
            }
        return out;
    }

    friend bool operator==(const StructuringElement&, const StructuringElement&) = default;
};

inline std::string to_string(const StructuringElement& se) {
    const char* name = se.shape == ElementShape::Disk ? "disk" : se.shape == ElementShape::Square ? "square" : "cross";
    return std::string(name) + ":" + std::to_string(se.radius);
}

// Parses "disk:1", "square:2", "cross:1".
inline StructuringElement parse_structuring_element(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    StructuringElement se;
    if (name == "disk") se.shape = ElementShape::Disk;
    else if (name == "square") se.shape = ElementShape::Square;
    else if (name == "cross") se.shape = ElementShape::Cross;
    else throw FormatError("config", "unknown structuring element '" + text + "'");
    if (colon != std::string::npos) {
        try {
            std::size_t used = 0;
            se.radius = std::stoi(text.substr(colon + 1), &used);
            if (used != text.size() - colon - 1) throw std::invalid_argument(text);
        } catch (const std::exception&) {
            throw FormatError("config", "bad structuring element radius in '" + text + "'");
        }
    }
    if (se.radius < 0) throw FormatError("config", "structuring element radius must be >= 0");
    return se;
}

// Binary grid over an arbitrary integer window; pixels outside the window read
// as background.
struct BinaryPatch {
    int x0 = 0, y0 = 0, width = 0, height = 0;
    std::vector<std::uint8_t> bits;

    BinaryPatch(int x0_, int y0_, int w, int h)
        : x0(x0_), y0(y0_), width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    bool get(int x, int y) const {
        const int lx = x - x0, ly = y - y0;
        if (lx < 0 || ly < 0 || lx >= width || ly >= height) return false;
        return bits[static_cast<std::size_t>(ly) * width + lx] != 0;
    }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y - y0) * width + (x - x0)] = v ? 1 : 0; }
};

inline BinaryPatch dilate(const BinaryPatch& in, const StructuringElement& se) {
    BinaryPatch out(in.x0, in.y0, in.width, in.height);
    const auto offs = se.offsets();
    for (int y = in.y0; y < in.y0 + in.height; ++y)
        for (int x = in.x0; x < in.x0 + in.width; ++x) {
            bool hit = false;
            for (const auto& o : offs)
                if (in.get(x - o.dx, y - o.dy)) {
                    hit = true;
                    break;
                }
            out.set(x, y, hit);
        }
    return out;
}

inline BinaryPatch erode(const BinaryPatch& in, const StructuringElement& se) {
    BinaryPatch out(in.x0, in.y0, in.width, in.height);
    const auto offs = se.offsets();
    for (int y = in.y0; y < in.y0 + in.height; ++y)
        for (int x = in.x0; x < in.x0 + in.width; ++x) {
            if (!in.get(x, y) && !offs.empty()) continue;
            bool all = true;
            for (const auto& o : offs)
                if (!in.get(x + o.dx, y + o.dy)) {
                    all = false;
                    break;
                }
            out.set(x, y, all);
        }
    return out;
}

namespace detail {

inline BinaryPatch patch_around(const Mask& m, int margin) {
    const BBox& b = m.bbox();
    BinaryPatch p(b.x0 - margin, b.y0 - margin, b.width() + 2 * margin, b.height() + 2 * margin);
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x)
            if (m.at(x, y)) p.set(x, y, true);
    return p;
}

inline Bitmap to_frame(const BinaryPatch& p, Dims d) {
    Bitmap out(d.size(), 0);
    for (int ly = 0; ly < p.height; ++ly)
        for (int lx = 0; lx < p.width; ++lx) {
            const int x = p.x0 + lx, y = p.y0 + ly;
            if (x < 0 || y < 0 || x >= d.width || y >= d.height) continue;
            if (p.bits[static_cast<std::size_t>(ly) * p.width + lx])
                out[static_cast<std::size_t>(y) * d.width + x] = 1;
        }
    return out;
}

}  // namespace detail

// Erosion of a mask; pixels outside the image count as background.
inline Bitmap erode(const Mask& m, const StructuringElement& se) {
    if (m.area() == 0) return Bitmap(m.dims().size(), 0);
    BinaryPatch p = detail::patch_around(m, 0);
    return detail::to_frame(erode(p, se), m.dims());
}

// Dilation of a mask, cropped to the image.
inline Bitmap dilate(const Mask& m, const StructuringElement& se) {
    if (m.area() == 0) return Bitmap(m.dims().size(), 0);
    return detail::to_frame(dilate(detail::patch_around(m, se.radius), se), m.dims());
}

// Closing (dilation then erosion) evaluated on the unbounded plane and then
// cropped to the image, so it is extensive and idempotent at the borders too.
inline Bitmap close(const Mask& m, const StructuringElement& se) {
    if (m.area() == 0) return Bitmap(m.dims().size(), 0);
    const BinaryPatch p = detail::patch_around(m, 2 * se.radius);
    return detail::to_frame(erode(dilate(p, se), se), m.dims());
}

}  // namespace cellmorph
