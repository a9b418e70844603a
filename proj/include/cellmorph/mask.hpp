#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"

namespace cellmorph {

// Inclusive pixel bounds. An empty box has x0 > x1.
struct BBox {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

    bool empty() const { return x0 > x1 || y0 > y1; }
    int width() const { return empty() ? 0 : x1 - x0 + 1; }
    int height() const { return empty() ? 0 : y1 - y0 + 1; }
    bool contains(const BBox& o) const { return !o.empty() && o.x0 >= x0 && o.x1 <= x1 && o.y0 >= y0 && o.y1 <= y1; }
    bool intersects(const BBox& o) const {
        return !empty() && !o.empty() && o.x0 <= x1 && x0 <= o.x1 && o.y0 <= y1 && y0 <= o.y1;
    }
    friend bool operator==(const BBox&, const BBox&) = default;
};

using Bitmap = std::vector<std::uint8_t>;

// One candidate cell: a full-frame binary bitmap with cached area and tight box.
// source_id is the index the mask had when it entered the pipeline; it survives
// the contiguous re-indexing each stage performs and keys the audit log.
class Mask {
public:
    Mask() = default;

    Mask(int id, Dims dims, Bitmap bitmap) : id_(id), source_id_(id), dims_(dims), bits_(std::move(bitmap)) {
        if (bits_.size() != dims_.size())
            throw FormatError("proposals", "mask " + std::to_string(id) + " bitmap has " + std::to_string(bits_.size()) +
                                               " pixels, expected " + std::to_string(dims_.size()));
        for (auto& b : bits_) b = b ? 1 : 0;
        recount();
    }

    int id() const { return id_; }
    int source_id() const { return source_id_; }
    Dims dims() const { return dims_; }
    std::size_t area() const { return area_; }
    const BBox& bbox() const { return bbox_; }
    const Bitmap& bitmap() const { return bits_; }

    bool at(int x, int y) const {
        return bits_[static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) + static_cast<std::size_t>(x)] != 0;
    }
    bool contains_point(int x, int y) const {
        return x >= 0 && y >= 0 && x < dims_.width && y < dims_.height && at(x, y);
    }

    Mask with_id(int id) const {
        Mask m = *this;
        m.id_ = id;
        return m;
    }
    Mask with_source_id(int source_id) const {
        Mask m = *this;
        m.source_id_ = source_id;
        return m;
    }
    Mask with_bitmap(Bitmap bitmap) const {
        Mask m(id_, dims_, std::move(bitmap));
        m.source_id_ = source_id_;
        return m;
    }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    void recount() {
        area_ = 0;
        bbox_ = BBox{dims_.width, dims_.height, -1, -1};
        for (int y = 0; y < dims_.height; ++y) {
            const std::uint8_t* row = bits_.data() + static_cast<std::size_t>(y) * dims_.width;
            for (int x = 0; x < dims_.width; ++x) {
                if (!row[x]) continue;
                ++area_;
                bbox_.x0 = std::min(bbox_.x0, x);
                bbox_.x1 = std::max(bbox_.x1, x);
                bbox_.y0 = std::min(bbox_.y0, y);
                bbox_.y1 = std::max(bbox_.y1, y);
            }
        }
        if (area_ == 0) bbox_ = BBox{};
    }

    int id_ = 0;
    int source_id_ = 0;
    Dims dims_{};
    Bitmap bits_;
    std::size_t area_ = 0;
    BBox bbox_{};
};

class MaskSet {
public:
    MaskSet() = default;
    explicit MaskSet(Dims dims) : dims_(dims) {}
    MaskSet(Dims dims, std::vector<Mask> masks) : dims_(dims), masks_(std::move(masks)) {
        for (const auto& m : masks_)
            if (m.dims() != dims_)
                throw FormatError("proposals", "mask " + std::to_string(m.id()) + " is " + to_string(m.dims()) +
                                                   ", expected " + to_string(dims_));
    }

    Dims dims() const { return dims_; }
    std::size_t size() const { return masks_.size(); }
    bool empty() const { return masks_.empty(); }
    const std::vector<Mask>& masks() const { return masks_; }
    const Mask& operator[](std::size_t i) const { return masks_[i]; }
    auto begin() const { return masks_.begin(); }
    auto end() const { return masks_.end(); }

    // Keeps the listed positions in order and renumbers ids 0..n-1.
    MaskSet subset(const std::vector<std::size_t>& keep) const {
        std::vector<Mask> out;
        out.reserve(keep.size());
        for (std::size_t i : keep) out.push_back(masks_.at(i).with_id(static_cast<int>(out.size())));
        MaskSet s(dims_);
        s.masks_ = std::move(out);
        return s;
    }

    MaskSet reindexed() const {
        std::vector<std::size_t> all(masks_.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        return subset(all);
    }

    friend bool operator==(const MaskSet&, const MaskSet&) = default;

private:
    Dims dims_{};
    std::vector<Mask> masks_;
};

inline std::size_t intersection_area(const Mask& a, const Mask& b) {
    if (!a.bbox().intersects(b.bbox())) return 0;
    const int x0 = std::max(a.bbox().x0, b.bbox().x0), x1 = std::min(a.bbox().x1, b.bbox().x1);
    const int y0 = std::max(a.bbox().y0, b.bbox().y0), y1 = std::min(a.bbox().y1, b.bbox().y1);
    const int w = a.dims().width;
    std::size_t n = 0;
    for (int y = y0; y <= y1; ++y) {
        const std::uint8_t* ra = a.bitmap().data() + static_cast<std::size_t>(y) * w;
        const std::uint8_t* rb = b.bitmap().data() + static_cast<std::size_t>(y) * w;
        for (int x = x0; x <= x1; ++x) n += static_cast<std::size_t>(ra[x] & rb[x]);
    }
    return n;
}

inline double iou(const Mask& a, const Mask& b) {
    const std::size_t inter = intersection_area(a, b);
    const std::size_t uni = a.area() + b.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// a is a subset of b (every set pixel of a is set in b). The empty set is a
// subset of anything.
inline bool is_subset(const Mask& a, const Mask& b) {
    if (a.area() == 0) return true;
    if (a.area() > b.area() || !b.bbox().contains(a.bbox())) return false;
    return intersection_area(a, b) == a.area();
}

inline bool is_subset(const Bitmap& a, const Mask& b) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] && !b.bitmap()[i]) return false;
    return true;
}

struct Centroid {
    double x = 0.0;
    double y = 0.0;
};

// Mean pixel-center position, in pixel-index coordinates.
inline Centroid centroid(const Mask& m) {
    if (m.area() == 0) return {};
    double sx = 0.0, sy = 0.0;
    const BBox& b = m.bbox();
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x)
            if (m.at(x, y)) {
                sx += x;
                sy += y;
            }
    const double n = static_cast<double>(m.area());
    return {sx / n, sy / n};
}

}  // namespace cellmorph
