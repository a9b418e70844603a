#pragma once

// Convex hull and minimum-area enclosing rectangle on pixel centres.
// Extents are tracked as integer numerators over an edge length so that
// comparisons are exact and results are invariant under 90-degree grid
// rotations. A pixel occupies the unit square around its centre, so a box
// side is its centre span plus one pixel; a 1-px mask gets a 1x1 box.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "cellmorph/mask.hpp"

namespace cellmorph {

struct IPoint {
    std::int64_t x = 0;
    std::int64_t y = 0;
    friend bool operator==(const IPoint&, const IPoint&) = default;
    friend auto operator<=>(const IPoint&, const IPoint&) = default;
};

inline std::int64_t cross(IPoint o, IPoint a, IPoint b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }
inline std::int64_t dot(IPoint a, IPoint b) { return a.x * b.x + a.y * b.y; }

// Andrew's monotone chain. Counter-clockwise in a y-up frame, no collinear
// vertices, starting from the lexicographically smallest point.
inline std::vector<IPoint> convex_hull(std::vector<IPoint> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<IPoint> hull(2 * pts.size());
    std::size_t k = 0;
    for (const IPoint& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        const IPoint& p = pts[i];
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    return hull;
}

// Pixels of a mask that can lie on the hull: the leftmost and rightmost
// pixel of each row, as integer coordinates of their centres.
inline std::vector<IPoint> pixel_hull_points(const Mask& m) {
    std::vector<IPoint> pts;
    const BBox& b = m.bbox();
    for (int y = b.y0; y <= b.y1; ++y) {
        int lo = -1, hi = -1;
        for (int x = b.x0; x <= b.x1; ++x)
            if (m.at(x, y)) {
                if (lo < 0) lo = x;
                hi = x;
            }
        if (lo < 0) continue;
        pts.push_back({lo, y});
        if (hi != lo) pts.push_back({hi, y});
    }
    return pts;
}

// Rotated rectangle around pixel centres. The long side runs along
// `long_dir`, the short side along `short_dir` (its left-hand perpendicular);
// both are integer vectors of length `norm`. Centre projections are stored as
// integer numerators, so the centre span along the long axis is
// (long_max - long_min) / norm.
struct RotatedBox {
    IPoint long_dir{1, 0};
    IPoint short_dir{0, 1};
    double norm = 1.0;
    std::int64_t long_min = 0, long_max = 0;    // projections on long_dir
    std::int64_t short_min = 0, short_max = 0;  // projections on short_dir

    double length() const { return static_cast<double>(long_max - long_min) / norm + 1.0; }
    double width() const { return static_cast<double>(short_max - short_min) / norm + 1.0; }
    bool square() const { return long_max - long_min == short_max - short_min; }

    // Orientation of the long axis in image coordinates (x right, y down),
    // in degrees within [-90, 90).
    double angle_deg() const {
        double a = std::atan2(static_cast<double>(long_dir.y), static_cast<double>(long_dir.x)) * 180.0 / std::numbers::pi;
        while (a >= 90.0) a -= 180.0;
        while (a < -90.0) a += 180.0;
        return a;
    }

    // Corners in image coordinates (pixel (x, y) covers [x, x+1) x [y, y+1)).
    std::array<std::array<double, 2>, 4> corners() const {
        const double n2 = norm * norm, half = 0.5 * norm;
        auto at = [&](double pl, double ps) -> std::array<double, 2> {
            return {(pl * long_dir.x + ps * short_dir.x) / n2 + 0.5, (pl * long_dir.y + ps * short_dir.y) / n2 + 0.5};
        };
        const double l0 = long_min - half, l1 = long_max + half, s0 = short_min - half, s1 = short_max + half;
        return {at(l0, s0), at(l1, s0), at(l1, s1), at(l0, s1)};
    }
};

namespace detail {

inline RotatedBox box_from(IPoint dir, std::int64_t pmin, std::int64_t pmax, std::int64_t qmin, std::int64_t qmax) {
    const IPoint perp{-dir.y, dir.x};
    RotatedBox b;
    b.norm = std::sqrt(static_cast<double>(dot(dir, dir)));
    if (pmax - pmin >= qmax - qmin) {
        b.long_dir = dir;
        b.short_dir = perp;
        b.long_min = pmin, b.long_max = pmax, b.short_min = qmin, b.short_max = qmax;
    } else {
        // rotate the frame so the long side comes first: (dir, perp) -> (perp, -dir)
        b.long_dir = perp;
        b.short_dir = {-dir.x, -dir.y};
        b.long_min = qmin, b.long_max = qmax, b.short_min = -pmax, b.short_max = -pmin;
    }
    return b;
}

// a_num / a_den < b_num / b_den for non-negative values
inline bool ratio_less(__int128 a_num, __int128 a_den, __int128 b_num, __int128 b_den) {
    return a_num * b_den < b_num * a_den;
}

// Shortest integer vector along v, so equal orientations give equal integers.
inline IPoint primitive(IPoint v) {
    const std::int64_t g = std::gcd(v.x, v.y);
    return g > 0 ? IPoint{v.x / g, v.y / g} : v;
}

inline bool same_orientation(const RotatedBox& a, const RotatedBox& b) {
    return cross({0, 0}, a.long_dir, b.long_dir) == 0 || dot(a.long_dir, b.long_dir) == 0;
}

}  // namespace detail

// Every minimum-area rectangle around the hull (rotating calipers over the
// hull edges), keeping among equal areas only the most elongated. One box per
// orientation, ordered by edge length then hull order, so the first box has
// the same extents for a mask and its 90-degree rotations.
inline std::vector<RotatedBox> min_area_rects(const std::vector<IPoint>& hull) {
    const std::size_t h = hull.size();
    if (h == 0) return {};
    if (h == 1) return {detail::box_from({1, 0}, hull[0].x, hull[0].x, hull[0].y, hull[0].y)};
    if (h == 2) {
        const IPoint d = detail::primitive({hull[1].x - hull[0].x, hull[1].y - hull[0].y});
        const IPoint perp{-d.y, d.x};
        const auto p0 = dot(hull[0], d), p1 = dot(hull[1], d), q = dot(hull[0], perp);
        return {detail::box_from(d, std::min(p0, p1), std::max(p0, p1), q, q)};
    }
    auto next = [h](std::size_t i) { return (i + 1) % h; };

    struct Candidate {
        RotatedBox box;
        __int128 den;
    };
    std::vector<Candidate> best;
    __int128 best_num = -1, best_den = 1, best_len = 0;
    std::size_t top = 0, right = 0, left = 0;
    for (std::size_t i = 0; i < h; ++i) {
        const IPoint a = hull[i], b = hull[next(i)];
        const IPoint d = detail::primitive({b.x - a.x, b.y - a.y});
        const IPoint n{-d.y, d.x};  // towards the hull interior
        if (i == 0) {
            for (std::size_t k = 0; k < h; ++k) {
                if (dot(hull[k], n) > dot(hull[top], n)) top = k;
                if (dot(hull[k], d) > dot(hull[right], d)) right = k;
                if (dot(hull[k], d) < dot(hull[left], d)) left = k;
            }
        } else {
            for (std::size_t s = 0; s < h && dot(hull[next(top)], n) >= dot(hull[top], n); ++s) top = next(top);
            for (std::size_t s = 0; s < h && dot(hull[next(right)], d) >= dot(hull[right], d); ++s) right = next(right);
            for (std::size_t s = 0; s < h && dot(hull[next(left)], d) <= dot(hull[left], d); ++s) left = next(left);
        }
        const std::int64_t pmin = dot(hull[left], d), pmax = dot(hull[right], d);
        const std::int64_t qmin = dot(a, n), qmax = dot(hull[top], n);
        const __int128 den = static_cast<__int128>(dot(d, d));
        const __int128 num = static_cast<__int128>(pmax - pmin) * (qmax - qmin);
        const __int128 len = std::max(pmax - pmin, qmax - qmin);
        // order by area num/den, then by elongation len^2/den (larger first)
        int cmp = 0;
        if (best_num < 0 || detail::ratio_less(num, den, best_num, best_den)) cmp = -1;
        else if (detail::ratio_less(best_num, best_den, num, den)) cmp = 1;
        else if (detail::ratio_less(best_len * best_len, best_den, len * len, den)) cmp = -1;
        else if (detail::ratio_less(len * len, den, best_len * best_len, best_den)) cmp = 1;
        if (cmp > 0) continue;
        if (cmp < 0) {
            best.clear();
            best_num = num, best_den = den, best_len = len;
        }
        const RotatedBox box = detail::box_from(d, pmin, pmax, qmin, qmax);
        const bool seen = std::any_of(best.begin(), best.end(),
                                      [&](const Candidate& c) { return detail::same_orientation(c.box, box); });
        if (!seen) best.push_back({box, den});
    }
    std::stable_sort(best.begin(), best.end(), [](const Candidate& a, const Candidate& b) { return a.den < b.den; });
    std::vector<RotatedBox> out;
    for (auto& c : best) out.push_back(c.box);
    return out;
}

inline RotatedBox min_area_rect(const std::vector<IPoint>& hull) {
    const auto boxes = min_area_rects(hull);
    return boxes.empty() ? RotatedBox{} : boxes.front();
}

inline std::vector<RotatedBox> fit_rotated_boxes(const Mask& m) {
    return min_area_rects(convex_hull(pixel_hull_points(m)));
}

inline RotatedBox fit_rotated_box(const Mask& m) { return min_area_rect(convex_hull(pixel_hull_points(m))); }

}  // namespace cellmorph
