#pragma once

// Per-cell features: mean intensity on the stacked image, length from the
// minimum-area rotated box, average width over the middle half of that box,
// and volume under a spherocylinder model (cylinder plus two hemispherical
// caps, 1 um^3 = 1 fL).

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/geometry.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/mask.hpp"

namespace cellmorph {

inline double mean_intensity(const Mask& m, const Image& img) {
    if (m.dims() != img.dims()) throw ProcessingError("morphometry", "mask and image dimensions differ");
    if (m.area() == 0) throw ProcessingError("morphometry", "mean intensity of an empty mask");
    double s = 0.0;
    const BBox& b = m.bbox();
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x)
            if (m.at(x, y)) s += img(x, y);
    return s / static_cast<double>(m.area());
}

// Spherocylinder volume in fL from length and width in um.
inline double volume(double length_um, double width_um) {
    if (!(width_um > 0.0) || !(length_um >= width_um))
        throw ProcessingError("morphometry", "spherocylinder needs length >= width > 0 (got L=" +
                                                 std::to_string(length_um) + ", W=" + std::to_string(width_um) + ")");
    const double r = width_um / 2.0;
    return std::numbers::pi * r * r * (length_um - width_um) + 4.0 / 3.0 * std::numbers::pi * r * r * r;
}

namespace detail {

// One pass of the middle-half width measurement with columns counted from the
// `from_max` end of the long axis.
inline std::optional<double> middle_width(const Mask& m, const RotatedBox& box, bool from_max) {
    const double length = box.length();
    std::map<long, std::pair<std::int64_t, std::int64_t>> columns;
    const BBox& b = m.bbox();
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x) {
            if (!m.at(x, y)) continue;
            const IPoint c{x, y};
            const std::int64_t a = dot(c, box.long_dir);
            const std::int64_t s = dot(c, box.short_dir);
            // distance of the pixel centre from the box end, in px
            const double u = static_cast<double>(from_max ? box.long_max - a : a - box.long_min) / box.norm + 0.5;
            const long k = static_cast<long>(std::floor(u));
            const double centre = k + 0.5;
            if (centre < length / 4.0 || centre > 3.0 * length / 4.0) continue;
            auto [it, fresh] = columns.try_emplace(k, s, s);
            if (!fresh) {
                it->second.first = std::min(it->second.first, s);
                it->second.second = std::max(it->second.second, s);
            }
        }
    if (columns.empty()) return std::nullopt;
    double total = 0.0;
    for (const auto& [k, ext] : columns) total += static_cast<double>(ext.second - ext.first) / box.norm + 1.0;
    return total / static_cast<double>(columns.size());
}

// The same box with its axes swapped.
inline RotatedBox swap_axes(const RotatedBox& b) {
    RotatedBox r = b;
    r.long_dir = b.short_dir;
    r.short_dir = {-b.long_dir.x, -b.long_dir.y};
    r.long_min = b.short_min, r.long_max = b.short_max;
    r.short_min = -b.long_max, r.short_max = -b.long_min;
    return r;
}

}  // namespace detail

// Average width in px: the box is cut into four equal sections along its
// length; over the middle two, each unit-length column contributes its
// foreground extent across the box (outermost pixel centres + 1). Columns are
// counted from both ends of the axis and the results averaged, so the sign of
// the axis does not matter; a square box is measured along both axes.
inline double avg_width(const Mask& m, const RotatedBox& box) {
    std::vector<RotatedBox> frames{box};
    if (box.square()) frames.push_back(detail::swap_axes(box));
    std::vector<double> widths;
    for (const RotatedBox& b : frames)
        for (bool from_max : {false, true}) {
            const auto w = detail::middle_width(m, b, from_max);
            if (!w) throw ProcessingError("morphometry", "mask " + std::to_string(m.id()) +
                                                             ": middle sections are empty, width unmeasurable");
            widths.push_back(*w);
        }
    std::sort(widths.begin(), widths.end());
    double total = 0.0;
    for (double w : widths) total += w;
    return total / static_cast<double>(widths.size());
}

// Average width over every minimum-area box of the mask. Usually there is
// exactly one; averaging over ties keeps the result exact under 90-degree
// rotations of the mask.
inline double avg_width(const Mask& m) {
    const auto boxes = fit_rotated_boxes(m);
    if (boxes.empty()) throw ProcessingError("morphometry", "mask " + std::to_string(m.id()) + " is empty");
    std::vector<double> widths;
    for (const RotatedBox& b : boxes) widths.push_back(avg_width(m, b));
    std::sort(widths.begin(), widths.end());
    double total = 0.0;
    for (double w : widths) total += w;
    return total / static_cast<double>(widths.size());
}

struct CellFeatures {
    int mask_id = 0;
    double mean_intensity = 0.0;
    double length_um = 0.0;
    double width_um = 0.0;
    double volume_fl = 0.0;
    Centroid centroid_px;
    double angle_deg = 0.0;
};

// One row per mask: features, or the reason they could not be measured.
struct FeatureRow {
    int mask_id = 0;
    std::optional<CellFeatures> features;
    std::string error;
};

inline CellFeatures measure_cell(const Mask& m, const Image& stacked, double pixel_pitch_um) {
    const RotatedBox box = fit_rotated_box(m);
    const double width_px = avg_width(m);
    CellFeatures f;
    f.mask_id = m.id();
    f.mean_intensity = mean_intensity(m, stacked);
    f.length_um = box.length() * pixel_pitch_um;
    f.width_um = width_px * pixel_pitch_um;
    f.volume_fl = volume(f.length_um, f.width_um);
    f.centroid_px = centroid(m);
    f.angle_deg = box.angle_deg();
    return f;
}

inline std::vector<FeatureRow> extract_features(const MaskSet& ms, const Image& stacked, double pixel_pitch_um) {
    if (!(pixel_pitch_um > 0.0)) throw ProcessingError("morphometry", "pixel pitch must be positive");
    if (!ms.empty() && ms.dims() != stacked.dims())
        throw ProcessingError("morphometry", "masks are " + to_string(ms.dims()) + ", image is " +
                                                 to_string(stacked.dims()));
    std::vector<FeatureRow> rows;
    rows.reserve(ms.size());
    for (const Mask& m : ms) {
        FeatureRow row;
        row.mask_id = m.id();
        try {
            row.features = measure_cell(m, stacked, pixel_pitch_um);
        } catch (const ProcessingError& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// mask_id,centroid_x_px,centroid_y_px,angle_deg,mean_intensity_au,length_um,width_um,volume_fl
// Six decimals; rows that could not be measured carry "nan" in every feature
// column.
inline void write_features_csv(const std::vector<FeatureRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("morphometry", "cannot write features: " + path.string());
    out << "mask_id,centroid_x_px,centroid_y_px,angle_deg,mean_intensity_au,length_um,width_um,volume_fl\n";
    char line[512];
    for (const auto& r : rows) {
        if (r.features) {
            const CellFeatures& f = *r.features;
            std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.mask_id, f.centroid_px.x,
                          f.centroid_px.y, f.angle_deg, f.mean_intensity, f.length_um, f.width_um, f.volume_fl);
        } else {
            std::snprintf(line, sizeof line, "%d,nan,nan,nan,nan,nan,nan,nan\n", r.mask_id);
        }
        out << line;
    }
}

}  // namespace cellmorph
