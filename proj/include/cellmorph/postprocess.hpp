#pragma once

// Mask refinement chain, applied in this order:
//   1. area and intensity filter   4. erosion-based overlap removal
//   2. contained-mask removal      5. edge-mask removal
//   3. IoU non-maximum suppression 6. morphological closing
//
// Every step is a pure MaskSet -> MaskSet transform that renumbers ids
// contiguously. Removals are reported to an optional AuditLog keyed by the
// mask's source id.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/mask.hpp"
#include "cellmorph/morphology.hpp"
#include "cellmorph/morphometry.hpp"

namespace cellmorph {

struct PostprocessConfig {
    std::size_t min_area_px = 100;
    std::size_t max_area_px = 1250;
    double intensity_lo = 0.35;
    double intensity_hi = 1.6;
    double iou_thresh = 0.3;
    StructuringElement erosion_elem{ElementShape::Disk, 1};
    int border_px = 2;
    StructuringElement closing_elem{ElementShape::Disk, 1};

    void validate() const {
        auto fail = [](const std::string& m) { throw ProcessingError("postprocess", m); };
        if (!(min_area_px > 0 && min_area_px < max_area_px)) fail("need 0 < min_area_px < max_area_px");
        if (!(intensity_lo > 0.0 && intensity_lo < intensity_hi)) fail("need 0 < intensity_lo < intensity_hi");
        if (!(iou_thresh > 0.0 && iou_thresh < 1.0)) fail("need 0 < iou_thresh < 1");
        if (border_px < 0) fail("border_px must be >= 0");
    }

    friend bool operator==(const PostprocessConfig&, const PostprocessConfig&) = default;
};

struct AuditEntry {
    std::string step;
    std::optional<int> mask_id;  // empty for per-step summary rows
    std::string reason;
    double metric_value = 0.0;
};

// Removal records plus one summary row per step (reason "removed_total",
// metric = number of masks removed by that step).
class AuditLog {
public:
    void removed(const std::string& step, int mask_id, const std::string& reason, double metric) {
        entries_.push_back({step, mask_id, reason, metric});
    }
    void summary(const std::string& step, std::size_t count) {
        entries_.push_back({step, std::nullopt, "removed_total", static_cast<double>(count)});
    }
    const std::vector<AuditEntry>& entries() const { return entries_; }

    std::size_t removal_count() const {
        return static_cast<std::size_t>(
            std::count_if(entries_.begin(), entries_.end(), [](const AuditEntry& e) { return e.mask_id.has_value(); }));
    }

    // UTF-8 CSV: step,mask_id,reason,metric_value
    void write_csv(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw InputError("postprocess", "cannot write audit log: " + path.string());
        out << "step,mask_id,reason,metric_value\n";
        char num[64];
        for (const auto& e : entries_) {
            std::snprintf(num, sizeof num, "%.6f", e.metric_value);
            out << e.step << ',' << (e.mask_id ? std::to_string(*e.mask_id) : std::string()) << ',' << e.reason << ','
                << num << '\n';
        }
    }

private:
    std::vector<AuditEntry> entries_;
};

namespace detail {

inline void log_removal(AuditLog* log, const char* step, const Mask& m, const char* reason, double metric) {
    if (log) log->removed(step, m.source_id(), reason, metric);
}

// Ranking used by the containment steps: larger area first, then lower id.
inline bool outranks(const Mask& a, const Mask& b) {
    return a.area() != b.area() ? a.area() > b.area() : a.id() < b.id();
}

inline std::vector<std::size_t> ascending_rank_order(const MaskSet& ms) {
    std::vector<std::size_t> order(ms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return outranks(ms[b], ms[a]); });
    return order;
}

inline std::vector<std::size_t> kept_indices(const std::vector<bool>& removed) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < removed.size(); ++i)
        if (!removed[i]) keep.push_back(i);
    return keep;
}

}  // namespace detail

inline MaskSet filter_area(const MaskSet& ms, const PostprocessConfig& cfg, AuditLog* log = nullptr) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::size_t a = ms[i].area();
        if (a >= cfg.min_area_px && a <= cfg.max_area_px) keep.push_back(i);
        else detail::log_removal(log, "filter", ms[i], "area", static_cast<double>(a));
    }
    return ms.subset(keep);
}

// Keeps masks whose mean intensity lies strictly inside
// (intensity_lo * I_bar, intensity_hi * I_bar), where I_bar is the mean of the
// per-mask means over the input set, computed once.
inline MaskSet filter_intensity(const MaskSet& ms, const Image& stacked, const PostprocessConfig& cfg,
                                AuditLog* log = nullptr) {
    if (ms.empty()) return ms;
    if (stacked.dims() != ms.dims()) throw ProcessingError("postprocess", "stacked image dimensions differ from masks");
    std::vector<double> intensity(ms.size());
    double total = 0.0;
    for (std::size_t i = 0; i < ms.size(); ++i) total += intensity[i] = mean_intensity(ms[i], stacked);
    const double mean = total / static_cast<double>(ms.size());
    const double lo = cfg.intensity_lo * mean, hi = cfg.intensity_hi * mean;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (intensity[i] > lo && intensity[i] < hi) keep.push_back(i);
        else detail::log_removal(log, "filter", ms[i], "intensity", intensity[i]);
    }
    return ms.subset(keep);
}

// Drops every mask that is a subset of a higher-ranked survivor (larger area,
// or equal area and lower id). Logged metric: id of the containing mask.
inline MaskSet remove_contained(const MaskSet& ms, AuditLog* log = nullptr) {
    std::vector<bool> removed(ms.size(), false);
    for (std::size_t i : detail::ascending_rank_order(ms)) {
        for (std::size_t j = 0; j < ms.size(); ++j) {
            if (j == i || removed[j] || !detail::outranks(ms[j], ms[i])) continue;
            if (is_subset(ms[i], ms[j])) {
                removed[i] = true;
                detail::log_removal(log, "contained", ms[i], "contained", ms[j].source_id());
                break;
            }
        }
    }
    return ms.subset(detail::kept_indices(removed));
}

// Greedy IoU suppression in descending area order (ties: lower id first). A
// mask survives iff its IoU with every previously accepted mask is at most
// iou_thresh. Logged metric: the largest offending IoU.
inline MaskSet nms(const MaskSet& ms, const PostprocessConfig& cfg, AuditLog* log = nullptr) {
    std::vector<std::size_t> order = detail::ascending_rank_order(ms);
    std::reverse(order.begin(), order.end());
    std::vector<std::size_t> accepted;
    std::vector<bool> removed(ms.size(), false);
    for (std::size_t i : order) {
        double worst = 0.0;
        for (std::size_t j : accepted) worst = std::max(worst, iou(ms[i], ms[j]));
        if (worst > cfg.iou_thresh) {
            removed[i] = true;
            detail::log_removal(log, "nms", ms[i], "nms", worst);
        } else {
            accepted.push_back(i);
        }
    }
    return ms.subset(detail::kept_indices(removed));
}

// For each mask, smallest first, erode it and drop it if the eroded mask fits
// inside an overlapping higher-ranked survivor. An empty erosion fits anywhere.
// Logged metric: id of the containing mask.
inline MaskSet erosion_overlap_removal(const MaskSet& ms, const PostprocessConfig& cfg, AuditLog* log = nullptr) {
    std::vector<bool> removed(ms.size(), false);
    for (std::size_t i : detail::ascending_rank_order(ms)) {
        std::optional<Bitmap> eroded;
        for (std::size_t j = 0; j < ms.size(); ++j) {
            if (j == i || removed[j] || !detail::outranks(ms[j], ms[i])) continue;
            if (intersection_area(ms[i], ms[j]) == 0) continue;
            if (!eroded) eroded = erode(ms[i], cfg.erosion_elem);
            if (is_subset(*eroded, ms[j])) {
                removed[i] = true;
                detail::log_removal(log, "erosion", ms[i], "erosion", ms[j].source_id());
                break;
            }
        }
    }
    return ms.subset(detail::kept_indices(removed));
}

// Number of mask pixels within border_px of any image edge.
inline std::size_t border_pixel_count(const Mask& m, int border_px) {
    const Dims d = m.dims();
    std::size_t n = 0;
    const BBox& b = m.bbox();
    for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x)
            if (m.at(x, y) && (x < border_px || y < border_px || x >= d.width - border_px || y >= d.height - border_px))
                ++n;
    return n;
}

inline MaskSet remove_edge_masks(const MaskSet& ms, const PostprocessConfig& cfg, AuditLog* log = nullptr) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::size_t n = border_pixel_count(ms[i], cfg.border_px);
        if (n == 0) keep.push_back(i);
        else detail::log_removal(log, "edge", ms[i], "edge", static_cast<double>(n));
    }
    return ms.subset(keep);
}

inline MaskSet close_masks(const MaskSet& ms, const PostprocessConfig& cfg) {
    std::vector<Mask> out;
    out.reserve(ms.size());
    for (const Mask& m : ms) out.push_back(m.with_bitmap(close(m, cfg.closing_elem)));
    return MaskSet(ms.dims(), std::move(out));
}

// The whole chain. Writes removal rows and one summary row per step
// (filter, contained, nms, erosion, edge, closing) to `log` when given.
inline MaskSet postprocess_pipeline(const MaskSet& ms, const Image& stacked, const PostprocessConfig& cfg,
                                    AuditLog* log = nullptr) {
    cfg.validate();
    if (!ms.empty() && stacked.dims() != ms.dims())
        throw ProcessingError("postprocess", "stacked image is " + to_string(stacked.dims()) + ", masks are " +
                                                 to_string(ms.dims()));
    AuditLog local;
    AuditLog& audit = log ? *log : local;

    MaskSet cur = ms.reindexed();
    auto step = [&](const char* name, auto&& fn) {
        const std::size_t before = cur.size();
        cur = fn(cur);
        audit.summary(name, before - cur.size());
    };
    step("filter", [&](const MaskSet& s) { return filter_intensity(filter_area(s, cfg, &audit), stacked, cfg, &audit); });
    step("contained", [&](const MaskSet& s) { return remove_contained(s, &audit); });
    step("nms", [&](const MaskSet& s) { return nms(s, cfg, &audit); });
    step("erosion", [&](const MaskSet& s) { return erosion_overlap_removal(s, cfg, &audit); });
    step("edge", [&](const MaskSet& s) { return remove_edge_masks(s, cfg, &audit); });
    step("closing", [&](const MaskSet& s) { return close_masks(s, cfg); });
    return cur;
}

}  // namespace cellmorph
