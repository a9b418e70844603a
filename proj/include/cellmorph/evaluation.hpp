#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/mask.hpp"

namespace cellmorph {

struct AnnotationPoint {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const AnnotationPoint&, const AnnotationPoint&) = default;
    friend auto operator<=>(const AnnotationPoint&, const AnnotationPoint&) = default;
};

struct AnnotationSet {
    std::vector<AnnotationPoint> points;
    std::string image_id;
};

struct ErrorReport {
    std::size_t total_cells = 0;
    std::size_t matched = 0;
    std::size_t wrong_position = 0;
    std::size_t missed = 0;
    double error_rate = 0.0;
    // mask index -> matched annotation index (or -1)
    std::vector<long> mask_to_point;
};

// Greedy one-to-one matching of masks to annotated cell locations. Masks are
// visited in ascending centroid order (row, then column). A mask claims the
// unclaimed point inside it nearest its centroid; a mask with no unclaimed
// point inside is a wrong-position detection. Unclaimed points are missed
// cells.
inline ErrorReport evaluate(const MaskSet& ms, const AnnotationSet& ann) {
    if (ann.points.empty()) throw ProcessingError("evaluation", "annotation set is empty; error rate undefined");
    const Dims d = ms.dims();
    std::vector<std::pair<int, int>> pix(ann.points.size());
    for (std::size_t i = 0; i < ann.points.size(); ++i) {
        const auto& p = ann.points[i];
        const int px = static_cast<int>(std::floor(p.x)), py = static_cast<int>(std::floor(p.y));
        if (!ms.empty() && (px < 0 || py < 0 || px >= d.width || py >= d.height))
            throw ProcessingError("evaluation", "annotation " + std::to_string(i) + " at (" + std::to_string(p.x) +
                                                    ", " + std::to_string(p.y) + ") lies outside the " + to_string(d) +
                                                    " image");
        pix[i] = {px, py};
    }

    std::vector<Centroid> cents(ms.size());
    for (std::size_t k = 0; k < ms.size(); ++k) cents[k] = centroid(ms[k]);
    std::vector<std::size_t> order(ms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (cents[a].y != cents[b].y) return cents[a].y < cents[b].y;
        if (cents[a].x != cents[b].x) return cents[a].x < cents[b].x;
        return ms[a].bitmap() < ms[b].bitmap();
    });

    ErrorReport r;
    r.total_cells = ann.points.size();
    r.mask_to_point.assign(ms.size(), -1);
    std::vector<bool> claimed(ann.points.size(), false);
    for (std::size_t k : order) {
        long best = -1;
        double best_d = 0.0;
        for (std::size_t i = 0; i < ann.points.size(); ++i) {
            if (claimed[i] || !ms[k].contains_point(pix[i].first, pix[i].second)) continue;
            const double dx = ann.points[i].x - cents[k].x, dy = ann.points[i].y - cents[k].y;
            const double dist = dx * dx + dy * dy;
            const bool better = best < 0 || dist < best_d ||
                                (dist == best_d && ann.points[i] < ann.points[static_cast<std::size_t>(best)]);
            if (better) {
                best = static_cast<long>(i);
                best_d = dist;
            }
        }
        if (best < 0) {
            ++r.wrong_position;
        } else {
            claimed[static_cast<std::size_t>(best)] = true;
            r.mask_to_point[k] = best;
            ++r.matched;
        }
    }
    r.missed = r.total_cells - r.matched;
    r.error_rate = static_cast<double>(r.wrong_position + r.missed) / static_cast<double>(r.total_cells);
    return r;
}

inline std::string format_coord(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// CSV with header x_px,y_px. Duplicate points are rejected.
inline AnnotationSet load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("evaluation", "cannot open annotations: " + path.string());
    AnnotationSet ann;
    ann.image_id = path.stem().string();
    std::string line;
    if (!std::getline(in, line)) throw FormatError("evaluation", path.string() + ": empty file, expected header x_px,y_px");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x_px,y_px")
        throw FormatError("evaluation", path.string() + " line 1: expected header x_px,y_px, got '" + line + "'");
    std::set<AnnotationPoint> seen;
    for (int row = 2; std::getline(in, line); ++row) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        AnnotationPoint p;
        try {
            if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
                throw std::invalid_argument(line);
            std::size_t used = 0;
            const std::string xs = line.substr(0, comma), ys = line.substr(comma + 1);
            p.x = std::stod(xs, &used);
            if (used != xs.size()) throw std::invalid_argument(xs);
            p.y = std::stod(ys, &used);
            if (used != ys.size()) throw std::invalid_argument(ys);
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::invalid_argument(line);
        } catch (const std::exception&) {
            throw FormatError("evaluation", path.string() + " line " + std::to_string(row) + ": malformed row '" + line +
                                                "'");
        }
        if (!seen.insert(p).second)
            throw FormatError("evaluation", path.string() + " line " + std::to_string(row) + ": duplicate point (" +
                                                format_coord(p.x) + ", " + format_coord(p.y) + ")");
        ann.points.push_back(p);
    }
    return ann;
}

inline void write_annotations(const AnnotationSet& ann, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("evaluation", "cannot write annotations: " + path.string());
    out << "x_px,y_px\n";
    for (const auto& p : ann.points) out << format_coord(p.x) << ',' << format_coord(p.y) << '\n';
}

inline std::string format_percent(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", rate * 100.0);
    return buf;
}

inline void write_report_csv(const ErrorReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("evaluation", "cannot write report: " + path.string());
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", r.error_rate);
    out << "total_cells,matched,wrong_position,missed,error_rate\n"
        << r.total_cells << ',' << r.matched << ',' << r.wrong_position << ',' << r.missed << ',' << buf << '\n';
}

inline std::string summary(const ErrorReport& r) {
    std::ostringstream s;
    s << "cells: " << r.total_cells << "  matched: " << r.matched << "  wrong position: " << r.wrong_position
      << "  missed: " << r.missed << "  error rate: " << format_percent(r.error_rate);
    return s.str();
}

}  // namespace cellmorph
