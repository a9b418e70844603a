#pragma once

// Synthetic fields of rod-shaped cells with known ground truth. Each cell is a
// spherocylinder (a segment of length L - W swept by a disc of diameter W)
// placed by rejection sampling; frames carry Poisson shot noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/evaluation.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/imageio.hpp"
#include "cellmorph/mask.hpp"
#include "cellmorph/maskio.hpp"
#include "cellmorph/morphometry.hpp"
#include "cellmorph/random.hpp"

namespace cellmorph {

struct SynthParams {
    int image_size_px = kDefaultFieldPx;
    double pixel_pitch_um = kDefaultPixelPitchUm;
    int n_cells = 100;
    double length_um_min = 2.0;
    double length_um_max = 4.0;
    double width_um_min = 0.7;
    double width_um_max = 1.0;
    double intensity_cell = 4.0;  // added to the background inside cells
    double intensity_bg = 1.0;
    int frames = kDefaultFramesPerField;
    // Photon counts per intensity unit; infinity gives noiseless frames.
    double noise_scale = 10.0;
    double min_gap_px = 2.0;
    double edge_margin_px = 4.0;
    int max_attempts_per_cell = 10000;
    std::uint64_t rng_seed = 1;

    void validate() const {
        auto fail = [](const std::string& m) { throw ProcessingError("synthgen", m); };
        if (image_size_px < 1) fail("image_size_px must be positive");
        if (!(pixel_pitch_um > 0.0)) fail("pixel_pitch_um must be positive");
        if (n_cells < 0) fail("n_cells must be >= 0");
        if (!(width_um_min > 0.0 && width_um_min <= width_um_max)) fail("need 0 < width_um_min <= width_um_max");
        if (!(length_um_min <= length_um_max)) fail("need length_um_min <= length_um_max");
        if (!(length_um_min >= width_um_max)) fail("length range must not fall below the width range");
        if (!(intensity_cell > 0.0) || !(intensity_bg >= 0.0)) fail("intensities must be non-negative, cell > 0");
        if (frames < 1) fail("frames must be >= 1");
        if (!(noise_scale > 0.0)) fail("noise_scale must be positive");
        if (!(min_gap_px >= 0.0)) fail("min_gap_px must be >= 0");
        if (!(edge_margin_px >= 0.0)) fail("edge_margin_px must be >= 0");
        if (max_attempts_per_cell < 1) fail("max_attempts_per_cell must be >= 1");
    }

    friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

// Placed cell in pixel units: centre (cx, cy) in continuous image coordinates
// (pixel x spans [x, x + 1)), axis angle theta, segment half-length and radius.
struct Rod {
    double cx = 0.0, cy = 0.0;
    double theta = 0.0;
    double length_um = 0.0, width_um = 0.0;
    double half_seg_px = 0.0, radius_px = 0.0;

    std::array<double, 4> segment() const {
        const double dx = std::cos(theta) * half_seg_px, dy = std::sin(theta) * half_seg_px;
        return {cx - dx, cy - dy, cx + dx, cy + dy};
    }
};

struct SynthField {
    RasterStack stack;
    Image clean;
    MaskSet truth_masks;
    AnnotationSet annotations;
    std::vector<CellFeatures> truth_features;
    std::vector<Rod> rods;
};

namespace detail {

inline double point_segment_distance(double px, double py, const std::array<double, 4>& s) {
    const double vx = s[2] - s[0], vy = s[3] - s[1];
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - s[0]) * vx + (py - s[1]) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (s[0] + t * vx), dy = py - (s[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

inline double orient(double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

inline double segment_distance(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    const double d1 = orient(a[0], a[1], a[2], a[3], b[0], b[1]), d2 = orient(a[0], a[1], a[2], a[3], b[2], b[3]);
    const double d3 = orient(b[0], b[1], b[2], b[3], a[0], a[1]), d4 = orient(b[0], b[1], b[2], b[3], a[2], a[3]);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return 0.0;
    return std::min({point_segment_distance(a[0], a[1], b), point_segment_distance(a[2], a[3], b),
                     point_segment_distance(b[0], b[1], a), point_segment_distance(b[2], b[3], a)});
}

// Pixels whose centres lie within the rod.
inline Bitmap rasterize(const Rod& r, Dims d) {
    Bitmap bits(d.size(), 0);
    const auto s = r.segment();
    const double ext = r.half_seg_px + r.radius_px + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(r.cx - ext)));
    const int x1 = std::min(d.width - 1, static_cast<int>(std::ceil(r.cx + ext)));
    const int y0 = std::max(0, static_cast<int>(std::floor(r.cy - ext)));
    const int y1 = std::min(d.height - 1, static_cast<int>(std::ceil(r.cy + ext)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (point_segment_distance(x + 0.5, y + 0.5, s) <= r.radius_px)
                bits[static_cast<std::size_t>(y) * d.width + x] = 1;
    return bits;
}

}  // namespace detail

// Rejection sampling: every attempt draws L, W, angle and centre afresh. A rod
// is accepted when it lies at least edge_margin_px inside the field and its
// axis keeps a distance of at least r1 + r2 + min_gap_px + 1 from every placed
// rod, so that pixel centres of different cells are more than min_gap_px + 1
// apart.
inline std::vector<Rod> place_rods(const SynthParams& p, Rng& rng) {
    std::vector<Rod> rods;
    const double size = p.image_size_px;
    for (int c = 0; c < p.n_cells; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < p.max_attempts_per_cell && !placed; ++attempt) {
            Rod r;
            r.length_um = rng.uniform(p.length_um_min, p.length_um_max);
            r.width_um = rng.uniform(p.width_um_min, p.width_um_max);
            r.theta = rng.uniform(0.0, std::numbers::pi);
            r.radius_px = r.width_um / p.pixel_pitch_um / 2.0;
            r.half_seg_px = (r.length_um - r.width_um) / p.pixel_pitch_um / 2.0;
            const double ex = r.half_seg_px * std::abs(std::cos(r.theta)) + r.radius_px + p.edge_margin_px;
            const double ey = r.half_seg_px * std::abs(std::sin(r.theta)) + r.radius_px + p.edge_margin_px;
            const double ux = rng.uniform(), uy = rng.uniform();
            if (2.0 * ex >= size || 2.0 * ey >= size) continue;
            r.cx = ex + ux * (size - 2.0 * ex);
            r.cy = ey + uy * (size - 2.0 * ey);
            const auto seg = r.segment();
            placed = std::all_of(rods.begin(), rods.end(), [&](const Rod& o) {
                return detail::segment_distance(seg, o.segment()) >= r.radius_px + o.radius_px + p.min_gap_px + 1.0;
            });
            if (placed) rods.push_back(r);
        }
        if (!placed)
            throw ProcessingError("synthgen", "field too crowded: placed " + std::to_string(rods.size()) + " of " +
                                                  std::to_string(p.n_cells) + " cells after " +
                                                  std::to_string(p.max_attempts_per_cell) + " attempts");
    }
    return rods;
}

inline SynthField generate_field(const SynthParams& p) {
    p.validate();
    Rng rng(p.rng_seed);
    const int n = p.image_size_px;
    const Dims d{n, n};

    std::vector<Rod> rods = place_rods(p, rng);
    Image clean(n, n, p.intensity_bg, p.pixel_pitch_um);
    std::vector<Mask> masks;
    std::vector<CellFeatures> truth;
    AnnotationSet ann;
    ann.image_id = "synth-" + std::to_string(p.rng_seed);
    for (const Rod& r : rods) {
        Mask m(static_cast<int>(masks.size()), d, detail::rasterize(r, d));
        for (std::size_t i = 0; i < d.size(); ++i)
            if (m.bitmap()[i]) clean[i] = p.intensity_bg + p.intensity_cell;
        CellFeatures f;
        f.mask_id = m.id();
        f.mean_intensity = p.intensity_bg + p.intensity_cell;
        f.length_um = r.length_um;
        f.width_um = r.width_um;
        f.volume_fl = volume(r.length_um, r.width_um);
        f.centroid_px = {r.cx - 0.5, r.cy - 0.5};
        double a = r.theta * 180.0 / std::numbers::pi;
        if (a >= 90.0) a -= 180.0;
        f.angle_deg = a;
        truth.push_back(f);
        ann.points.push_back({r.cx, r.cy});
        masks.push_back(std::move(m));
    }

    std::vector<Image> frames;
    frames.reserve(static_cast<std::size_t>(p.frames));
    const bool noiseless = std::isinf(p.noise_scale);
    for (int f = 0; f < p.frames; ++f) {
        if (noiseless) {
            frames.push_back(clean);
            continue;
        }
        Image frame(n, n, 0.0, p.pixel_pitch_um);
        for (std::size_t i = 0; i < d.size(); ++i)
            frame[i] = static_cast<double>(rng.poisson(p.noise_scale * clean[i])) / p.noise_scale;
        frames.push_back(std::move(frame));
    }

    return SynthField{RasterStack(std::move(frames), p.pixel_pitch_um), std::move(clean),
                      MaskSet(d, std::move(masks)), std::move(ann), std::move(truth), std::move(rods)};
}

// frames.tiff, clean.tiff, masks.json, annotations.csv, truth.csv
inline void write_field(const SynthField& field, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    TiffWriteOptions opt;
    opt.sample = SampleType::Float64;
    write_stack(field.stack.frames(), dir / "frames.tiff", opt);
    write_image(field.clean, dir / "clean.tiff", opt);
    save_masks(field.truth_masks, dir / "masks.json");
    write_annotations(field.annotations, dir / "annotations.csv");
    std::vector<FeatureRow> rows;
    for (const auto& f : field.truth_features) rows.push_back({f.mask_id, f, {}});
    write_features_csv(rows, dir / "truth.csv");
}

}  // namespace cellmorph
