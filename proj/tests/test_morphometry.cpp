#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"

using namespace cellmorph;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Pixel centres inside a w x h rectangle centred at (cx, cy), long side at
// `angle_deg` from the x axis (y down).
Bitmap rotated_rect(Dims d, double cx, double cy, double len, double wid, double angle_deg) {
    Bitmap b(d.size(), 0);
    const double c = std::cos(angle_deg * kDeg), s = std::sin(angle_deg * kDeg);
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x) {
            const double px = x + 0.5 - cx, py = y + 0.5 - cy;
            const double u = px * c + py * s, v = -px * s + py * c;
            if (std::abs(u) <= len / 2 && std::abs(v) <= wid / 2) b[static_cast<std::size_t>(y) * d.width + x] = 1;
        }
    return b;
}

Bitmap spherocylinder(Dims d, double cx, double cy, double half, double radius, double angle_deg) {
    const double c = std::cos(angle_deg * kDeg), s = std::sin(angle_deg * kDeg);
    const std::array<double, 4> seg{cx - half * c, cy - half * s, cx + half * c, cy + half * s};
    Bitmap b(d.size(), 0);
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x)
            if (detail::point_segment_distance(x + 0.5, y + 0.5, seg) <= radius)
                b[static_cast<std::size_t>(y) * d.width + x] = 1;
    return b;
}

Bitmap rotate90(const Bitmap& b, Dims d) {
    const Dims r{d.height, d.width};
    Bitmap out(b.size(), 0);
    for (int y = 0; y < d.height; ++y)
        for (int x = 0; x < d.width; ++x)
            out[static_cast<std::size_t>(x) * r.width + (d.height - 1 - y)] = b[static_cast<std::size_t>(y) * d.width + x];
    return out;
}

// Area of the rectangle through the outermost pixel centres.
double centre_area(const RotatedBox& b) { return (b.length() - 1.0) * (b.width() - 1.0); }

}  // namespace

TEST(RotatedBox, AxisAlignedRectangle) {
    const Dims d{64, 32};
    const Mask m(0, d, oracle::rect(d, 10, 5, 49, 14));
    const RotatedBox box = fit_rotated_box(m);
    EXPECT_DOUBLE_EQ(box.length(), 40.0);
    EXPECT_DOUBLE_EQ(box.width(), 10.0);
    EXPECT_DOUBLE_EQ(box.angle_deg(), 0.0);
    EXPECT_DOUBLE_EQ(avg_width(m, box), 10.0);
    const auto c = box.corners();
    double minx = 1e9, maxx = -1e9;
    for (const auto& p : c) minx = std::min(minx, p[0]), maxx = std::max(maxx, p[0]);
    EXPECT_DOUBLE_EQ(minx, 10.0);
    EXPECT_DOUBLE_EQ(maxx, 50.0);
}

TEST(RotatedBox, VerticalRectangleIsPlusOrMinusNinety) {
    const Dims d{32, 64};
    const RotatedBox box = fit_rotated_box(Mask(0, d, oracle::rect(d, 5, 10, 14, 49)));
    EXPECT_DOUBLE_EQ(box.length(), 40.0);
    EXPECT_DOUBLE_EQ(box.width(), 10.0);
    EXPECT_DOUBLE_EQ(std::abs(box.angle_deg()), 90.0);
}

TEST(RotatedBox, RotatedThirtyDegrees) {
    const Dims d{80, 80};
    const Mask m(0, d, rotated_rect(d, 40, 40, 40, 10, 30));
    const RotatedBox box = fit_rotated_box(m);
    EXPECT_NEAR(box.length(), 40.0, 1.0);
    EXPECT_NEAR(box.angle_deg(), 30.0, 2.0);
    const Mask neg(0, d, rotated_rect(d, 40, 40, 40, 10, -30));
    EXPECT_NEAR(fit_rotated_box(neg).angle_deg(), -30.0, 2.0);
}

TEST(RotatedBox, SinglePixel) {
    const Dims d{8, 8};
    const Mask m(0, d, oracle::rect(d, 3, 4, 3, 4));
    const RotatedBox box = fit_rotated_box(m);
    EXPECT_DOUBLE_EQ(box.length(), 1.0);
    EXPECT_DOUBLE_EQ(box.width(), 1.0);
    EXPECT_DOUBLE_EQ(avg_width(m, box), 1.0);
}

TEST(RotatedBox, CalipersMatchAllEdgesOracle) {
    Rng rng(1);
    const Dims d{48, 48};
    for (int t = 0; t < 300; ++t) {
        const Mask m(0, d, oracle::random_blob(d, rng));
        const auto hull = convex_hull(pixel_hull_points(m));
        const RotatedBox box = min_area_rect(hull);
        EXPECT_NEAR(centre_area(box), oracle::min_rect_area(hull), 1e-9 * (1.0 + centre_area(box)));
        EXPECT_GE(box.length(), box.width());
        for (const RotatedBox& tied : min_area_rects(hull)) {
            EXPECT_NEAR(tied.length(), box.length(), 1e-9);
            EXPECT_NEAR(tied.width(), box.width(), 1e-9);
        }
    }
}

TEST(RotatedBox, ExactUnderQuarterTurns) {
    Rng rng(2);
    const Dims d{40, 30};
    for (int t = 0; t < 200; ++t) {
        const Bitmap b = oracle::random_blob(d, rng);
        const Mask m(0, d, b);
        const Mask r(0, Dims{d.height, d.width}, rotate90(b, d));
        const RotatedBox bm = fit_rotated_box(m), br = fit_rotated_box(r);
        EXPECT_EQ(bm.length(), br.length());
        EXPECT_EQ(bm.width(), br.width());
        double wm = 0.0;
        try {
            wm = avg_width(m);
        } catch (const ProcessingError&) {
            EXPECT_THROW(avg_width(r), ProcessingError);
            continue;
        }
        EXPECT_EQ(wm, avg_width(r));
        const CellFeatures fm = measure_cell(m, Image(40, 30, 1.0), 0.078125);
        const CellFeatures fr = measure_cell(r, Image(30, 40, 1.0), 0.078125);
        EXPECT_EQ(fm.length_um, fr.length_um);
        EXPECT_EQ(fm.width_um, fr.width_um);
        EXPECT_EQ(fm.volume_fl, fr.volume_fl);
    }
}

TEST(RotatedBox, BoxAreaMonotoneUnderSuperset) {
    Rng rng(3);
    const Dims d{48, 48};
    for (int t = 0; t < 200; ++t) {
        const Bitmap a = oracle::random_blob(d, rng);
        Bitmap b = a;
        const Bitmap extra = oracle::random_blob(d, rng);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] |= extra[i];
        EXPECT_LE(centre_area(fit_rotated_box(Mask(0, d, a))), centre_area(fit_rotated_box(Mask(1, d, b))) + 1e-9);
    }
}

TEST(AvgWidth, NeverExceedsBoxShortSide) {
    Rng rng(4);
    const Dims d{48, 48};
    for (int t = 0; t < 300; ++t) {
        const Mask m(0, d, oracle::random_blob(d, rng));
        const RotatedBox box = fit_rotated_box(m);
        try {
            EXPECT_LE(avg_width(m, box), box.width() + 1e-9);
            EXPECT_LE(avg_width(m), box.width() + 1e-9);
        } catch (const ProcessingError&) {
        }
    }
}

TEST(AvgWidth, SpherocylinderAtSeveralAngles) {
    const Dims d{96, 96};
    for (double a : {0.0, 10.0, 22.5, 30.0, 60.0, 77.0, 90.0}) {
        const Mask m(0, d, spherocylinder(d, 48.5, 48.5, 15.0, 5.5, a));
        EXPECT_NEAR(avg_width(m, fit_rotated_box(m)), 11.0, 0.5) << "angle " << a;
    }
}

TEST(AvgWidth, SpherocylinderUnbiasedOverSubpixelPlacement) {
    Rng rng(8);
    const Dims d{96, 96};
    for (double a : {0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 135.0}) {
        double sum = 0.0;
        for (int t = 0; t < 100; ++t) {
            const Mask m(0, d, spherocylinder(d, 48 + rng.uniform(), 48 + rng.uniform(), 15.0, 5.5, a));
            sum += avg_width(m);
        }
        EXPECT_NEAR(sum / 100.0, 11.0, 0.2) << "angle " << a;
    }
}

TEST(AvgWidth, HourglassUsesColumnExtents) {
    const Dims d{50, 20};
    Bitmap b(d.size(), 0);
    for (int x = 0; x < 40; ++x) {
        const int h = std::abs(x - 19.5) > 8 ? 5 : 1;
        for (int y = 8 - h; y <= 8 + h; ++y) b[static_cast<std::size_t>(y) * d.width + x + 5] = 1;
    }
    const Mask m(0, d, b);
    const RotatedBox box = fit_rotated_box(m);
    EXPECT_DOUBLE_EQ(box.length(), 40.0);
    EXPECT_DOUBLE_EQ(box.width(), 11.0);
    // middle half spans columns 10..29: four at 11 px, sixteen at 3 px
    EXPECT_DOUBLE_EQ(avg_width(m, box), (4 * 11.0 + 16 * 3.0) / 20.0);
}

TEST(AvgWidth, EmptyMiddleIsAnError) {
    const Dims d{20, 5};
    Bitmap b(d.size(), 0);
    b[2 * d.width + 0] = 1;
    b[2 * d.width + 10] = 1;
    const Mask m(3, d, b);
    EXPECT_THROW(avg_width(m, fit_rotated_box(m)), ProcessingError);
}

TEST(Volume, ReferenceCellExample) {
    EXPECT_NEAR(volume(3.215, 0.865), 1.720, 0.001);
}

TEST(Volume, SphereAndHandValue) {
    EXPECT_NEAR(volume(1.0, 1.0), 4.0 / 3.0 * std::numbers::pi * 0.125, 1e-12);
    EXPECT_NEAR(volume(1.0, 1.0), 0.5236, 1e-4);
    EXPECT_NEAR(volume(2.0, 1.0), 1.3090, 1e-4);
}

TEST(Volume, InvalidModelRejected) {
    EXPECT_THROW(volume(1.0, 2.0), ProcessingError);
    EXPECT_THROW(volume(1.0, 0.0), ProcessingError);
}

TEST(Volume, MonotoneInBothArguments) {
    Rng rng(5);
    for (int t = 0; t < 1000; ++t) {
        const double w = rng.uniform(0.1, 2), l = w + rng.uniform(0, 4);
        const double dl = rng.uniform(0, 1), dw = rng.uniform(0, l - w);
        EXPECT_LE(volume(l, w), volume(l + dl, w));
        EXPECT_LE(volume(l, w), volume(l, w + dw) + 1e-12);
    }
}

TEST(MeanIntensity, Examples) {
    const Dims d{6, 6};
    EXPECT_DOUBLE_EQ(mean_intensity(Mask(0, d, oracle::rect(d, 1, 1, 4, 3)), Image(6, 6, 2.5)), 2.5);
    Image img(6, 6, 0.0);
    img(2, 2) = 1.0;
    img(3, 2) = 3.0;
    EXPECT_DOUBLE_EQ(mean_intensity(Mask(0, d, oracle::rect(d, 2, 2, 3, 2)), img), 2.0);
}

TEST(MeanIntensity, MatchesDirectSum) {
    Rng rng(6);
    const Dims d{40, 40};
    Image img(d.width, d.height);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0, 1000);
    for (int t = 0; t < 100; ++t) {
        const Mask m(0, d, oracle::random_blob(d, rng));
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (m.bitmap()[i]) s += img[i], ++n;
        const double expected = s / static_cast<double>(n);
        EXPECT_NEAR(mean_intensity(m, img), expected, 1e-12 * expected);
    }
}

TEST(MeanIntensity, Errors) {
    const Dims d{4, 4};
    EXPECT_THROW(mean_intensity(Mask(0, d, Bitmap(16, 0)), Image(4, 4)), ProcessingError);
    EXPECT_THROW(mean_intensity(Mask(0, d, Bitmap(16, 1)), Image(5, 4)), ProcessingError);
}

TEST(Features, EmptySetGivesNoRows) {
    EXPECT_TRUE(extract_features(MaskSet(Dims{8, 8}), Image(8, 8), 0.078125).empty());
}

TEST(Features, UnmeasurableMaskGetsErrorRow) {
    const Dims d{30, 20};
    Bitmap sparse(d.size(), 0);
    sparse[5 * d.width + 2] = 1;
    sparse[5 * d.width + 14] = 1;
    const MaskSet ms(d, {Mask(0, d, oracle::rect(d, 2, 10, 21, 14)), Mask(1, d, sparse)});
    const auto rows = extract_features(ms, Image(30, 20, 1.0), 0.1);
    ASSERT_EQ(rows.size(), 2u);
    ASSERT_TRUE(rows[0].features.has_value());
    EXPECT_NEAR(rows[0].features->length_um, 2.0, 1e-12);
    EXPECT_NEAR(rows[0].features->width_um, 0.5, 1e-12);
    EXPECT_FALSE(rows[1].features.has_value());
    EXPECT_NE(rows[1].error.find("width unmeasurable"), std::string::npos);
}

TEST(Features, ScaleCovariance) {
    Rng rng(7);
    const Dims d{64, 64};
    for (int t = 0; t < 50; ++t) {
        const Mask m(0, d, spherocylinder(d, rng.uniform(25, 39), rng.uniform(25, 39), rng.uniform(5, 15),
                                          rng.uniform(2, 5), rng.uniform(-90, 90)));
        const Image img(64, 64, 1.0);
        const CellFeatures a = measure_cell(m, img, 0.078125), b = measure_cell(m, img, 0.15625);
        EXPECT_DOUBLE_EQ(b.length_um, 2 * a.length_um);
        EXPECT_DOUBLE_EQ(b.width_um, 2 * a.width_um);
        EXPECT_NEAR(b.volume_fl, 8 * a.volume_fl, 1e-12 * b.volume_fl);
        EXPECT_EQ(a.angle_deg, b.angle_deg);
    }
}

TEST(FeaturesCsv, Format) {
    const auto dir = oracle::temp_dir("features");
    const Dims d{64, 32};
    Bitmap sparse(d.size(), 0);
    sparse[2] = sparse[30] = 1;
    const MaskSet ms(d, {Mask(0, d, oracle::rect(d, 10, 5, 49, 14)), Mask(1, d, sparse)});
    write_features_csv(extract_features(ms, Image(64, 32, 2.0), 0.078125), dir / "f.csv");
    EXPECT_EQ(oracle::slurp(dir / "f.csv"),
              "mask_id,centroid_x_px,centroid_y_px,angle_deg,mean_intensity_au,length_um,width_um,volume_fl\n"
              "0,29.500000,9.500000,0.000000,2.000000,3.125000,0.781250,1.373192\n"
              "1,nan,nan,nan,nan,nan,nan,nan\n");
}
