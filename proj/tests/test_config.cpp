#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"

using namespace cellmorph;

namespace {

std::string error_of(const auto& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, Defaults) {
    const PipelineConfig c;
    EXPECT_DOUBLE_EQ(c.pixel_pitch_um, 0.078125);
    EXPECT_EQ(c.proposer, ProposerKind::Baseline);
    EXPECT_EQ(c.synth.frames, 7);
    EXPECT_EQ(c.jobs, 1);
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(parse_config(""), c);
}

TEST(Config, DefaultsRoundTrip) {
    const PipelineConfig c;
    const std::string ini = to_ini(c);
    EXPECT_EQ(parse_config(ini), c);
    EXPECT_EQ(to_ini(parse_config(ini)), ini);
    EXPECT_NE(ini.find("[denoise]\n"), std::string::npos);
    EXPECT_NE(ini.find("noise_scale = 10\n"), std::string::npos);
}

TEST(Config, EditedConfigRoundTrips) {
    PipelineConfig c;
    c.denoise.sigma = 0.1 + 0.2;
    c.postprocess.min_area_px = 77;
    c.postprocess.erosion_elem = StructuringElement{ElementShape::Square, 2};
    c.proposer = ProposerKind::External;
    c.segmenter_cmd = "seg --in {input} --out {output}";
    c.synth.noise_scale = std::numeric_limits<double>::infinity();
    c.synth.rng_seed = 18446744073709551615ull;
    const std::string ini = to_ini(c);
    const PipelineConfig back = parse_config(ini);
    EXPECT_EQ(back, c);
    EXPECT_EQ(back.denoise.sigma, 0.1 + 0.2);
    EXPECT_EQ(to_ini(back), ini);
}

TEST(Config, FileOverridesDefaultsKeyByKey) {
    const PipelineConfig c = parse_config("[denoise]\nsigma = 0.05\n\n[postprocess]\niou_thresh = 0.5\n");
    PipelineConfig expected;
    expected.denoise.sigma = 0.05;
    expected.postprocess.iou_thresh = 0.5;
    EXPECT_EQ(c, expected);
}

TEST(Config, LayersApplyInOrder) {
    const auto dir = oracle::temp_dir("config-layers");
    std::ofstream(dir / "c.ini") << "[denoise]\nsigma = 0.05\nblock = 8\n[postprocess]\nborder_px = 3\n";
    PipelineConfig c;
    apply_config_file(c, dir / "c.ini");
    set_config_value(c, "postprocess.border_px", "9");
    EXPECT_DOUBLE_EQ(c.denoise.sigma, 0.05);
    EXPECT_EQ(c.postprocess.border_px, 9);
    EXPECT_EQ(c.postprocess.min_area_px, PipelineConfig{}.postprocess.min_area_px);
    EXPECT_EQ(get_config_value(c, "postprocess.border_px"), "9");
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_NE(error_of([] { parse_config("[denoise]\nsigmaa = 1\n"); }).find("denoise.sigmaa"), std::string::npos);
    EXPECT_THROW(parse_config("[nosuch]\nsigma = 1\n"), FormatError);
    EXPECT_THROW(set_config_value(*std::make_unique<PipelineConfig>(), "sigma", "1"), FormatError);
}

TEST(Config, BadValuesRejected) {
    EXPECT_NE(error_of([] { parse_config("[denoise]\nsigma = abc\n"); }).find("denoise.sigma"), std::string::npos);
    EXPECT_THROW(parse_config("[denoise]\nblock = 8.5\n"), FormatError);
    EXPECT_THROW(parse_config("[denoise]\nsigma = nan\n"), FormatError);
    EXPECT_THROW(parse_config("[proposals]\nsource = magic\n"), FormatError);
    EXPECT_THROW(parse_config("[postprocess]\nerosion_elem = hexagon:2\n"), Error);
}

TEST(Config, KeyOutsideSectionRejected) {
    EXPECT_NE(error_of([] { parse_config("sigma = 1\n[denoise]\n"); }).find("outside"), std::string::npos);
}

TEST(Config, MalformedLineNamesLine) {
    EXPECT_NE(error_of([] { parse_config("[denoise]\nsigma = 1\n[broken\n"); }).find("line 3"), std::string::npos);
}

TEST(Config, ValidationOfCombinations) {
    PipelineConfig c;
    c.proposer = ProposerKind::Masks;
    EXPECT_THROW(c.validate(), FormatError);
    c = {};
    c.norm_lo_pct = 99.9;
    c.norm_hi_pct = 1.0;
    EXPECT_THROW(c.validate(), FormatError);
    c = {};
    c.jobs = 0;
    EXPECT_THROW(c.validate(), FormatError);
}

TEST(Config, MissingFile) {
    PipelineConfig c;
    EXPECT_THROW(apply_config_file(c, "/nonexistent/c.ini"), InputError);
}

TEST(Hash, KnownDigest) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
