#pragma once

// End-to-end stages: stack -> normalize -> BM3D -> proposals -> postprocess ->
// features, plus run manifests. Manifests carry no timestamps so identical
// runs produce identical files.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellmorph/config.hpp"
#include "cellmorph/denoise.hpp"
#include "cellmorph/error.hpp"
#include "cellmorph/evaluation.hpp"
#include "cellmorph/hash.hpp"
#include "cellmorph/imageio.hpp"
#include "cellmorph/maskio.hpp"
#include "cellmorph/morphometry.hpp"
#include "cellmorph/postprocess.hpp"
#include "cellmorph/proposals.hpp"
#include "cellmorph/stacking.hpp"
#include "cellmorph/synthgen.hpp"

namespace cellmorph {

inline constexpr const char* kVersion = "1.0.0";

class Manifest {
public:
    Manifest(const std::string& command, const PipelineConfig& cfg) {
        const std::string ini = to_ini(cfg);
        doc_["tool"] = "cellmorph";
        doc_["version"] = kVersion;
        doc_["command"] = command;
        doc_["config"] = ini;
        doc_["config_sha256"] = sha256_hex(ini);
        doc_["seed"] = cfg.synth.rng_seed;
        doc_["inputs"] = nlohmann::json::array();
        doc_["outputs"] = nlohmann::json::array();
    }

    void add_input(const std::string& role, const std::filesystem::path& p) {
        doc_["inputs"].push_back({{"role", role}, {"path", p.string()}, {"sha256", sha256_path(p)}});
    }
    void add_output(const std::filesystem::path& p) {
        doc_["outputs"].push_back({{"path", p.filename().string()}, {"sha256", sha256_path(p)}});
    }
    void set(const std::string& key, nlohmann::json value) { doc_[key] = std::move(value); }
    const nlohmann::json& json() const { return doc_; }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw InputError("cli", "cannot write manifest: " + path.string());
        out << doc_.dump(2) << '\n';
    }

private:
    nlohmann::json doc_;
};

struct DenoiseResult {
    Image stacked;
    Image normalized;
    Image denoised;
};

inline DenoiseResult denoise_stack(const RasterStack& stack, const PipelineConfig& cfg) {
    DenoiseResult r{stack_average(stack), Image(), Image()};
    r.normalized = normalize(r.stacked, cfg.norm_lo_pct, cfg.norm_hi_pct);
    r.denoised = bm3d(r.normalized, cfg.denoise);
    return r;
}

// Mask proposals on the denoised image. The external segmenter reads
// `image_path`, which must already hold the denoised image.
inline MaskSet propose(const Image& denoised, const PipelineConfig& cfg,
                       const std::filesystem::path& image_path = {}) {
    switch (cfg.proposer) {
        case ProposerKind::Masks: return load_masks(cfg.masks_path, denoised.dims());
        case ProposerKind::External:
            if (image_path.empty()) throw ProcessingError("segment", "external segmenter needs an image on disk");
            return run_external_segmenter(cfg.segmenter_cmd, image_path, denoised.dims());
        default: return propose_masks_baseline(denoised, cfg.baseline);
    }
}

struct PipelineResult {
    DenoiseResult images;
    MaskSet proposals;
    MaskSet masks;
    AuditLog audit;
    std::vector<FeatureRow> features;
};

// In-memory pipeline. When `denoised_path` is given the denoised image is
// written there before proposals run.
inline PipelineResult run_pipeline(const RasterStack& stack, const PipelineConfig& cfg,
                                   const std::filesystem::path& denoised_path = {}) {
    cfg.validate();
    PipelineResult r;
    r.images = denoise_stack(stack, cfg);
    if (!denoised_path.empty()) write_image(r.images.denoised, denoised_path);
    r.proposals = propose(r.images.denoised, cfg, denoised_path);
    r.masks = postprocess_pipeline(r.proposals, r.images.stacked, cfg.postprocess, &r.audit);
    r.features = extract_features(r.masks, r.images.stacked, cfg.pixel_pitch_um);
    return r;
}

// Writes denoised.tiff, proposals.json, masks.json, audit.csv, features.csv,
// overlay.png and manifest.json under out_dir.
inline PipelineResult run_pipeline_files(const std::filesystem::path& input, const std::filesystem::path& out_dir,
                                         const PipelineConfig& cfg) {
    cfg.validate();
    const RasterStack stack = read_stack(input, cfg.pixel_pitch_um);
    std::filesystem::create_directories(out_dir);
    Manifest manifest("pipeline", cfg);
    manifest.add_input("stack", input);
    if (cfg.proposer == ProposerKind::Masks) manifest.add_input("masks", cfg.masks_path);

    PipelineResult r = run_pipeline(stack, cfg, out_dir / "denoised.tiff");
    save_masks(r.proposals, out_dir / "proposals.json");
    save_masks(r.masks, out_dir / "masks.json");
    r.audit.write_csv(out_dir / "audit.csv");
    write_features_csv(r.features, out_dir / "features.csv");
    write_overlay(r.images.denoised, r.masks, out_dir / "overlay.png");
    for (const char* f : {"denoised.tiff", "proposals.json", "masks.json", "audit.csv", "features.csv", "overlay.png"})
        manifest.add_output(out_dir / f);
    manifest.set("frames", stack.frame_count());
    manifest.set("cells", r.masks.size());
    manifest.write(out_dir / "manifest.json");
    return r;
}

// Image dimensions recorded in a mask source, for commands that have no image.
inline Dims probe_mask_dims(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("evaluation", "mask source not found: " + path.string());
    if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> pngs;
        for (const auto& e : std::filesystem::directory_iterator(path))
            if (detail::is_numbered_png(e.path())) pngs.push_back(e.path());
        if (pngs.empty()) throw FormatError("evaluation", path.string() + ": no NNN.png masks found");
        std::sort(pngs.begin(), pngs.end());
        const PngPixels px = read_png(pngs.front());
        return {px.width, px.height};
    }
    if (path.extension() == ".json") {
        std::ifstream in(path);
        try {
            const auto doc = nlohmann::json::parse(in);
            if (doc.contains("size")) {
                const auto size = doc.at("size").get<std::vector<int>>();
                if (size.size() == 2) return {size[1], size[0]};
            }
            return {doc.at("width").get<int>(), doc.at("height").get<int>()};
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("evaluation", path.string() + ": " + e.what());
        }
    }
    const PngPixels px = read_png(path);
    return {px.width, px.height};
}

}  // namespace cellmorph
