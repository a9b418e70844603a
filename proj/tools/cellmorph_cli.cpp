#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cellmorph/cellmorph.hpp"

namespace fs = std::filesystem;
using namespace cellmorph;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Overrides {
    std::string config;
    std::optional<double> sigma, iou;
    std::optional<std::size_t> min_area, max_area;
    std::optional<int> border, grid, jobs;
    std::optional<std::uint64_t> seed;
    std::string masks, segmenter_cmd;
    std::string out = "out";
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "Config file ([section] key = value)");
    cmd->add_option("--sigma", o.sigma, "BM3D noise sigma on the normalized scale");
    cmd->add_option("--iou", o.iou, "NMS IoU threshold");
    cmd->add_option("--min-area", o.min_area, "Minimum mask area (px)");
    cmd->add_option("--max-area", o.max_area, "Maximum mask area (px)");
    cmd->add_option("--border", o.border, "Edge band width (px)");
    cmd->add_option("--grid", o.grid, "Prompt grid size of the baseline proposer");
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--jobs", o.jobs, "Input files processed concurrently");
    cmd->add_option("--out", o.out, "Output directory");
}

void require_exists(const std::string& path) {
    if (!path.empty() && !fs::exists(path)) throw InputError("cli", "input not found: " + path);
}

PipelineConfig build_config(const Overrides& o) {
    PipelineConfig cfg;
    if (!o.config.empty()) {
        require_exists(o.config);
        apply_config_file(cfg, o.config);
    }
    if (o.sigma) cfg.denoise.sigma = *o.sigma;
    if (o.iou) cfg.postprocess.iou_thresh = *o.iou;
    if (o.min_area) cfg.postprocess.min_area_px = *o.min_area;
    if (o.max_area) cfg.postprocess.max_area_px = *o.max_area;
    if (o.border) cfg.postprocess.border_px = *o.border;
    if (o.grid) cfg.baseline.grid_n = *o.grid;
    if (o.jobs) cfg.jobs = *o.jobs;
    if (o.seed) cfg.synth.rng_seed = *o.seed;
    if (!o.masks.empty()) {
        cfg.proposer = ProposerKind::Masks;
        cfg.masks_path = o.masks;
    }
    if (!o.segmenter_cmd.empty()) {
        cfg.proposer = ProposerKind::External;
        cfg.segmenter_cmd = o.segmenter_cmd;
    }
    cfg.validate();
    return cfg;
}

int cmd_pipeline(const std::vector<std::string>& inputs, const Overrides& o) {
    for (const auto& in : inputs) require_exists(in);
    const PipelineConfig cfg = build_config(o);
    require_exists(cfg.masks_path);
    if (inputs.size() == 1) {
        const auto r = run_pipeline_files(inputs.front(), o.out, cfg);
        std::cout << inputs.front() << ": " << r.masks.size() << " cells -> " << (fs::path(o.out) / "features.csv").string()
                  << '\n';
        return 0;
    }
    // one sub-directory per input; a failing file does not stop the others
    std::mutex io;
    std::size_t next = 0;
    int failures = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard lock(io);
                if (next == inputs.size()) return;
                i = next++;
            }
            const fs::path out = fs::path(o.out) / fs::path(inputs[i]).stem();
            try {
                const auto r = run_pipeline_files(inputs[i], out, cfg);
                std::lock_guard lock(io);
                std::cout << inputs[i] << ": " << r.masks.size() << " cells -> " << (out / "features.csv").string()
                          << '\n';
            } catch (const Error& e) {
                std::lock_guard lock(io);
                std::cerr << "cellmorph: [" << e.stage() << "] " << inputs[i] << ": " << e.what() << '\n';
                ++failures;
            }
        }
    };
    std::vector<std::thread> pool;
    const auto n = static_cast<std::size_t>(std::min<int>(cfg.jobs, static_cast<int>(inputs.size())));
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return failures ? kExitFailure : 0;
}

int cmd_denoise(const std::string& input, const Overrides& o) {
    require_exists(input);
    const PipelineConfig cfg = build_config(o);
    const RasterStack stack = read_stack(input, cfg.pixel_pitch_um);
    const DenoiseResult r = denoise_stack(stack, cfg);
    fs::create_directories(o.out);
    const fs::path out(o.out);
    write_image(r.stacked, out / "stacked.tiff");
    write_image(r.denoised, out / "denoised.tiff");
    Manifest m("denoise", cfg);
    m.add_input("stack", input);
    m.add_output(out / "stacked.tiff");
    m.add_output(out / "denoised.tiff");
    m.write(out / "manifest.json");
    std::cout << "denoised " << stack.frame_count() << "-frame stack -> " << (out / "denoised.tiff").string() << '\n';
    return 0;
}

int cmd_segment(const std::string& input, const Overrides& o) {
    require_exists(input);
    const PipelineConfig cfg = build_config(o);
    require_exists(cfg.masks_path);
    const RasterStack stack = read_stack(input, cfg.pixel_pitch_um);
    const DenoiseResult r = denoise_stack(stack, cfg);
    fs::create_directories(o.out);
    const fs::path out(o.out);
    write_image(r.denoised, out / "denoised.tiff");
    const MaskSet ms = propose(r.denoised, cfg, out / "denoised.tiff");
    save_masks(ms, out / "proposals.json");
    Manifest m("segment", cfg);
    m.add_input("stack", input);
    m.add_output(out / "denoised.tiff");
    m.add_output(out / "proposals.json");
    m.write(out / "manifest.json");
    std::cout << ms.size() << " proposals -> " << (out / "proposals.json").string() << '\n';
    return 0;
}

int cmd_postprocess(const std::string& input, const Overrides& o) {
    require_exists(input);
    if (o.masks.empty()) throw InputError("cli", "postprocess needs --masks");
    require_exists(o.masks);
    const PipelineConfig cfg = build_config(o);
    const Image stacked = stack_average(read_stack(input, cfg.pixel_pitch_um));
    const MaskSet ms = load_masks(o.masks, stacked.dims());
    AuditLog audit;
    const MaskSet kept = postprocess_pipeline(ms, stacked, cfg.postprocess, &audit);
    fs::create_directories(o.out);
    const fs::path out(o.out);
    save_masks(kept, out / "masks.json");
    audit.write_csv(out / "audit.csv");
    write_overlay(normalize(stacked, cfg.norm_lo_pct, cfg.norm_hi_pct), kept, out / "overlay.png");
    Manifest m("postprocess", cfg);
    m.add_input("stack", input);
    m.add_input("masks", o.masks);
    for (const char* f : {"masks.json", "audit.csv", "overlay.png"}) m.add_output(out / f);
    m.write(out / "manifest.json");
    std::cout << ms.size() << " masks in, " << kept.size() << " kept -> " << (out / "masks.json").string() << '\n';
    return 0;
}

int cmd_quantify(const std::string& input, const Overrides& o) {
    require_exists(input);
    if (o.masks.empty()) throw InputError("cli", "quantify needs --masks");
    require_exists(o.masks);
    const PipelineConfig cfg = build_config(o);
    const Image stacked = stack_average(read_stack(input, cfg.pixel_pitch_um));
    const MaskSet ms = load_masks(o.masks, stacked.dims());
    const auto rows = extract_features(ms, stacked, cfg.pixel_pitch_um);
    fs::create_directories(o.out);
    const fs::path out(o.out);
    write_features_csv(rows, out / "features.csv");
    Manifest m("quantify", cfg);
    m.add_input("stack", input);
    m.add_input("masks", o.masks);
    m.add_output(out / "features.csv");
    m.write(out / "manifest.json");
    for (const auto& r : rows)
        if (!r.features) std::cerr << "cellmorph: [morphometry] mask " << r.mask_id << ": " << r.error << '\n';
    std::cout << rows.size() << " cells -> " << (out / "features.csv").string() << '\n';
    return 0;
}

int cmd_evaluate(const std::string& masks, const std::string& annotations, const Overrides& o, bool write_out) {
    require_exists(masks);
    require_exists(annotations);
    const PipelineConfig cfg = build_config(o);
    const MaskSet ms = load_masks(masks, probe_mask_dims(masks));
    const AnnotationSet ann = load_annotations(annotations);
    const ErrorReport r = evaluate(ms, ann);
    std::cout << summary(r) << '\n';
    if (write_out) {
        fs::create_directories(o.out);
        const fs::path out(o.out);
        write_report_csv(r, out / "report.csv");
        Manifest m("evaluate", cfg);
        m.add_input("masks", masks);
        m.add_input("annotations", annotations);
        m.add_output(out / "report.csv");
        m.write(out / "manifest.json");
    }
    return 0;
}

int cmd_synth(const Overrides& o, std::optional<int> n_cells, std::optional<int> size) {
    PipelineConfig cfg = build_config(o);
    if (n_cells) cfg.synth.n_cells = *n_cells;
    if (size) cfg.synth.image_size_px = *size;
    const SynthField field = generate_field(cfg.synth);
    const fs::path out(o.out);
    write_field(field, out);
    Manifest m("synth", cfg);
    for (const char* f : {"frames.tiff", "clean.tiff", "masks.json", "annotations.csv", "truth.csv"})
        m.add_output(out / f);
    m.write(out / "manifest.json");
    std::cout << field.truth_masks.size() << " cells, " << field.stack.frame_count() << " frames -> " << out.string()
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cell morphometry from multi-frame fluorescence raster scans"};
    app.require_subcommand(1);
    Overrides o;
    std::vector<std::string> inputs;
    std::string input, masks_arg, ann_arg;
    std::optional<int> n_cells, size;

    auto* pipeline = app.add_subcommand("pipeline", "Stack, denoise, segment, post-process and quantify");
    pipeline->add_option("input", inputs, "Multi-page TIFF stack(s)")->required();
    pipeline->add_option("--masks", o.masks, "Mask source (directory, .json or .png)");
    pipeline->add_option("--segmenter-cmd", o.segmenter_cmd, "External segmenter command with {input} and {output}");
    add_common(pipeline, o);

    auto* denoise = app.add_subcommand("denoise", "Stack and BM3D-denoise a TIFF stack");
    denoise->add_option("input", input, "Multi-page TIFF stack")->required();
    add_common(denoise, o);

    auto* segment = app.add_subcommand("segment", "Produce mask proposals for a TIFF stack");
    segment->add_option("input", input, "Multi-page TIFF stack")->required();
    segment->add_option("--masks", o.masks, "Mask source (directory, .json or .png)");
    segment->add_option("--segmenter-cmd", o.segmenter_cmd, "External segmenter command with {input} and {output}");
    add_common(segment, o);

    auto* post = app.add_subcommand("postprocess", "Run the mask refinement chain");
    post->add_option("input", input, "Multi-page TIFF stack")->required();
    post->add_option("--masks", o.masks, "Mask source (directory, .json or .png)");
    add_common(post, o);

    auto* quantify = app.add_subcommand("quantify", "Measure per-cell features");
    quantify->add_option("input", input, "Multi-page TIFF stack")->required();
    quantify->add_option("--masks", o.masks, "Mask source (directory, .json or .png)");
    add_common(quantify, o);

    auto* eval = app.add_subcommand("evaluate", "Error rate of masks against point annotations");
    eval->add_option("masks", masks_arg, "Mask source (directory, .json or .png)")->required();
    eval->add_option("annotations", ann_arg, "Annotation CSV (x_px,y_px)")->required();
    add_common(eval, o);

    auto* synth = app.add_subcommand("synth", "Generate a synthetic field with ground truth");
    synth->add_option("--cells", n_cells, "Number of cells");
    synth->add_option("--size", size, "Field edge length (px)");
    add_common(synth, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*pipeline) return cmd_pipeline(inputs, o);
        if (*denoise) return cmd_denoise(input, o);
        if (*segment) return cmd_segment(input, o);
        if (*post) return cmd_postprocess(input, o);
        if (*quantify) return cmd_quantify(input, o);
        if (*eval) return cmd_evaluate(masks_arg, ann_arg, o, eval->count("--out") > 0);
        if (*synth) return cmd_synth(o, n_cells, size);
    } catch (const InputError& e) {
        std::cerr << "cellmorph: [" << e.stage() << "] " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "cellmorph: [" << e.stage() << "] " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "cellmorph: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}
