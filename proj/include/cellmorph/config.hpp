#pragma once

// Pipeline configuration. Files use "key = value" lines under [section]
// headers. Layers apply in order: built-in defaults, then a config file, then
// command-line overrides. to_ini() emits every key in a fixed order with
// shortest round-trip numbers, so parse(to_ini(c)) == c.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cellmorph/denoise.hpp"
#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/imageio.hpp"
#include "cellmorph/morphology.hpp"
#include "cellmorph/postprocess.hpp"
#include "cellmorph/proposals.hpp"
#include "cellmorph/synthgen.hpp"

namespace cellmorph {

enum class ProposerKind { Baseline, Masks, External };

inline std::string to_string(ProposerKind k) {
    switch (k) {
        case ProposerKind::Masks: return "masks";
        case ProposerKind::External: return "external";
        default: return "baseline";
    }
}

struct PipelineConfig {
    double pixel_pitch_um = kDefaultPixelPitchUm;
    double norm_lo_pct = kDefaultNormLoPct;
    double norm_hi_pct = kDefaultNormHiPct;
    Bm3dParams denoise;
    ProposerKind proposer = ProposerKind::Baseline;
    std::string masks_path;
    std::string segmenter_cmd;
    BaselineParams baseline;
    PostprocessConfig postprocess;
    SynthParams synth;
    int jobs = 1;

    void validate() const {
        if (!(pixel_pitch_um > 0.0)) throw FormatError("config", "io.pixel_pitch_um must be positive");
        if (!(norm_lo_pct >= 0.0 && norm_lo_pct < norm_hi_pct && norm_hi_pct <= 100.0))
            throw FormatError("config", "need 0 <= io.norm_lo_pct < io.norm_hi_pct <= 100");
        if (jobs < 1) throw FormatError("config", "run.jobs must be >= 1");
        if (proposer == ProposerKind::Masks && masks_path.empty())
            throw FormatError("config", "proposals.source = masks needs proposals.masks");
        if (proposer == ProposerKind::External && segmenter_cmd.empty())
            throw FormatError("config", "proposals.source = external needs proposals.segmenter_cmd");
        denoise.validate();
        postprocess.validate();
    }

    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

namespace detail {

inline std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& key, const std::string& text) {
    if (text == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
        throw FormatError("config", key + ": expected a number, got '" + text + "'");
    return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
    Int v{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw FormatError("config", key + ": expected an integer, got '" + text + "'");
    return v;
}

struct ConfigKey {
    std::string section;
    std::string name;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

template <class Member>
ConfigKey number_key(std::string section, std::string name, Member member) {
    const std::string full = section + "." + name;
    return {std::move(section), std::move(name),
            [member](const PipelineConfig& c) {
                const auto& v = std::invoke(member, c);
                if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) return format_number(v);
                else return std::to_string(v);
            },
            [member, full](PipelineConfig& c, const std::string& s) {
                auto& v = std::invoke(member, c);
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_floating_point_v<T>) v = parse_double(full, s);
                else v = parse_int<T>(full, s);
            }};
}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        auto num = [&](const char* sec, const char* name, auto member) { k.push_back(number_key(sec, name, member)); };
        num("io", "pixel_pitch_um", [](auto& c) -> auto& { return c.pixel_pitch_um; });
        num("io", "norm_lo_pct", [](auto& c) -> auto& { return c.norm_lo_pct; });
        num("io", "norm_hi_pct", [](auto& c) -> auto& { return c.norm_hi_pct; });

        num("denoise", "sigma", [](auto& c) -> auto& { return c.denoise.sigma; });
        num("denoise", "block", [](auto& c) -> auto& { return c.denoise.block; });
        num("denoise", "search_window", [](auto& c) -> auto& { return c.denoise.search_window; });
        num("denoise", "max_group", [](auto& c) -> auto& { return c.denoise.max_group; });
        num("denoise", "match_step", [](auto& c) -> auto& { return c.denoise.match_step; });
        num("denoise", "hard_tau", [](auto& c) -> auto& { return c.denoise.hard_tau; });
        num("denoise", "match_thresh_stage1", [](auto& c) -> auto& { return c.denoise.match_thresh_stage1; });
        num("denoise", "match_thresh_stage2", [](auto& c) -> auto& { return c.denoise.match_thresh_stage2; });
        num("denoise", "threads", [](auto& c) -> auto& { return c.denoise.threads; });

        k.push_back({"proposals", "source", [](const PipelineConfig& c) { return to_string(c.proposer); },
                     [](PipelineConfig& c, const std::string& s) {
                         if (s == "baseline") c.proposer = ProposerKind::Baseline;
                         else if (s == "masks") c.proposer = ProposerKind::Masks;
                         else if (s == "external") c.proposer = ProposerKind::External;
                         else throw FormatError("config", "proposals.source: expected baseline, masks or external, got '" + s + "'");
                     }});
        k.push_back({"proposals", "masks", [](const PipelineConfig& c) { return c.masks_path; },
                     [](PipelineConfig& c, const std::string& s) { c.masks_path = s; }});
        k.push_back({"proposals", "segmenter_cmd", [](const PipelineConfig& c) { return c.segmenter_cmd; },
                     [](PipelineConfig& c, const std::string& s) { c.segmenter_cmd = s; }});
        num("proposals", "grid", [](auto& c) -> auto& { return c.baseline.grid_n; });
        num("proposals", "min_dynamic", [](auto& c) -> auto& { return c.baseline.min_dynamic; });

        num("postprocess", "min_area_px", [](auto& c) -> auto& { return c.postprocess.min_area_px; });
        num("postprocess", "max_area_px", [](auto& c) -> auto& { return c.postprocess.max_area_px; });
        num("postprocess", "intensity_lo", [](auto& c) -> auto& { return c.postprocess.intensity_lo; });
        num("postprocess", "intensity_hi", [](auto& c) -> auto& { return c.postprocess.intensity_hi; });
        num("postprocess", "iou_thresh", [](auto& c) -> auto& { return c.postprocess.iou_thresh; });
        k.push_back({"postprocess", "erosion_elem",
                     [](const PipelineConfig& c) { return to_string(c.postprocess.erosion_elem); },
                     [](PipelineConfig& c, const std::string& s) { c.postprocess.erosion_elem = parse_structuring_element(s); }});
        num("postprocess", "border_px", [](auto& c) -> auto& { return c.postprocess.border_px; });
        k.push_back({"postprocess", "closing_elem",
                     [](const PipelineConfig& c) { return to_string(c.postprocess.closing_elem); },
                     [](PipelineConfig& c, const std::string& s) { c.postprocess.closing_elem = parse_structuring_element(s); }});

        num("synth", "image_size_px", [](auto& c) -> auto& { return c.synth.image_size_px; });
        num("synth", "pixel_pitch_um", [](auto& c) -> auto& { return c.synth.pixel_pitch_um; });
        num("synth", "n_cells", [](auto& c) -> auto& { return c.synth.n_cells; });
        num("synth", "length_um_min", [](auto& c) -> auto& { return c.synth.length_um_min; });
        num("synth", "length_um_max", [](auto& c) -> auto& { return c.synth.length_um_max; });
        num("synth", "width_um_min", [](auto& c) -> auto& { return c.synth.width_um_min; });
        num("synth", "width_um_max", [](auto& c) -> auto& { return c.synth.width_um_max; });
        num("synth", "intensity_cell", [](auto& c) -> auto& { return c.synth.intensity_cell; });
        num("synth", "intensity_bg", [](auto& c) -> auto& { return c.synth.intensity_bg; });
        num("synth", "frames", [](auto& c) -> auto& { return c.synth.frames; });
        num("synth", "noise_scale", [](auto& c) -> auto& { return c.synth.noise_scale; });
        num("synth", "min_gap_px", [](auto& c) -> auto& { return c.synth.min_gap_px; });
        num("synth", "edge_margin_px", [](auto& c) -> auto& { return c.synth.edge_margin_px; });
        num("synth", "max_attempts_per_cell", [](auto& c) -> auto& { return c.synth.max_attempts_per_cell; });
        num("synth", "seed", [](auto& c) -> auto& { return c.synth.rng_seed; });

        num("run", "jobs", [](auto& c) -> auto& { return c.jobs; });
        return k;
    }();
    return keys;
}

inline const ConfigKey* find_key(const std::string& section, const std::string& name) {
    for (const auto& k : config_keys())
        if (k.section == section && k.name == name) return &k;
    return nullptr;
}

}  // namespace detail

// Sets "section.key" from its textual value.
inline void set_config_value(PipelineConfig& cfg, const std::string& dotted, const std::string& value) {
    const auto dot = dotted.find('.');
    const auto* key = dot == std::string::npos ? nullptr
                                               : detail::find_key(dotted.substr(0, dot), dotted.substr(dot + 1));
    if (!key) throw FormatError("config", "unknown config key '" + dotted + "'");
    key->set(cfg, value);
}

inline std::string get_config_value(const PipelineConfig& cfg, const std::string& dotted) {
    const auto dot = dotted.find('.');
    const auto* key = dot == std::string::npos ? nullptr
                                               : detail::find_key(dotted.substr(0, dot), dotted.substr(dot + 1));
    if (!key) throw FormatError("config", "unknown config key '" + dotted + "'");
    return key->get(cfg);
}

// Applies every key in `text` on top of `cfg`. Unknown sections or keys are
// errors, as are keys outside any section.
inline void apply_ini(PipelineConfig& cfg, const std::string& text, const std::string& origin = "<config>") {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw FormatError("config", origin + " line " + std::to_string(e.line()) + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw FormatError("config", origin + ": key '" + section + "' is outside any [section]");
        for (const auto& [name, leaf] : body) set_config_value(cfg, section + "." + name, leaf.data());
    }
}

inline void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config", "cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_ini(cfg, ss.str(), path.string());
}

inline PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    apply_ini(cfg, text);
    return cfg;
}

inline std::string to_ini(const PipelineConfig& cfg) {
    std::string out, section;
    for (const auto& k : detail::config_keys()) {
        if (k.section != section) {
            if (!section.empty()) out += '\n';
            section = k.section;
            out += "[" + section + "]\n";
        }
        out += k.name + " = " + k.get(cfg) + "\n";
    }
    return out;
}

}  // namespace cellmorph
