#pragma once

// Mask interchange formats:
//   * RLE JSON  {"width":W,"height":H,"masks":[{"id":k,"counts":[...]}]}
//     or a single mask {"size":[H,W],"counts":[...]}
//     column-major scan, runs alternate starting with background, sum = W*H
//   * directory of binary PNGs named NNN.png (nonzero = foreground)
//   * 16-bit label map PNG (0 = background, mask i = i + 1)

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellmorph/error.hpp"
#include "cellmorph/imageio.hpp"
#include "cellmorph/mask.hpp"

namespace cellmorph {

inline std::vector<std::uint64_t> rle_encode(const Bitmap& bits, Dims d) {
    std::vector<std::uint64_t> counts;
    std::uint8_t current = 0;
    std::uint64_t run = 0;
    for (int x = 0; x < d.width; ++x)
        for (int y = 0; y < d.height; ++y) {
            const std::uint8_t v = bits[static_cast<std::size_t>(y) * d.width + x] ? 1 : 0;
            if (v != current) {
                counts.push_back(run);
                run = 0;
                current = v;
            }
            ++run;
        }
    counts.push_back(run);
    return counts;
}

inline Bitmap rle_decode(const std::vector<std::uint64_t>& counts, Dims d, const std::string& what) {
    std::uint64_t total = 0;
    for (auto c : counts) total += c;
    if (total != d.size())
        throw FormatError("proposals", what + ": RLE counts sum to " + std::to_string(total) + ", expected " +
                                           std::to_string(d.size()) + " (" + to_string(d) + ")");
    Bitmap bits(d.size(), 0);
    std::uint64_t pos = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        if (r % 2 == 1)
            for (std::uint64_t k = pos; k < pos + counts[r]; ++k) {
                const auto x = static_cast<std::size_t>(k / d.height), y = static_cast<std::size_t>(k % d.height);
                bits[y * d.width + x] = 1;
            }
        pos += counts[r];
    }
    return bits;
}

namespace detail {

inline void require_nonempty(const Mask& m, const std::string& what) {
    if (m.area() == 0) throw FormatError("proposals", what + " is empty");
}

inline MaskSet load_rle_json(const std::filesystem::path& path, Dims dims) {
    std::ifstream in(path);
    if (!in) throw InputError("proposals", "cannot open mask file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("proposals", path.string() + ": invalid JSON: " + e.what());
    }
    try {
        // single-mask document {"size": [H, W], "counts": [...]}
        if (doc.contains("counts")) {
            const auto size = doc.at("size").get<std::vector<int>>();
            if (size.size() != 2) throw FormatError("proposals", path.string() + ": size must be [height, width]");
            const Dims file_dims{size[1], size[0]};
            if (file_dims != dims)
                throw FormatError("proposals", path.string() + ": mask is " + to_string(file_dims) + ", image is " +
                                                   to_string(dims));
            const std::string what = path.string() + " mask 0";
            Mask m(0, dims, rle_decode(doc.at("counts").get<std::vector<std::uint64_t>>(), dims, what));
            require_nonempty(m, what);
            return MaskSet(dims, {std::move(m)});
        }
        const Dims file_dims{doc.at("width").get<int>(), doc.at("height").get<int>()};
        if (file_dims != dims)
            throw FormatError("proposals", path.string() + ": masks are " + to_string(file_dims) + ", image is " +
                                               to_string(dims));
        std::vector<Mask> masks;
        const auto& arr = doc.at("masks");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string what = path.string() + " mask " + std::to_string(i);
            const auto counts = arr[i].at("counts").get<std::vector<std::uint64_t>>();
            Mask m(static_cast<int>(i), dims, rle_decode(counts, dims, what));
            require_nonempty(m, what);
            masks.push_back(std::move(m));
        }
        return MaskSet(dims, std::move(masks));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("proposals", path.string() + ": malformed mask document: " + e.what());
    }
}

inline bool is_numbered_png(const std::filesystem::path& p) {
    if (p.extension() != ".png") return false;
    const std::string stem = p.stem().string();
    return !stem.empty() && std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); });
}

inline MaskSet load_png_dir(const std::filesystem::path& dir, Dims dims) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && is_numbered_png(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
        const auto na = std::stoull(a.stem().string()), nb = std::stoull(b.stem().string());
        return na != nb ? na < nb : a.filename() < b.filename();
    });
    std::vector<Mask> masks;
    for (const auto& f : files) {
        const PngPixels px = read_png(f);
        if (px.width != dims.width || px.height != dims.height)
            throw FormatError("proposals", f.string() + ": mask is " + std::to_string(px.width) + "x" +
                                               std::to_string(px.height) + ", image is " + to_string(dims));
        const int colour = (px.channels == 2 || px.channels == 4) ? px.channels - 1 : px.channels;
        Bitmap bits(dims.size(), 0);
        for (int y = 0; y < dims.height; ++y)
            for (int x = 0; x < dims.width; ++x)
                for (int c = 0; c < colour; ++c)
                    if (px.at(x, y, c)) bits[static_cast<std::size_t>(y) * dims.width + x] = 1;
        Mask m(static_cast<int>(masks.size()), dims, std::move(bits));
        require_nonempty(m, f.string());
        masks.push_back(std::move(m));
    }
    return MaskSet(dims, std::move(masks));
}

inline MaskSet load_label_map(const std::filesystem::path& path, Dims dims) {
    const PngPixels px = read_png(path);
    if (px.width != dims.width || px.height != dims.height)
        throw FormatError("proposals", path.string() + ": label map is " + std::to_string(px.width) + "x" +
                                           std::to_string(px.height) + ", image is " + to_string(dims));
    if (px.channels != 1) throw FormatError("proposals", path.string() + ": label map must be single-channel");
    std::uint16_t max_label = 0;
    for (auto s : px.samples) max_label = std::max(max_label, s);
    std::vector<Bitmap> bits(max_label, Bitmap(dims.size(), 0));
    for (std::size_t i = 0; i < px.samples.size(); ++i)
        if (px.samples[i]) bits[px.samples[i] - 1u][i] = 1;
    std::vector<Mask> masks;
    for (std::size_t k = 0; k < bits.size(); ++k) {
        Mask m(static_cast<int>(k), dims, std::move(bits[k]));
        require_nonempty(m, path.string() + " label " + std::to_string(k + 1));
        masks.push_back(std::move(m));
    }
    return MaskSet(dims, std::move(masks));
}

}  // namespace detail

// Loads a mask set from a directory of NNN.png files, an RLE JSON document or
// a label-map PNG. Ids follow file / array / label order.
inline MaskSet load_masks(const std::filesystem::path& path, Dims dims) {
    if (!std::filesystem::exists(path)) throw InputError("proposals", "mask source not found: " + path.string());
    if (std::filesystem::is_directory(path)) return detail::load_png_dir(path, dims);
    if (path.extension() == ".json") return detail::load_rle_json(path, dims);
    if (path.extension() == ".png") return detail::load_label_map(path, dims);
    throw FormatError("proposals", "unrecognised mask source (expected directory, .json or .png): " + path.string());
}

inline nlohmann::json masks_to_json(const MaskSet& ms) {
    nlohmann::json doc;
    doc["width"] = ms.dims().width;
    doc["height"] = ms.dims().height;
    doc["masks"] = nlohmann::json::array();
    for (const Mask& m : ms) doc["masks"].push_back({{"id", m.id()}, {"counts", rle_encode(m.bitmap(), ms.dims())}});
    return doc;
}

// Writes RLE JSON when the path ends in .json, a label map for .png, and a
// directory of NNN.png binary masks otherwise.
inline void save_masks(const MaskSet& ms, const std::filesystem::path& path) {
    if (path.extension() == ".json") {
        std::ofstream out(path);
        if (!out) throw InputError("proposals", "cannot write mask file: " + path.string());
        out << masks_to_json(ms).dump() << '\n';
        return;
    }
    if (path.extension() == ".png") {
        write_label_map(ms, path);
        return;
    }
    std::filesystem::create_directories(path);
    const Dims d = ms.dims();
    for (std::size_t k = 0; k < ms.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.png", k);
        std::vector<std::uint16_t> px(d.size());
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = ms[k].bitmap()[i] ? 255 : 0;
        write_png(path / name, d.width, d.height, 1, 8, px);
    }
}

}  // namespace cellmorph
