#pragma once

// Initial mask proposals. External segmenters (e.g. SAM exports) come in
// through load_masks or run_external_segmenter; propose_masks_baseline is a
// classical stand-in that mirrors the grid-prompt protocol.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"
#include "cellmorph/mask.hpp"
#include "cellmorph/maskio.hpp"

namespace cellmorph {

struct BaselineParams {
    int grid_n = 32;
    // Minimum peak-to-saddle contrast separating two basins, as a fraction of
    // (median foreground level - threshold).
    double min_dynamic = 0.5;

    friend bool operator==(const BaselineParams&, const BaselineParams&) = default;
};

// 3x3 box mean; border pixels average over their in-image neighbours.
inline Image mean_filter3(const Image& img) {
    Image out(img.width(), img.height(), 0.0, img.pixel_pitch_um());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            double s = 0.0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (img.contains(x + dx, y + dy)) {
                        s += img(x + dx, y + dy);
                        ++n;
                    }
            out(x, y) = s / n;
        }
    return out;
}

// Otsu threshold over a 256-bin histogram spanning [min, max]. Pixels strictly
// above the returned value are foreground.
inline double otsu_threshold(const Image& img) {
    if (img.empty()) return 0.0;
    const auto [mn_it, mx_it] = std::minmax_element(img.values().begin(), img.values().end());
    const double lo = *mn_it, hi = *mx_it;
    if (!(hi > lo)) return hi;
    constexpr int bins = 256;
    std::array<double, bins> hist{};
    const double scale = (bins - 1) / (hi - lo);
    for (double v : img.values()) hist[static_cast<std::size_t>((v - lo) * scale)] += 1.0;
    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int i = 0; i < bins; ++i) sum_all += i * hist[i];
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_i = 0;
    for (int i = 0; i < bins - 1; ++i) {
        w0 += hist[i];
        sum0 += i * hist[i];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_i = i;
        }
    }
    // upper edge of the last background bin
    return lo + (best_i + 1) / scale - 1e-12 * (hi - lo);
}

namespace detail {

struct DisjointSets {
    std::vector<int> parent;
    std::vector<double> peak;

    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
};

// Flooding from the brightest pixel down over the foreground. Basins whose
// peak rises less than `dynamic` above the level where they meet a brighter
// basin are absorbed into it; the rest stay separate. Returns one label per
// pixel (-1 background) where the label is the basin's root pixel index.
inline std::vector<int> flood_basins(const Image& smooth, const std::vector<std::uint8_t>& fg, double dynamic) {
    const int w = smooth.width(), h = smooth.height();
    const std::size_t n = smooth.size();
    std::vector<int> order;
    for (std::size_t i = 0; i < n; ++i)
        if (fg[i]) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return smooth[a] > smooth[b]; });

    DisjointSets ds;
    ds.parent.assign(n, -1);
    ds.peak.assign(n, 0.0);
    constexpr std::array<std::array<int, 2>, 4> nbrs{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (int p : order) {
        const int x = p % w, y = p / w;
        const double v = smooth[static_cast<std::size_t>(p)];
        std::vector<int> roots;
        for (const auto& d : nbrs) {
            const int nx = x + d[0], ny = y + d[1];
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const int q = ny * w + nx;
            if (ds.parent[q] < 0) continue;
            const int r = ds.find(q);
            if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
        }
        if (roots.empty()) {
            ds.parent[p] = p;
            ds.peak[p] = v;
            continue;
        }
        std::sort(roots.begin(), roots.end(), [&](int a, int b) {
            return ds.peak[a] != ds.peak[b] ? ds.peak[a] > ds.peak[b] : a < b;
        });
        const int main = roots.front();
        for (std::size_t k = 1; k < roots.size(); ++k)
            if (ds.peak[roots[k]] - v < dynamic) ds.parent[roots[k]] = main;
        ds.parent[p] = main;
    }
    std::vector<int> labels(n, -1);
    for (int p : order) labels[p] = ds.find(p);
    return labels;
}

// Steepest ascent on `smooth` within the foreground, 8-connected.
inline int climb(const Image& smooth, const std::vector<std::uint8_t>& fg, int x, int y) {
    for (;;) {
        int bx = x, by = y;
        double best = smooth(x, y);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (!smooth.contains(nx, ny) || !fg[smooth.index(nx, ny)]) continue;
                if (smooth(nx, ny) > best) {
                    best = smooth(nx, ny);
                    bx = nx;
                    by = ny;
                }
            }
        if (bx == x && by == y) return static_cast<int>(smooth.index(x, y));
        x = bx;
        y = by;
    }
}

}  // namespace detail

// Otsu foreground, then marker-based watershed: a grid_n x grid_n lattice of
// prompt points is laid over the image, every point on foreground climbs to its
// local maximum of the 3x3-smoothed image, and each flooded basin holding such
// a marker becomes one mask. Masks are ordered by their first pixel in
// row-major order.
inline MaskSet propose_masks_baseline(const Image& img, const BaselineParams& params = {}) {
    if (params.grid_n < 1) throw ProcessingError("proposals", "grid_n must be >= 1");
    const Dims d = img.dims();
    MaskSet empty_set(d);
    if (img.empty()) return empty_set;
    const auto [mn, mx] = std::minmax_element(img.values().begin(), img.values().end());
    if (!(*mx > *mn)) return empty_set;
    const Image smooth = mean_filter3(img);

    const double t = otsu_threshold(smooth);
    std::vector<std::uint8_t> fg(d.size(), 0);
    std::vector<double> fg_values;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (smooth[i] > t) {
            fg[i] = 1;
            fg_values.push_back(smooth[i]);
        }
    if (fg_values.empty()) return empty_set;
    std::nth_element(fg_values.begin(), fg_values.begin() + static_cast<std::ptrdiff_t>(fg_values.size() / 2),
                     fg_values.end());
    const double fg_median = fg_values[fg_values.size() / 2];
    const double dynamic = params.min_dynamic * std::max(fg_median - t, 0.0);

    const std::vector<int> labels = detail::flood_basins(smooth, fg, dynamic);

    std::vector<std::uint8_t> marked(d.size(), 0);
    const int g = params.grid_n;
    for (int j = 0; j < g; ++j)
        for (int i = 0; i < g; ++i) {
            const int x = static_cast<int>((i + 0.5) * d.width / g);
            const int y = static_cast<int>((j + 0.5) * d.height / g);
            if (!fg[smooth.index(x, y)]) continue;
            const int peak = detail::climb(smooth, fg, x, y);
            marked[static_cast<std::size_t>(labels[peak])] = 1;
        }

    std::vector<int> first_seen;
    std::vector<int> slot(d.size(), -1);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || !marked[l] || slot[l] >= 0) continue;
        slot[l] = static_cast<int>(first_seen.size());
        first_seen.push_back(l);
    }
    std::vector<Bitmap> bits(first_seen.size(), Bitmap(d.size(), 0));
    for (std::size_t i = 0; i < d.size(); ++i) {
        const int l = labels[i];
        if (l >= 0 && slot[l] >= 0) bits[static_cast<std::size_t>(slot[l])][i] = 1;
    }
    std::vector<Mask> masks;
    for (auto& b : bits) {
        Mask m(static_cast<int>(masks.size()), d, std::move(b));
        if (m.area() > 0) masks.push_back(std::move(m));
    }
    return MaskSet(d, std::move(masks));
}

inline MaskSet propose_masks_baseline(const Image& img, int grid_n) {
    BaselineParams p;
    p.grid_n = grid_n;
    return propose_masks_baseline(img, p);
}

// ---------------------------------------------------------------------------
// External segmenter

class ExternalSegmenterError : public ProcessingError {
public:
    ExternalSegmenterError(int exit_code, const std::string& stderr_text, const std::string& message)
        : ProcessingError("segment", message), exit_code_(exit_code), stderr_(stderr_text) {}
    int exit_code() const { return exit_code_; }
    const std::string& stderr_text() const { return stderr_; }

private:
    int exit_code_;
    std::string stderr_;
};

namespace detail {

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

inline std::mutex& segmenter_mutex() {
    static std::mutex m;
    return m;
}

inline std::filesystem::path fresh_temp_dir() {
    static std::atomic<unsigned> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
        const auto p = base / ("cellmorph-seg-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        if (std::filesystem::create_directory(p)) return p;
    }
}

}  // namespace detail

// Runs `command_template` through /bin/sh with {input} and {output} replaced
// (shell-quoted), then loads whatever the command left at {output}. When
// output_path is empty a fresh temporary path is used.
inline MaskSet run_external_segmenter(const std::string& command_template, const std::filesystem::path& img_path,
                                      Dims dims, std::filesystem::path output_path = {}) {
    if (command_template.find("{input}") == std::string::npos ||
        command_template.find("{output}") == std::string::npos)
        throw ProcessingError("segment", "segmenter command must contain {input} and {output} placeholders");

    std::lock_guard lock(detail::segmenter_mutex());
    const auto work = detail::fresh_temp_dir();
    if (output_path.empty()) output_path = work / "masks";
    const auto err_path = work / "stderr.txt";

    std::string cmd = detail::replace_all(command_template, "{input}", detail::shell_quote(img_path.string()));
    cmd = detail::replace_all(cmd, "{output}", detail::shell_quote(output_path.string()));
    const std::string full = "( " + cmd + " ) 2> " + detail::shell_quote(err_path.string());
    const int status = std::system(full.c_str());

    std::string err_text;
    if (std::ifstream err(err_path); err) {
        std::ostringstream ss;
        ss << err.rdbuf();
        err_text = ss.str();
    }
    const int code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status));
    if (code != 0) {
        std::filesystem::remove_all(work);
        throw ExternalSegmenterError(code, err_text,
                                     "external segmenter failed with exit code " + std::to_string(code) +
                                         (err_text.empty() ? "" : ": " + err_text));
    }
    if (!std::filesystem::exists(output_path)) {
        std::filesystem::remove_all(work);
        throw ExternalSegmenterError(0, err_text, "external segmenter produced no output at " + output_path.string());
    }
    try {
        MaskSet ms = load_masks(output_path, dims);
        std::filesystem::remove_all(work);
        return ms;
    } catch (...) {
        std::filesystem::remove_all(work);
        throw;
    }
}

}  // namespace cellmorph
