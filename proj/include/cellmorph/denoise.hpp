#pragma once

// Two-stage BM3D for single-channel images on a [0, 1] scale.
//
// Both stages share the same skeleton: for every reference block on a strided
// grid, gather similar blocks, transform the group (separable orthonormal DCT
// per block, Haar across the group), shrink, invert and aggregate. Block means
// are carried outside the transform so the DC path is exact; the shrinkage
// only ever touches AC coefficients.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "cellmorph/error.hpp"
#include "cellmorph/image.hpp"

namespace cellmorph {

struct Bm3dParams {
    double sigma = 0.2;
    int block = 8;
    int search_window = 19;  // half-width
    int max_group = 16;
    int match_step = 3;
    double hard_tau = 2.7;
    double match_thresh_stage1 = 0.12;  // mean squared block distance
    double match_thresh_stage2 = 0.05;
    int threads = 0;  // 0 = hardware concurrency; never changes the output

    void validate() const {
        auto fail = [](const std::string& m) { throw ProcessingError("denoise", m); };
        if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("sigma must be positive");
        if (block < 2) fail("block must be at least 2");
        if (search_window < 0) fail("search_window must be non-negative");
        if (max_group < 1 || (max_group & (max_group - 1)) != 0) fail("max_group must be a power of two");
        if (match_step < 1 || match_step > block) fail("match_step must be in [1, block]");
        if (!(hard_tau >= 0.0)) fail("hard_tau must be non-negative");
        if (!(match_thresh_stage1 >= 0.0) || !(match_thresh_stage2 >= 0.0)) fail("match thresholds must be >= 0");
        if (threads < 0) fail("threads must be >= 0");
    }

    friend bool operator==(const Bm3dParams&, const Bm3dParams&) = default;
};

struct BlockPos {
    int x = 0;
    int y = 0;
    friend bool operator==(const BlockPos&, const BlockPos&) = default;
};

namespace detail {

inline double block_distance(const Image& img, BlockPos a, BlockPos b, int n) {
    double acc = 0.0;
    for (int dy = 0; dy < n; ++dy) {
        const double* ra = &img.values()[img.index(a.x, a.y + dy)];
        const double* rb = &img.values()[img.index(b.x, b.y + dy)];
        for (int dx = 0; dx < n; ++dx) {
            const double d = ra[dx] - rb[dx];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(n * n);
}

// Reference positions along one axis: every `step`, with the last block flush
// against the far edge.
inline std::vector<int> reference_grid(int extent, int block, int step) {
    std::vector<int> g;
    for (int p = 0; p + block < extent; p += step) g.push_back(p);
    g.push_back(extent - block);
    return g;
}

inline std::size_t largest_pow2_at_most(std::size_t n) {
    std::size_t p = 1;
    while (p * 2 <= n) p *= 2;
    return p;
}

class Dct {
public:
    explicit Dct(int n) : n_(n), m_(static_cast<std::size_t>(n) * n) {
        for (int k = 0; k < n; ++k) {
            const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
            for (int i = 0; i < n; ++i)
                m_[static_cast<std::size_t>(k) * n + i] = a * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
        }
    }

    // In-place separable forward transform of an n x n row-major block.
    void forward(double* blk, double* tmp) const { apply(blk, tmp, false); }
    void inverse(double* blk, double* tmp) const { apply(blk, tmp, true); }

private:
    void apply(double* blk, double* tmp, bool inv) const {
        const int n = n_;
        // rows
        for (int r = 0; r < n; ++r)
            for (int k = 0; k < n; ++k) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += coef(inv, k, i) * blk[r * n + i];
                tmp[r * n + k] = s;
            }
        // columns
        for (int c = 0; c < n; ++c)
            for (int k = 0; k < n; ++k) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) s += coef(inv, k, i) * tmp[i * n + c];
                blk[k * n + c] = s;
            }
    }
    double coef(bool inv, int k, int i) const {
        return inv ? m_[static_cast<std::size_t>(i) * n_ + k] : m_[static_cast<std::size_t>(k) * n_ + i];
    }

    int n_;
    std::vector<double> m_;
};

// Orthonormal multi-level Haar transform of a power-of-two length vector.
inline void haar_forward(double* v, std::size_t n, double* tmp) {
    constexpr double r = std::numbers::sqrt2 / 2.0;
    for (std::size_t len = n; len > 1; len /= 2) {
        const std::size_t h = len / 2;
        for (std::size_t i = 0; i < h; ++i) {
            tmp[i] = (v[2 * i] + v[2 * i + 1]) * r;
            tmp[h + i] = (v[2 * i] - v[2 * i + 1]) * r;
        }
        std::copy(tmp, tmp + len, v);
    }
}

inline void haar_inverse(double* v, std::size_t n, double* tmp) {
    constexpr double r = std::numbers::sqrt2 / 2.0;
    for (std::size_t len = 2; len <= n; len *= 2) {
        const std::size_t h = len / 2;
        for (std::size_t i = 0; i < h; ++i) {
            tmp[2 * i] = (v[i] + v[h + i]) * r;
            tmp[2 * i + 1] = (v[i] - v[h + i]) * r;
        }
        std::copy(tmp, tmp + len, v);
    }
}

// Mean by pairwise summation; exact for blocks of identical values when the
// sample count is a power of two.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 2) return n == 0 ? 0.0 : (n == 1 ? v[0] : v[0] + v[1]);
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

// Blocks of one group after filtering, in group order, ready for aggregation.
struct GroupEstimate {
    std::vector<BlockPos> positions;
    std::vector<double> pixels;  // positions.size() * block * block
    double weight = 0.0;
};

// Weighted running mean per pixel: exact when all contributions agree.
class Aggregator {
public:
    Aggregator(Dims d, int block) : block_(block), width_(d.width), mean_(d.size(), 0.0), wsum_(d.size(), 0.0) {}

    void add(const GroupEstimate& g) {
        const std::size_t bb = static_cast<std::size_t>(block_) * block_;
        for (std::size_t j = 0; j < g.positions.size(); ++j) {
            const BlockPos p = g.positions[j];
            const double* est = g.pixels.data() + j * bb;
            for (int dy = 0; dy < block_; ++dy)
                for (int dx = 0; dx < block_; ++dx) {
                    const std::size_t i = static_cast<std::size_t>(p.y + dy) * width_ + (p.x + dx);
                    wsum_[i] += g.weight;
                    mean_[i] += (g.weight / wsum_[i]) * (est[dy * block_ + dx] - mean_[i]);
                }
        }
    }

    Image result(const Image& like) const {
        Image out(like.width(), like.height(), 0.0, like.pixel_pitch_um());
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!(wsum_[i] > 0.0)) throw ProcessingError("denoise", "pixel not covered by any block");
            out[i] = std::clamp(mean_[i], 0.0, 1.0);
        }
        return out;
    }

private:
    int block_;
    std::size_t width_;
    std::vector<double> mean_;
    std::vector<double> wsum_;
};

// Runs `make(ref_index)` for every reference block, in parallel batches, and
// aggregates the estimates strictly in reference order.
template <typename MakeGroup>
Image collaborative_filter(const Image& like, const Bm3dParams& p, MakeGroup&& make) {
    const auto xs = reference_grid(like.width(), p.block, p.match_step);
    const auto ys = reference_grid(like.height(), p.block, p.match_step);
    std::vector<BlockPos> refs;
    refs.reserve(xs.size() * ys.size());
    for (int y : ys)
        for (int x : xs) refs.push_back({x, y});

    unsigned threads = p.threads > 0 ? static_cast<unsigned>(p.threads) : std::thread::hardware_concurrency();
    threads = std::max(1u, threads);
    const std::size_t batch = std::max<std::size_t>(64, static_cast<std::size_t>(threads) * 16);

    Aggregator agg(like.dims(), p.block);
    std::vector<GroupEstimate> results(batch);
    for (std::size_t start = 0; start < refs.size(); start += batch) {
        const std::size_t count = std::min(batch, refs.size() - start);
        auto work = [&](std::size_t t) {
            for (std::size_t k = t; k < count; k += threads) results[k] = make(refs[start + k]);
        };
        if (threads == 1) {
            work(0);
        } else {
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
            for (auto& th : pool) th.join();
        }
        for (std::size_t k = 0; k < count; ++k) agg.add(results[k]);
    }
    return agg.result(like);
}

inline void check_input(const Image& img, const Bm3dParams& p) {
    p.validate();
    if (img.width() < p.block || img.height() < p.block)
        throw ProcessingError("denoise", "image " + to_string(img.dims()) + " is smaller than the " +
                                             std::to_string(p.block) + "-px block");
}

// Mean-free block and its mean.
inline double load_block(const Image& img, BlockPos pos, int n, double* out) {
    for (int dy = 0; dy < n; ++dy)
        for (int dx = 0; dx < n; ++dx) out[dy * n + dx] = img(pos.x + dx, pos.y + dy);
    const double mean = pairwise_sum(out, static_cast<std::size_t>(n) * n) / static_cast<double>(n * n);
    for (int i = 0; i < n * n; ++i) out[i] -= mean;
    return mean;
}

}  // namespace detail

// Blocks similar to the one at `ref`, sorted by mean squared distance (ties in
// row-major order), reference first, at most max_group entries. Candidates
// further than `threshold` are dropped.
inline std::vector<BlockPos> block_match(const Image& img, BlockPos ref, const Bm3dParams& p, double threshold) {
    const int n = p.block;
    if (ref.x < 0 || ref.y < 0 || ref.x + n > img.width() || ref.y + n > img.height())
        throw ProcessingError("denoise", "reference block outside image");
    const int x0 = std::max(0, ref.x - p.search_window), x1 = std::min(img.width() - n, ref.x + p.search_window);
    const int y0 = std::max(0, ref.y - p.search_window), y1 = std::min(img.height() - n, ref.y + p.search_window);

    struct Cand {
        double d;
        int y, x;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<std::size_t>(x1 - x0 + 1) * (y1 - y0 + 1));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (x == ref.x && y == ref.y) continue;
            const double d = detail::block_distance(img, ref, {x, y}, n);
            if (d <= threshold) cands.push_back({d, y, x});
        }
    auto less = [](const Cand& a, const Cand& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    };
    const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(p.max_group - 1));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), less);

    std::vector<BlockPos> out;
    out.reserve(keep + 1);
    out.push_back(ref);
    for (std::size_t i = 0; i < keep; ++i) out.push_back({cands[i].x, cands[i].y});
    return out;
}

inline std::vector<BlockPos> block_match(const Image& img, BlockPos ref, const Bm3dParams& p) {
    return block_match(img, ref, p, p.match_thresh_stage1);
}

// Hard-thresholding stage.
inline Image bm3d_stage1(const Image& noisy, const Bm3dParams& p) {
    detail::check_input(noisy, p);
    const int n = p.block;
    const std::size_t bb = static_cast<std::size_t>(n) * n;
    const detail::Dct dct(n);
    const double thr = p.hard_tau * p.sigma;

    return detail::collaborative_filter(noisy, p, [&](BlockPos ref) {
        detail::GroupEstimate g;
        g.positions = block_match(noisy, ref, p, p.match_thresh_stage1);
        g.positions.resize(detail::largest_pow2_at_most(g.positions.size()));
        const std::size_t m = g.positions.size();

        std::vector<double> coefs(m * bb), means(m), tmp(std::max(bb, m)), col(m);
        for (std::size_t j = 0; j < m; ++j) {
            double* blk = coefs.data() + j * bb;
            means[j] = detail::load_block(noisy, g.positions[j], n, blk);
            dct.forward(blk, tmp.data());
        }
        std::size_t retained = m;  // block DCs are always kept
        for (std::size_t k = 1; k < bb; ++k) {
            for (std::size_t j = 0; j < m; ++j) col[j] = coefs[j * bb + k];
            detail::haar_forward(col.data(), m, tmp.data());
            for (double& c : col) {
                if (std::abs(c) < thr) c = 0.0;
                else ++retained;
            }
            detail::haar_inverse(col.data(), m, tmp.data());
            for (std::size_t j = 0; j < m; ++j) coefs[j * bb + k] = col[j];
        }
        g.pixels.resize(m * bb);
        for (std::size_t j = 0; j < m; ++j) {
            double* blk = coefs.data() + j * bb;
            blk[0] = 0.0;
            dct.inverse(blk, tmp.data());
            for (std::size_t i = 0; i < bb; ++i) g.pixels[j * bb + i] = means[j] + blk[i];
        }
        g.weight = 1.0 / (1.0 + static_cast<double>(retained));
        return g;
    });
}

// Wiener stage driven by a pilot (stage-1) estimate.
inline Image bm3d_stage2(const Image& noisy, const Image& pilot, const Bm3dParams& p) {
    detail::check_input(noisy, p);
    if (pilot.dims() != noisy.dims()) throw ProcessingError("denoise", "pilot estimate dimensions differ");
    const int n = p.block;
    const std::size_t bb = static_cast<std::size_t>(n) * n;
    const detail::Dct dct(n);
    const double s2 = p.sigma * p.sigma;

    return detail::collaborative_filter(noisy, p, [&](BlockPos ref) {
        detail::GroupEstimate g;
        g.positions = block_match(pilot, ref, p, p.match_thresh_stage2);
        g.positions.resize(detail::largest_pow2_at_most(g.positions.size()));
        const std::size_t m = g.positions.size();

        std::vector<double> noisy_c(m * bb), pilot_c(m * bb), means(m), pilot_means(m), tmp(std::max(bb, m)), cn(m),
            cp(m);
        for (std::size_t j = 0; j < m; ++j) {
            means[j] = detail::load_block(noisy, g.positions[j], n, noisy_c.data() + j * bb);
            dct.forward(noisy_c.data() + j * bb, tmp.data());
            pilot_means[j] = detail::load_block(pilot, g.positions[j], n, pilot_c.data() + j * bb);
            dct.forward(pilot_c.data() + j * bb, tmp.data());
        }
        // Block means: the group mean passes unchanged, deviations from it are
        // Wiener-shrunk like any other coefficient.
        for (std::size_t j = 0; j < m; ++j) {
            cn[j] = means[j] * n;
            cp[j] = pilot_means[j] * n;
        }
        detail::haar_forward(cn.data(), m, tmp.data());
        detail::haar_forward(cp.data(), m, tmp.data());
        double energy = 1.0;
        for (std::size_t j = 1; j < m; ++j) {
            const double e = cp[j] * cp[j];
            const double shrink = e / (e + s2);
            cn[j] *= shrink;
            energy += shrink * shrink;
        }
        if (m > 1) {
            detail::haar_inverse(cn.data(), m, tmp.data());
            for (std::size_t j = 0; j < m; ++j) means[j] = cn[j] / n;
        }
        for (std::size_t k = 1; k < bb; ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                cn[j] = noisy_c[j * bb + k];
                cp[j] = pilot_c[j * bb + k];
            }
            detail::haar_forward(cn.data(), m, tmp.data());
            detail::haar_forward(cp.data(), m, tmp.data());
            for (std::size_t j = 0; j < m; ++j) {
                const double e = cp[j] * cp[j];
                const double shrink = e / (e + s2);
                cn[j] *= shrink;
                energy += shrink * shrink;
            }
            detail::haar_inverse(cn.data(), m, tmp.data());
            for (std::size_t j = 0; j < m; ++j) noisy_c[j * bb + k] = cn[j];
        }
        g.pixels.resize(m * bb);
        for (std::size_t j = 0; j < m; ++j) {
            double* blk = noisy_c.data() + j * bb;
            blk[0] = 0.0;
            dct.inverse(blk, tmp.data());
            for (std::size_t i = 0; i < bb; ++i) g.pixels[j * bb + i] = means[j] + blk[i];
        }
        g.weight = 1.0 / (1.0 + s2 * energy);
        return g;
    });
}

// Full two-stage denoiser.
inline Image bm3d(const Image& noisy, const Bm3dParams& p = {}) {
    const Image basic = bm3d_stage1(noisy, p);
    return bm3d_stage2(noisy, basic, p);
}

inline double psnr(const Image& estimate, const Image& reference, double peak = 1.0) {
    if (estimate.dims() != reference.dims()) throw ProcessingError("denoise", "PSNR of mismatched images");
    double mse = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double d = estimate[i] - reference[i];
        mse += d * d;
    }
    mse /= static_cast<double>(estimate.size());
    return mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(peak * peak / mse);
}

}  // namespace cellmorph
