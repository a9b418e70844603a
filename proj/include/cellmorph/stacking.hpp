#pragma once

#include <algorithm>
#include <vector>

#include "cellmorph/image.hpp"

namespace cellmorph {

// Per-pixel arithmetic mean over the frames of a stack. Samples are summed in
// sorted order so the result does not depend on frame order, and the mean is
// clamped to the per-pixel [min, max] to absorb rounding.
inline Image stack_average(const RasterStack& stack) {
    const Dims d = stack.dims();
    const std::size_t n = stack.frame_count();
    Image out(d.width, d.height, 0.0, stack.pixel_pitch_um());
    std::vector<double> samples(n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t f = 0; f < n; ++f) samples[f] = stack.frames()[f][i];
        std::sort(samples.begin(), samples.end());
        double sum = 0.0;
        for (double v : samples) sum += v;
        out[i] = std::clamp(sum / static_cast<double>(n), samples.front(), samples.back());
    }
    return out;
}

}  // namespace cellmorph
