#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cellmorph/error.hpp"

namespace cellmorph {

// Field of view of the reference instrument: 256 px across 20 um.
inline constexpr int kDefaultFieldPx = 256;
inline constexpr double kDefaultFieldUm = 20.0;
inline constexpr double kDefaultPixelPitchUm = kDefaultFieldUm / kDefaultFieldPx;
inline constexpr int kDefaultFramesPerField = 7;

struct Dims {
    int width = 0;
    int height = 0;

    std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    friend bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(Dims d) {
    return std::to_string(d.width) + "x" + std::to_string(d.height);
}

// Single-channel intensity grid, row-major, 64-bit samples.
class Image {
public:
    Image() = default;

    Image(int width, int height, double fill = 0.0, double pixel_pitch_um = kDefaultPixelPitchUm)
        : dims_{width, height}, pitch_(pixel_pitch_um), values_(Dims{width, height}.size(), fill) {
        validate();
    }

    Image(int width, int height, std::vector<double> values, double pixel_pitch_um = kDefaultPixelPitchUm)
        : dims_{width, height}, pitch_(pixel_pitch_um), values_(std::move(values)) {
        validate();
    }

    int width() const { return dims_.width; }
    int height() const { return dims_.height; }
    Dims dims() const { return dims_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    double pixel_pitch_um() const { return pitch_; }
    void set_pixel_pitch_um(double pitch) {
        if (!(pitch > 0.0)) throw FormatError("imageio", "pixel pitch must be positive");
        pitch_ = pitch;
    }

    double& operator()(int x, int y) { return values_[index(x, y)]; }
    double operator()(int x, int y) const { return values_[index(x, y)]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(dims_.width) + static_cast<std::size_t>(x);
    }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < dims_.width && y < dims_.height; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    void validate() const {
        if (dims_.width < 0 || dims_.height < 0)
            throw FormatError("imageio", "negative image dimensions");
        if (values_.size() != dims_.size())
            throw FormatError("imageio", "image has " + std::to_string(values_.size()) +
                                             " samples, expected " + std::to_string(dims_.size()));
        if (!(pitch_ > 0.0)) throw FormatError("imageio", "pixel pitch must be positive");
        for (double v : values_)
            if (!std::isfinite(v)) throw FormatError("imageio", "image contains a non-finite sample");
    }

    Dims dims_{};
    double pitch_ = kDefaultPixelPitchUm;
    std::vector<double> values_;
};

// Co-registered raster scans of one field of view.
class RasterStack {
public:
    RasterStack(std::vector<Image> frames, double pixel_pitch_um = kDefaultPixelPitchUm)
        : frames_(std::move(frames)), pitch_(pixel_pitch_um) {
        if (frames_.empty()) throw FormatError("imageio", "raster stack needs at least one frame");
        if (!(pitch_ > 0.0)) throw FormatError("imageio", "pixel pitch must be positive");
        const Dims d = frames_.front().dims();
        for (std::size_t i = 0; i < frames_.size(); ++i) {
            if (frames_[i].dims() != d)
                throw FormatError("imageio", "frame " + std::to_string(i) + " is " + to_string(frames_[i].dims()) +
                                                 ", expected " + to_string(d));
            frames_[i].set_pixel_pitch_um(pitch_);
        }
    }

    std::size_t frame_count() const { return frames_.size(); }
    const std::vector<Image>& frames() const { return frames_; }
    const Image& frame(std::size_t i) const { return frames_.at(i); }
    Dims dims() const { return frames_.front().dims(); }
    double pixel_pitch_um() const { return pitch_; }

private:
    std::vector<Image> frames_;
    double pitch_;
};

}  // namespace cellmorph
