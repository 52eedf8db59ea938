#pragma once

#include "defence/image.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace defence::flow {

using imaging::BinaryMask;
using imaging::Image;

/// Per-pixel displacement on the reference grid: ref(p) ~ tgt(p + (u, v)).
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<double> u; // horizontal, px
    std::vector<double> v; // vertical, px

    FlowField() = default;
    FlowField(int h, int w)
        : height(h), width(w), u(static_cast<std::size_t>(h) * w, 0.0), v(static_cast<std::size_t>(h) * w, 0.0)
    {
    }
    std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
};

/// Fence pixels are filled with the mean of the nearest non-fence pixels
/// (growing square window), then the band dilate(fence, ceil(3 sigma)) is
/// replaced by the Gaussian-blurred filled image. Pixels off the band are
/// returned untouched.
Image preblur_fences(const Image& img, const BinaryMask& fence, double sigma = 2.0);

struct FlowParams {
    int levels = 4;
    double alpha = 15.0;  // smoothness weight, on intensities scaled to [0,255]
    int iterations = 200; // Jacobi sweeps per level
    double max_magnitude = 64.0;
};

/// Coarse-to-fine Horn-Schunck on single-channel images.
FlowField estimate_flow(const Image& ref, const Image& tgt, const FlowParams& params = {});

/// Bilinear resampling operator: output pixel (r,c) reads the source at
/// (r + v, c + u). Rows whose sample leaves the frame are empty.
class WarpOperator {
public:
    struct Tap {
        std::uint32_t index = 0;
        double weight = 0.0;
    };

    WarpOperator() = default;
    static WarpOperator identity(int height, int width);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const { return counts_.size(); }

    int tap_count(std::size_t pixel) const { return counts_[pixel]; }
    const Tap& tap(std::size_t pixel, int k) const { return taps_[pixel][static_cast<std::size_t>(k)]; }
    bool out_of_bounds(std::size_t pixel) const { return counts_[pixel] == 0; }
    bool is_identity() const;

    /// Sparse product per channel.
    Image apply(const Image& img) const;
    /// Transpose product per channel.
    Image apply_adjoint(const Image& img) const;

private:
    friend WarpOperator build_warp(const FlowField& flow);

    int height_ = 0;
    int width_ = 0;
    std::vector<std::array<Tap, 4>> taps_;
    std::vector<std::uint8_t> counts_;
};

WarpOperator build_warp(const FlowField& flow);

} // namespace defence::flow
