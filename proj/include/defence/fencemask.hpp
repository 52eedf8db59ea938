#pragma once

#include "defence/image.hpp"
#include "defence/stereo.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <vector>

namespace defence::fencemask {

using imaging::BinaryMask;
using imaging::Image;

enum class Scribble : std::uint8_t { unknown = 0, foreground = 1, background = 2 };

struct ScribbleMap {
    int height = 0;
    int width = 0;
    std::vector<Scribble> label;

    ScribbleMap() = default;
    ScribbleMap(int h, int w) : height(h), width(w), label(static_cast<std::size_t>(h) * w, Scribble::unknown) {}

    Scribble at(int row, int col) const { return label[static_cast<std::size_t>(row) * width + col]; }
    std::size_t count(Scribble s) const;
    BinaryMask support(Scribble s) const;
};

struct AlphaMap {
    int height = 0;
    int width = 0;
    std::vector<double> alpha;
    double residual = 0.0; // relative residual reached by the linear solve
    int iterations = 0;

    double at(int row, int col) const { return alpha[static_cast<std::size_t>(row) * width + col]; }
};

/// Otsu split (64 bins) of the valid disparities; true where a pixel falls
/// in the far-disparity (near-to-camera) class. Invalid pixels are false.
/// A constant map yields an empty mask and a warning.
BinaryMask near_layer_mask(const stereo::DisparityMap& dm);

/// Background scribbles: Canny edges of dilate(raw, dilate_r), taken with
/// background beyond the left and right edges, minus the raw mask.
/// Foreground scribbles: erode(raw, erode_r), retried with radius 1 if empty.
/// Pixels claimed by both become unknown.
ScribbleMap generate_scribbles(const BinaryMask& raw, int dilate_r = 5, int erode_r = 2, double canny_low = 0.1,
                               double canny_high = 0.3);

/// Matting Laplacian over all 3x3 windows of a single-channel image.
Eigen::SparseMatrix<double> matting_laplacian(const Image& gray, double eps);

struct MattingParams {
    double eps = 1e-5;
    double gamma = 1e2;
    double tolerance = 1e-6;
    double failure_residual = 1e-4;
    int max_iterations = 2000;
};

/// Solves (L + gamma S) alpha = gamma s by preconditioned conjugate gradient,
/// clamps to [0,1] and pins scribbled pixels. Colour input is reduced to luma.
/// Throws NumericalError if the relative residual stays above failure_residual.
AlphaMap solve_alpha(const Image& img, const ScribbleMap& scribbles, const MattingParams& params = {});

/// True where alpha >= t (the fence).
BinaryMask threshold_alpha(const AlphaMap& alpha, double t = 0.5);

/// Visibility for the data term: complement(dilate(fence, safety_dilate)).
BinaryMask mask_for_frame(const BinaryMask& fence, int safety_dilate = 1);

/// Foreground green, background blue, unknown pixels show the dimmed image.
Image render_scribbles(const Image& img, const ScribbleMap& scribbles);
Image render_alpha(const AlphaMap& alpha);

struct FenceParams {
    int dilate_radius = 5;
    int erode_radius = 2;
    double canny_low = 0.1;
    double canny_high = 0.3;
    double alpha_threshold = 0.5;
    MattingParams matting;
};

struct FenceDetection {
    BinaryMask raw;
    ScribbleMap scribbles;
    AlphaMap alpha;
    BinaryMask fence;
};

/// near layer -> scribbles -> matting -> threshold for one view.
FenceDetection detect_fence(const Image& img, const stereo::DisparityMap& dm, const FenceParams& params);

} // namespace defence::fencemask
