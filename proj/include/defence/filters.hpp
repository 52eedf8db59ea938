#pragma once

#include "defence/image.hpp"

#include <vector>

namespace defence::imaging {

/// Normalized 1-D Gaussian of radius ceil(3*sigma); weights sum to 1.
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur, horizontal pass then vertical, replicate boundary, per channel.
Image gaussian_blur(const Image& img, double sigma);

// Square structuring element of side 2*radius+1. Out-of-frame neighbours
// count as false for both operators, so erosion eats into the border.
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);

/// Canny detector on a single-channel image: Gaussian smoothing (sigma 1),
/// Sobel gradients, non-maximum suppression, 8-connected hysteresis.
/// Thresholds apply to the Sobel magnitude divided by 4, so an ideal unit
/// step responds with 1.
BinaryMask canny_edges(const Image& img, double low, double high);

/// Forward differences with replicate boundary.
GradientField grad(const Image& img);

/// Exact negative adjoint of grad: <grad(u), g> = -<u, div(g)>.
Image div(const GradientField& g);

} // namespace defence::imaging
