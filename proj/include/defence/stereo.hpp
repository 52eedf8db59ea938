#pragma once

#include "defence/image.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace defence::stereo {

using imaging::Image;

enum class DescriptorKind { census, zeromean };

DescriptorKind parse_descriptor_kind(const std::string& name);
const char* to_string(DescriptorKind kind);

constexpr int kDefaultPatchRadius = 4; // 9x9 patches

/// census: (2r+1)^2 - 1 entries in {-1,+1}, +1 where neighbour >= centre.
/// zeromean: (2r+1)^2 entries, patch minus its mean.
/// The patch must lie inside the image; throws std::invalid_argument otherwise.
std::vector<double> extract_descriptor(const Image& img, int row, int col, DescriptorKind kind,
                                       int patch_radius = kDefaultPatchRadius);

/// Negative cosine similarity in [-1, 1]; 0 when either norm is below 1e-12.
double matching_cost(std::span<const double> dl, std::span<const double> dr);

/// Costs for disparities 0..d_max inclusive, stored pixel-major.
class CostVolume {
public:
    CostVolume() = default;
    CostVolume(int height, int width, int d_max, double fill = 1.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int d_max() const { return d_max_; }
    int num_disparities() const { return d_max_ + 1; }

    double& at(int row, int col, int d) { return cost_[index(row, col, d)]; }
    double at(int row, int col, int d) const { return cost_[index(row, col, d)]; }
    std::span<const double> values() const { return cost_; }

private:
    std::size_t index(int row, int col, int d) const
    {
        return (static_cast<std::size_t>(row) * width_ + col) * (d_max_ + 1) + d;
    }

    int height_ = 0;
    int width_ = 0;
    int d_max_ = 0;
    std::vector<double> cost_;
};

/// Sentinel cost for matches whose right-image patch leaves the frame.
constexpr double kOutOfFrameCost = 1.0;

/// cost(r,c,d) = matching_cost(left descriptor at (r,c), right descriptor at (r,c-d)).
/// Images are padded by replicating the border before descriptors are taken.
CostVolume build_cost_volume(const Image& left, const Image& right, int d_max, DescriptorKind kind,
                             int patch_radius = kDefaultPatchRadius);

/// Per-slice box mean of side 2*radius+1 with replicate boundary.
CostVolume aggregate_costs(const CostVolume& cv, int radius);

struct DisparityMap {
    int height = 0;
    int width = 0;
    int d_max = 0;
    std::vector<double> disparity;
    std::vector<std::uint8_t> valid;

    DisparityMap() = default;
    DisparityMap(int h, int w, int dmax)
        : height(h), width(w), d_max(dmax), disparity(static_cast<std::size_t>(h) * w, 0.0),
          valid(static_cast<std::size_t>(h) * w, 0)
    {
    }

    std::size_t index(int row, int col) const { return static_cast<std::size_t>(row) * width + col; }
    double at(int row, int col) const { return disparity[index(row, col)]; }
    bool is_valid(int row, int col) const { return valid[index(row, col)] != 0; }
    void set(int row, int col, double d, bool ok)
    {
        disparity[index(row, col)] = ok ? d : 0.0;
        valid[index(row, col)] = ok ? 1 : 0;
    }
    std::size_t valid_count() const;

    friend bool operator==(const DisparityMap&, const DisparityMap&) = default;
};

/// Smallest disparity achieving the minimum cost; all pixels valid.
DisparityMap winner_take_all(const CostVolume& cv);

/// Keeps (r,c) valid iff the right-referenced disparity at (r, c - round(dl))
/// is in frame, valid, and within tol of dl(r,c).
DisparityMap left_right_check(const DisparityMap& dl, const DisparityMap& dr, double tol = 1.0);

/// Fills invalid pixels with the (lower) median of the valid pixels in the
/// (2r+1)^2 window when at least 3 exist, then applies one 3x3 median over
/// the valid pixels.
DisparityMap median_fill(const DisparityMap& dm, int radius = 2);

Image flip_horizontal(const Image& img);
CostVolume flip_horizontal(const CostVolume& cv);
DisparityMap flip_horizontal(const DisparityMap& dm);

struct StereoParams {
    int d_max = 64;
    DescriptorKind kind = DescriptorKind::census;
    int patch_radius = kDefaultPatchRadius;
    int aggregation_radius = 3;
    double lr_tolerance = 1.0;
    int median_radius = 2;
};

struct DisparityPair {
    DisparityMap left;  // left image as reference, matched leftward in the right image
    DisparityMap right; // right image as reference, matched rightward in the left image
};

/// Cost computation, aggregation, winner-take-all, left-right check and
/// median filling for both reference views. Inputs are single-channel.
DisparityPair compute_disparity(const Image& left, const Image& right, const StereoParams& params);

} // namespace defence::stereo
