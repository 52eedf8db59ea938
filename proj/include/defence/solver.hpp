#pragma once

#include "defence/flow.hpp"
#include "defence/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace defence::solver {

using imaging::BinaryMask;
using imaging::GradientField;
using imaging::Image;

/// One observed view: y = O W x + n, with O the visibility mask.
struct Frame {
    Image y;
    BinaryMask visible;
    flow::WarpOperator warp;
};

struct ObservationSet {
    std::vector<Frame> frames;

    /// Throws std::invalid_argument unless there is at least one frame, all
    /// frames share dimensions and frame 0 has an identity warp.
    void validate() const;
};

enum class TvKind { isotropic, anisotropic };

struct SolverConfig {
    double mu = 0.01;     // TV weight
    double lambda = 0.1;  // splitting penalty
    int outer_iters = 100;
    int sd_iters = 10;    // steepest-descent steps per outer iteration
    std::optional<double> sd_step; // empty: 1 / (power-method estimate of the Lipschitz constant)
    double tol = 1e-5;    // stop when ||x_k+1 - x_k|| / ||x_k|| < tol
    TvKind tv = TvKind::isotropic;

    void validate() const;
};

struct SolverState {
    Image x; // unclamped iterate
    GradientField d;
    GradientField b;
    int k = 0;
    double step = 0.0;
    std::vector<double> energy_trace;    // entry 0 is the energy of x0
    std::vector<double> relative_change; // aligned with energy_trace, 0 for entry 0
};

struct SolveResult {
    Image x; // clamped to [0,1]
    SolverState state;
};

/// O W x + n, with n ~ N(0, noise_sigma^2) from a generator seeded by seed.
Image degrade(const Image& x, const BinaryMask& visible, const flow::WarpOperator& warp, double noise_sigma,
              std::uint64_t seed);

/// 1/2 sum_m ||O_m (y_m - W_m x)||^2 + mu TV(x), TV summed over channels.
double energy(const Image& x, const ObservationSet& obs, double mu, TvKind tv = TvKind::isotropic);

/// Gradient in x of 1/2 sum_m ||O_m (y_m - W_m x)||^2 + lambda/2 ||d - grad(x) - b||^2.
Image data_gradient(const Image& x, const ObservationSet& obs, const GradientField& d, const GradientField& b,
                    double lambda);

/// Soft thresholding of each gradient vector (isotropic) or component (anisotropic).
GradientField shrink(const GradientField& g, double t, TvKind tv = TvKind::isotropic);

/// Largest eigenvalue of sum_m W_m^T O_m W_m + lambda grad^T grad by power iteration.
double estimate_lipschitz(const ObservationSet& obs, double lambda, int iterations = 20);

/// Split Bregman iteration: steepest descent on the quadratic sub-problem,
/// shrinkage with threshold mu/lambda, then b += grad(x) - d.
/// Throws NumericalError on a non-finite iterate or when the energy exceeds
/// ten times its initial value.
SolveResult solve(const ObservationSet& obs, const SolverConfig& cfg, const Image& x0);

/// Occluded pixels take the mean of visible pixels in a window x window box
/// (grown until one is found); visible pixels are copied.
Image fill_occluded(const Image& y, const BinaryMask& visible, int window = 11);

/// iteration,energy,relative_change
void write_energy_csv(const std::filesystem::path& path, const SolverState& state);

} // namespace defence::solver
