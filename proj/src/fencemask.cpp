#include "defence/fencemask.hpp"

#include "defence/error.hpp"
#include "defence/filters.hpp"
#include "defence/log.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace defence::fencemask {

std::size_t ScribbleMap::count(Scribble s) const
{
    return static_cast<std::size_t>(std::count(label.begin(), label.end(), s));
}

BinaryMask ScribbleMap::support(Scribble s) const
{
    BinaryMask m(height, width);
    for (std::size_t i = 0; i < label.size(); ++i)
        m.set(i, label[i] == s);
    return m;
}

BinaryMask near_layer_mask(const stereo::DisparityMap& dm)
{
    constexpr int bins = 64;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::size_t n_valid = 0;
    for (std::size_t i = 0; i < dm.disparity.size(); ++i)
        if (dm.valid[i]) {
            lo = std::min(lo, dm.disparity[i]);
            hi = std::max(hi, dm.disparity[i]);
            ++n_valid;
        }
    if (n_valid == 0)
        throw std::invalid_argument("near_layer_mask: disparity map has no valid pixel");

    BinaryMask mask(dm.height, dm.width);
    if (hi - lo < 1e-12) {
        log_warning("near_layer_mask: constant disparity, no near layer can be separated");
        return mask;
    }

    auto bin_of = [&](double v) { return std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins)); };
    std::array<double, bins> hist{};
    for (std::size_t i = 0; i < dm.disparity.size(); ++i)
        if (dm.valid[i])
            hist[static_cast<std::size_t>(bin_of(dm.disparity[i]))] += 1.0;

    // Otsu: maximize w0 w1 (m0 - m1)^2 over splits after bin t.
    double total_mean = 0.0;
    for (int b = 0; b < bins; ++b)
        total_mean += b * hist[static_cast<std::size_t>(b)];
    const double total = static_cast<double>(n_valid);
    double w0 = 0.0;
    double sum0 = 0.0;
    double best = -1.0;
    int split = 0;
    for (int t = 0; t < bins - 1; ++t) {
        w0 += hist[static_cast<std::size_t>(t)];
        sum0 += t * hist[static_cast<std::size_t>(t)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0)
            continue;
        const double m0 = sum0 / w0;
        const double m1 = (total_mean - sum0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            split = t;
        }
    }
    for (std::size_t i = 0; i < dm.disparity.size(); ++i)
        mask.set(i, dm.valid[i] && bin_of(dm.disparity[i]) > split);
    return mask;
}

ScribbleMap generate_scribbles(const BinaryMask& raw, int dilate_r, int erode_r, double canny_low, double canny_high)
{
    if (raw.none())
        throw std::invalid_argument("generate_scribbles: raw fence mask is empty");
    if (raw.all())
        throw std::invalid_argument("generate_scribbles: raw fence mask covers the whole image");

    // Columns beyond the left and right edges count as background, so a dilated region cut off by those
    // edges still gets a contour there. Rows are replicated: wires running off the top or bottom stay open.
    constexpr int pad = 4;
    const int h = raw.height();
    const int w = raw.width();
    const BinaryMask dilated = imaging::dilate(raw, dilate_r);
    Image padded(h, w + 2 * pad, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            padded.at(r, c + pad) = dilated.at(r, c) ? 1.0 : 0.0;
    const BinaryMask edges = imaging::canny_edges(padded, canny_low, canny_high);
    // Non-maximum suppression may put that contour just outside the frame; fold it back onto the edge column.
    BinaryMask background(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            bool edge = edges.at(r, c + pad);
            if (c == 0)
                edge = edge || edges.at(r, pad - 1);
            if (c == w - 1)
                edge = edge || edges.at(r, w + pad);
            background.set(r, c, edge && !raw.at(r, c));
        }
    BinaryMask foreground = imaging::erode(raw, erode_r);
    if (foreground.none() && erode_r > 1) {
        log_warning("generate_scribbles: erosion removed every foreground pixel, retrying with radius 1");
        foreground = imaging::erode(raw, 1);
    }
    if (foreground.none())
        throw std::runtime_error("generate_scribbles: no foreground scribbles survive erosion (mask too thin)");
    if (background.none())
        throw std::runtime_error("generate_scribbles: no background scribbles (dilated mask has no edges)");

    ScribbleMap out(raw.height(), raw.width());
    for (std::size_t i = 0; i < out.label.size(); ++i) {
        const bool fg = foreground[i];
        const bool bg = background[i];
        if (fg && !bg)
            out.label[i] = Scribble::foreground;
        else if (bg && !fg)
            out.label[i] = Scribble::background;
    }
    return out;
}

Eigen::SparseMatrix<double> matting_laplacian(const Image& gray, double eps)
{
    if (gray.channels() != 1)
        throw std::invalid_argument("matting_laplacian: single-channel image required");
    const int h = gray.height();
    const int w = gray.width();
    const std::size_t n = gray.pixel_count();
    // Each pixel couples with the 5x5 neighbourhood covered by the 3x3 windows containing it.
    std::vector<double> band(n * 25, 0.0);
    constexpr double window_size = 9.0;

    for (int r = 1; r + 1 < h; ++r)
        for (int c = 1; c + 1 < w; ++c) {
            std::array<double, 9> v{};
            double mean = 0.0;
            for (int k = 0; k < 9; ++k) {
                v[static_cast<std::size_t>(k)] = gray.at(r + k / 3 - 1, c + k % 3 - 1);
                mean += v[static_cast<std::size_t>(k)];
            }
            mean /= window_size;
            double var = 0.0;
            for (double x : v)
                var += (x - mean) * (x - mean);
            var /= window_size;
            const double inv = 1.0 / (var + eps / window_size);
            for (int a = 0; a < 9; ++a) {
                const int ra = r + a / 3 - 1;
                const int ca = c + a % 3 - 1;
                const std::size_t row = static_cast<std::size_t>(ra) * w + ca;
                for (int b = 0; b < 9; ++b) {
                    const int rb = r + b / 3 - 1;
                    const int cb = c + b % 3 - 1;
                    const double val = (a == b ? 1.0 : 0.0) -
                                       (1.0 + (v[static_cast<std::size_t>(a)] - mean) *
                                                  (v[static_cast<std::size_t>(b)] - mean) * inv) /
                                           window_size;
                    band[row * 25 + static_cast<std::size_t>((rb - ra + 2) * 5 + (cb - ca + 2))] += val;
                }
            }
        }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(n * 25);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t row = static_cast<std::size_t>(r) * w + c;
            for (int k = 0; k < 25; ++k) {
                const double val = band[row * 25 + static_cast<std::size_t>(k)];
                if (val == 0.0)
                    continue;
                const int rr = r + k / 5 - 2;
                const int cc = c + k % 5 - 2;
                triplets.emplace_back(static_cast<int>(row), rr * w + cc, val);
            }
        }
    Eigen::SparseMatrix<double> L(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    L.setFromTriplets(triplets.begin(), triplets.end());
    return L;
}

AlphaMap solve_alpha(const Image& img, const ScribbleMap& scribbles, const MattingParams& params)
{
    if (img.height() != scribbles.height || img.width() != scribbles.width)
        throw std::invalid_argument("solve_alpha: scribble map size mismatch");
    if (scribbles.count(Scribble::foreground) == 0 || scribbles.count(Scribble::background) == 0)
        throw std::invalid_argument("solve_alpha: scribbles must contain both foreground and background");

    const Image gray = imaging::to_luma(img);
    Eigen::SparseMatrix<double> A = matting_laplacian(gray, params.eps);
    const auto n = static_cast<Eigen::Index>(gray.pixel_count());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd guess = Eigen::VectorXd::Constant(n, 0.5);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scribble s = scribbles.label[static_cast<std::size_t>(i)];
        if (s == Scribble::unknown)
            continue;
        const double value = s == Scribble::foreground ? 1.0 : 0.0;
        A.coeffRef(i, i) += params.gamma;
        rhs[i] = params.gamma * value;
        guess[i] = value;
    }
    A.makeCompressed();

    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(params.tolerance);
    cg.setMaxIterations(params.max_iterations);
    cg.compute(A);
    Eigen::VectorXd x = cg.solveWithGuess(rhs, guess);

    AlphaMap out;
    out.height = gray.height();
    out.width = gray.width();
    out.iterations = static_cast<int>(cg.iterations());
    const double rhs_norm = rhs.norm();
    out.residual = rhs_norm > 0 ? (rhs - A * x).norm() / rhs_norm : 0.0;
    if (!x.allFinite() || out.residual > params.failure_residual) {
        std::ostringstream msg;
        msg << "solve_alpha: conjugate gradient stopped at relative residual " << out.residual << " after "
            << out.iterations << " iterations";
        throw NumericalError(msg.str());
    }

    out.alpha.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scribble s = scribbles.label[static_cast<std::size_t>(i)];
        double a = std::clamp(x[i], 0.0, 1.0);
        if (s == Scribble::foreground)
            a = 1.0;
        else if (s == Scribble::background)
            a = 0.0;
        out.alpha[static_cast<std::size_t>(i)] = a;
    }
    return out;
}

BinaryMask threshold_alpha(const AlphaMap& alpha, double t)
{
    if (!(t > 0.0 && t < 1.0))
        throw std::invalid_argument("threshold_alpha: threshold must lie in (0,1)");
    BinaryMask m(alpha.height, alpha.width);
    for (std::size_t i = 0; i < alpha.alpha.size(); ++i)
        m.set(i, alpha.alpha[i] >= t);
    return m;
}

BinaryMask mask_for_frame(const BinaryMask& fence, int safety_dilate)
{
    if (safety_dilate < 0)
        throw std::invalid_argument("mask_for_frame: safety margin must be >= 0");
    if (safety_dilate == 0)
        return fence.complement();
    return imaging::dilate(fence, safety_dilate).complement();
}

Image render_scribbles(const Image& img, const ScribbleMap& scribbles)
{
    const Image gray = imaging::to_luma(img);
    Image out(gray.height(), gray.width(), 3);
    for (int r = 0; r < gray.height(); ++r)
        for (int c = 0; c < gray.width(); ++c) {
            const double g = 0.5 * gray.at(r, c);
            switch (scribbles.at(r, c)) {
            case Scribble::foreground:
                out.at(r, c, 1) = 1.0;
                break;
            case Scribble::background:
                out.at(r, c, 2) = 1.0;
                break;
            case Scribble::unknown:
                out.at(r, c, 0) = out.at(r, c, 1) = out.at(r, c, 2) = g;
                break;
            }
        }
    return out;
}

Image render_alpha(const AlphaMap& alpha)
{
    return Image::from_values(alpha.height, alpha.width, 1, alpha.alpha);
}

FenceDetection detect_fence(const Image& img, const stereo::DisparityMap& dm, const FenceParams& params)
{
    FenceDetection out;
    out.raw = near_layer_mask(dm);
    out.scribbles = generate_scribbles(out.raw, params.dilate_radius, params.erode_radius, params.canny_low,
                                       params.canny_high);
    out.alpha = solve_alpha(img, out.scribbles, params.matting);
    out.fence = threshold_alpha(out.alpha, params.alpha_threshold);
    return out;
}

} // namespace defence::fencemask
