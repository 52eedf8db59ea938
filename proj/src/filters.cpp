#include "defence/filters.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace defence::imaging {

std::vector<double> gaussian_kernel(double sigma)
{
    if (!std::isfinite(sigma) || sigma <= 0.0)
        throw std::invalid_argument("gaussian_kernel: sigma must be positive and finite");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k)
        w /= sum;
    return k;
}

Image gaussian_blur(const Image& img, double sigma)
{
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    const int h = img.height();
    const int w = img.width();
    const int nc = img.channels();

    Image tmp(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    s += kernel[static_cast<std::size_t>(k + radius)] * img.at(r, std::clamp(c + k, 0, w - 1), ch);
                tmp.at(r, c, ch) = s;
            }

    Image out(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                double s = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    s += kernel[static_cast<std::size_t>(k + radius)] * tmp.at(std::clamp(r + k, 0, h - 1), c, ch);
                out.at(r, c, ch) = s;
            }
    return out;
}

namespace {

// One separable pass of a square max (dilate) or min (erode) filter with
// out-of-frame samples reading as false.
BinaryMask morph_pass(const BinaryMask& in, int radius, bool horizontal, bool is_dilate)
{
    const int h = in.height();
    const int w = in.width();
    BinaryMask out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            bool acc = !is_dilate;
            for (int k = -radius; k <= radius; ++k) {
                const int rr = horizontal ? r : r + k;
                const int cc = horizontal ? c + k : c;
                const bool v = rr >= 0 && rr < h && cc >= 0 && cc < w && in.at(rr, cc);
                if (is_dilate && v) {
                    acc = true;
                    break;
                }
                if (!is_dilate && !v) {
                    acc = false;
                    break;
                }
            }
            out.set(r, c, acc);
        }
    return out;
}

} // namespace

BinaryMask dilate(const BinaryMask& mask, int radius)
{
    if (radius < 1)
        throw std::invalid_argument("dilate: radius must be >= 1");
    return morph_pass(morph_pass(mask, radius, true, true), radius, false, true);
}

BinaryMask erode(const BinaryMask& mask, int radius)
{
    if (radius < 1)
        throw std::invalid_argument("erode: radius must be >= 1");
    return morph_pass(morph_pass(mask, radius, true, false), radius, false, false);
}

BinaryMask canny_edges(const Image& img, double low, double high)
{
    if (img.channels() != 1)
        throw std::invalid_argument("canny_edges: single-channel image required");
    if (!(low >= 0.0 && low < high && high <= 1.0))
        throw std::invalid_argument("canny_edges: thresholds must satisfy 0 <= low < high <= 1");

    const int h = img.height();
    const int w = img.width();
    const Image smooth = gaussian_blur(img, 1.0);
    auto px = [&](int r, int c) { return smooth.at(std::clamp(r, 0, h - 1), std::clamp(c, 0, w - 1)); };

    std::vector<double> mag(static_cast<std::size_t>(h) * w);
    std::vector<std::uint8_t> dir(mag.size());
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
            const double gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1)) -
                              (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            mag[i] = std::hypot(gx, gy) / 4.0;
            // Quantize the gradient direction to 0, 45, 90 or 135 degrees.
            double angle = std::atan2(gy, gx) * 180.0 / M_PI;
            if (angle < 0)
                angle += 180.0;
            dir[i] = static_cast<std::uint8_t>(static_cast<int>(std::floor((angle + 22.5) / 45.0)) % 4);
        }

    // Neighbour offsets (dr, dc) along the quantized direction.
    static constexpr std::array<std::array<int, 2>, 4> step{{{0, 1}, {1, 1}, {1, 0}, {1, -1}}};
    constexpr double tie_tol = 1e-12;
    auto mag_at = [&](int r, int c) {
        if (r < 0 || r >= h || c < 0 || c >= w)
            return 0.0;
        return mag[static_cast<std::size_t>(r) * w + c];
    };

    // 0 = suppressed, 1 = weak, 2 = strong
    std::vector<std::uint8_t> cls(mag.size(), 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            const double m = mag[i];
            if (m < low || m <= 0.0)
                continue;
            const auto [dr, dc] = step[dir[i]];
            // Plateaus of equal magnitude resolve to the far side of the pair.
            const bool is_max = m >= mag_at(r - dr, c - dc) - tie_tol && m > mag_at(r + dr, c + dc) + tie_tol;
            if (!is_max)
                continue;
            cls[i] = m >= high ? 2 : 1;
        }

    BinaryMask edges(h, w);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < cls.size(); ++i)
        if (cls[i] == 2) {
            edges.set(i, true);
            stack.push_back(i);
        }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int r = static_cast<int>(i / w);
        const int c = static_cast<int>(i % w);
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (rr < 0 || rr >= h || cc < 0 || cc >= w)
                    continue;
                const std::size_t j = static_cast<std::size_t>(rr) * w + cc;
                if (cls[j] == 1 && !edges[j]) {
                    edges.set(j, true);
                    stack.push_back(j);
                }
            }
    }
    return edges;
}

GradientField grad(const Image& img)
{
    const int h = img.height();
    const int w = img.width();
    const int nc = img.channels();
    GradientField g(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                const std::size_t i = g.index(r, c, ch);
                const double v = img.at(r, c, ch);
                g.dx[i] = c + 1 < w ? img.at(r, c + 1, ch) - v : 0.0;
                g.dy[i] = r + 1 < h ? img.at(r + 1, c, ch) - v : 0.0;
            }
    return g;
}

Image div(const GradientField& g)
{
    const int h = g.height;
    const int w = g.width;
    const int nc = g.channels;
    Image out(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < nc; ++ch) {
                double v = 0.0;
                if (c + 1 < w)
                    v += g.dx[g.index(r, c, ch)];
                if (c > 0)
                    v -= g.dx[g.index(r, c - 1, ch)];
                if (r + 1 < h)
                    v += g.dy[g.index(r, c, ch)];
                if (r > 0)
                    v -= g.dy[g.index(r - 1, c, ch)];
                out.at(r, c, ch) = v;
            }
    return out;
}

} // namespace defence::imaging
