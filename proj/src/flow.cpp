#include "defence/flow.hpp"

#include "defence/filters.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace defence::flow {

Image preblur_fences(const Image& img, const BinaryMask& fence, double sigma)
{
    if (img.height() != fence.height() || img.width() != fence.width())
        throw std::invalid_argument("preblur_fences: mask size mismatch");
    if (fence.all())
        throw std::invalid_argument("preblur_fences: fence mask covers the entire image");
    if (fence.none())
        return img;

    const int h = img.height();
    const int w = img.width();
    const int nc = img.channels();
    Image filled = img;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!fence.at(r, c))
                continue;
            for (int radius = 1;; ++radius) {
                std::vector<double> sum(static_cast<std::size_t>(nc), 0.0);
                int n = 0;
                for (int rr = std::max(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr)
                    for (int cc = std::max(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc)
                        if (!fence.at(rr, cc)) {
                            ++n;
                            for (int ch = 0; ch < nc; ++ch)
                                sum[static_cast<std::size_t>(ch)] += img.at(rr, cc, ch);
                        }
                if (n > 0) {
                    for (int ch = 0; ch < nc; ++ch)
                        filled.at(r, c, ch) = sum[static_cast<std::size_t>(ch)] / n;
                    break;
                }
            }
        }

    const Image blurred = imaging::gaussian_blur(filled, sigma);
    const BinaryMask band = imaging::dilate(fence, static_cast<int>(std::ceil(3.0 * sigma)));
    Image out = img;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (band.at(r, c))
                for (int ch = 0; ch < nc; ++ch)
                    out.at(r, c, ch) = blurred.at(r, c, ch);
    return out;
}

namespace {

constexpr double kIntensityScale = 255.0;

double sample_clamped(const Image& img, double y, double x)
{
    const int h = img.height();
    const int w = img.width();
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = y - y0;
    const double fx = x - x0;
    return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
           fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

Image downsample(const Image& img)
{
    const int h = (img.height() + 1) / 2;
    const int w = (img.width() + 1) / 2;
    Image out(h, w, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k)
                s += img.at(std::min(2 * r + k / 2, img.height() - 1), std::min(2 * c + k % 2, img.width() - 1));
            out.at(r, c) = 0.25 * s;
        }
    return out;
}

FlowField upsample(const FlowField& coarse, int h, int w)
{
    FlowField out(h, w);
    if (coarse.height == 0)
        return out;
    Image cu(coarse.height, coarse.width, 1);
    Image cv(coarse.height, coarse.width, 1);
    std::copy(coarse.u.begin(), coarse.u.end(), cu.values().begin());
    std::copy(coarse.v.begin(), coarse.v.end(), cv.values().begin());
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double y = (r + 0.5) / 2.0 - 0.5;
            const double x = (c + 0.5) / 2.0 - 0.5;
            out.u[out.index(r, c)] = 2.0 * sample_clamped(cu, y, x);
            out.v[out.index(r, c)] = 2.0 * sample_clamped(cv, y, x);
        }
    return out;
}

// Horn-Schunck weighted neighbour average (1/6 edges, 1/12 corners).
double hs_average(const std::vector<double>& f, int h, int w, int r, int c)
{
    auto at = [&](int rr, int cc) {
        return f[static_cast<std::size_t>(std::clamp(rr, 0, h - 1)) * w + std::clamp(cc, 0, w - 1)];
    };
    return (at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1)) / 6.0 +
           (at(r - 1, c - 1) + at(r - 1, c + 1) + at(r + 1, c - 1) + at(r + 1, c + 1)) / 12.0;
}

void refine_level(const Image& ref, const Image& tgt, FlowField& flow, const FlowParams& params)
{
    const int h = ref.height();
    const int w = ref.width();
    const std::size_t n = ref.pixel_count();

    Image warped(h, w, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            warped.at(r, c) = sample_clamped(tgt, r + flow.v[flow.index(r, c)], c + flow.u[flow.index(r, c)]);

    std::vector<double> ix(n), iy(n), it(n);
    auto central = [](const Image& img, int r, int c, bool horizontal) {
        const int h_ = img.height();
        const int w_ = img.width();
        if (horizontal)
            return 0.5 * (img.at(r, std::min(c + 1, w_ - 1)) - img.at(r, std::max(c - 1, 0)));
        return 0.5 * (img.at(std::min(r + 1, h_ - 1), c) - img.at(std::max(r - 1, 0), c));
    };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t i = flow.index(r, c);
            ix[i] = 0.5 * (central(ref, r, c, true) + central(warped, r, c, true));
            iy[i] = 0.5 * (central(ref, r, c, false) + central(warped, r, c, false));
            it[i] = warped.at(r, c) - ref.at(r, c);
        }

    const std::vector<double> u0 = flow.u;
    const std::vector<double> v0 = flow.v;
    const double alpha2 = params.alpha * params.alpha;
    std::vector<double> u_next(n), v_next(n);
    for (int iter = 0; iter < params.iterations; ++iter) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const std::size_t i = flow.index(r, c);
                const double ub = hs_average(flow.u, h, w, r, c);
                const double vb = hs_average(flow.v, h, w, r, c);
                const double t = (ix[i] * (ub - u0[i]) + iy[i] * (vb - v0[i]) + it[i]) /
                                 (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                u_next[i] = ub - ix[i] * t;
                v_next[i] = vb - iy[i] * t;
            }
        flow.u.swap(u_next);
        flow.v.swap(v_next);
    }
    for (std::size_t i = 0; i < n; ++i) {
        flow.u[i] = std::clamp(flow.u[i], -params.max_magnitude, params.max_magnitude);
        flow.v[i] = std::clamp(flow.v[i], -params.max_magnitude, params.max_magnitude);
    }
}

} // namespace

FlowField estimate_flow(const Image& ref, const Image& tgt, const FlowParams& params)
{
    if (ref.channels() != 1 || tgt.channels() != 1)
        throw std::invalid_argument("estimate_flow: single-channel images required");
    if (!ref.same_shape(tgt))
        throw std::invalid_argument("estimate_flow: image size mismatch");
    if (params.levels < 1 || params.iterations < 1 || !(params.alpha > 0.0) || !(params.max_magnitude > 0.0))
        throw std::invalid_argument("estimate_flow: invalid parameters");
    const long min_side = 1L << params.levels;
    if (ref.height() < min_side || ref.width() < min_side)
        throw std::invalid_argument("estimate_flow: image smaller than 2^levels");

    std::vector<Image> ref_pyr{ref};
    std::vector<Image> tgt_pyr{tgt};
    for (double& v : ref_pyr[0].values())
        v *= kIntensityScale;
    for (double& v : tgt_pyr[0].values())
        v *= kIntensityScale;
    for (int l = 1; l < params.levels; ++l) {
        ref_pyr.push_back(downsample(ref_pyr.back()));
        tgt_pyr.push_back(downsample(tgt_pyr.back()));
    }

    FlowField flow;
    for (int l = params.levels - 1; l >= 0; --l) {
        const auto& r = ref_pyr[static_cast<std::size_t>(l)];
        flow = upsample(flow, r.height(), r.width());
        refine_level(r, tgt_pyr[static_cast<std::size_t>(l)], flow, params);
    }
    return flow;
}

WarpOperator WarpOperator::identity(int height, int width)
{
    return build_warp(FlowField(height, width));
}

bool WarpOperator::is_identity() const
{
    for (std::size_t p = 0; p < counts_.size(); ++p)
        if (counts_[p] != 1 || taps_[p][0].index != p || taps_[p][0].weight != 1.0)
            return false;
    return true;
}

WarpOperator build_warp(const FlowField& flow)
{
    WarpOperator op;
    op.height_ = flow.height;
    op.width_ = flow.width;
    const std::size_t n = static_cast<std::size_t>(flow.height) * flow.width;
    op.taps_.assign(n, {});
    op.counts_.assign(n, 0);
    const int h = flow.height;
    const int w = flow.width;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t p = flow.index(r, c);
            const double y = r + flow.v[p];
            const double x = c + flow.u[p];
            if (!(y >= 0.0 && y <= h - 1 && x >= 0.0 && x <= w - 1))
                continue;
            const int y0 = std::min(static_cast<int>(std::floor(y)), h - 1);
            const int x0 = std::min(static_cast<int>(std::floor(x)), w - 1);
            const double fy = y - y0;
            const double fx = x - x0;
            const double weights[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
            const int rows[4] = {y0, y0, y0 + 1, y0 + 1};
            const int cols[4] = {x0, x0 + 1, x0, x0 + 1};
            std::uint8_t k = 0;
            for (int t = 0; t < 4; ++t) {
                if (weights[t] <= 0.0)
                    continue;
                op.taps_[p][k].index = static_cast<std::uint32_t>(static_cast<std::size_t>(rows[t]) * w + cols[t]);
                op.taps_[p][k].weight = weights[t];
                ++k;
            }
            op.counts_[p] = k;
        }
    return op;
}

Image WarpOperator::apply(const Image& img) const
{
    if (img.height() != height_ || img.width() != width_)
        throw std::invalid_argument("WarpOperator::apply: size mismatch");
    const int nc = img.channels();
    Image out(height_, width_, nc);
    auto src = img.values();
    auto dst = out.values();
    for (std::size_t p = 0; p < counts_.size(); ++p)
        for (int k = 0; k < counts_[p]; ++k) {
            const Tap& t = taps_[p][static_cast<std::size_t>(k)];
            for (int ch = 0; ch < nc; ++ch)
                dst[p * nc + ch] += t.weight * src[t.index * static_cast<std::size_t>(nc) + ch];
        }
    return out;
}

Image WarpOperator::apply_adjoint(const Image& img) const
{
    if (img.height() != height_ || img.width() != width_)
        throw std::invalid_argument("WarpOperator::apply_adjoint: size mismatch");
    const int nc = img.channels();
    Image out(height_, width_, nc);
    auto src = img.values();
    auto dst = out.values();
    for (std::size_t p = 0; p < counts_.size(); ++p)
        for (int k = 0; k < counts_[p]; ++k) {
            const Tap& t = taps_[p][static_cast<std::size_t>(k)];
            for (int ch = 0; ch < nc; ++ch)
                dst[t.index * static_cast<std::size_t>(nc) + ch] += t.weight * src[p * nc + ch];
        }
    return out;
}

} // namespace defence::flow
