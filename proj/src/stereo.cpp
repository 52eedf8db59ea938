#include "defence/stereo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace defence::stereo {

DescriptorKind parse_descriptor_kind(const std::string& name)
{
    if (name == "census")
        return DescriptorKind::census;
    if (name == "zeromean")
        return DescriptorKind::zeromean;
    throw std::invalid_argument("unknown descriptor kind '" + name + "'");
}

const char* to_string(DescriptorKind kind)
{
    return kind == DescriptorKind::census ? "census" : "zeromean";
}

std::vector<double> extract_descriptor(const Image& img, int row, int col, DescriptorKind kind, int patch_radius)
{
    if (img.channels() != 1)
        throw std::invalid_argument("extract_descriptor: single-channel image required");
    if (patch_radius < 1 || row - patch_radius < 0 || col - patch_radius < 0 || row + patch_radius >= img.height() ||
        col + patch_radius >= img.width())
        throw std::invalid_argument("extract_descriptor: patch leaves the image");

    const int side = 2 * patch_radius + 1;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(side) * side);
    if (kind == DescriptorKind::census) {
        const double centre = img.at(row, col);
        for (int dr = -patch_radius; dr <= patch_radius; ++dr)
            for (int dc = -patch_radius; dc <= patch_radius; ++dc) {
                if (dr == 0 && dc == 0)
                    continue;
                out.push_back(img.at(row + dr, col + dc) >= centre ? 1.0 : -1.0);
            }
        return out;
    }

    double mean = 0.0;
    for (int dr = -patch_radius; dr <= patch_radius; ++dr)
        for (int dc = -patch_radius; dc <= patch_radius; ++dc) {
            out.push_back(img.at(row + dr, col + dc));
            mean += out.back();
        }
    mean /= static_cast<double>(out.size());
    for (double& v : out)
        v -= mean;
    return out;
}

double matching_cost(std::span<const double> dl, std::span<const double> dr)
{
    if (dl.size() != dr.size())
        throw std::invalid_argument("matching_cost: descriptor length mismatch");
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < dl.size(); ++i) {
        ab += dl[i] * dr[i];
        aa += dl[i] * dl[i];
        bb += dr[i] * dr[i];
    }
    const double na = std::sqrt(aa);
    const double nb = std::sqrt(bb);
    if (na < 1e-12 || nb < 1e-12)
        return 0.0;
    return std::clamp(-ab / (na * nb), -1.0, 1.0);
}

CostVolume::CostVolume(int height, int width, int d_max, double fill)
    : height_(height), width_(width), d_max_(d_max)
{
    if (height < 0 || width < 0 || d_max < 0)
        throw std::invalid_argument("CostVolume: invalid dimensions");
    cost_.assign(static_cast<std::size_t>(height) * width * (d_max + 1), fill);
}

namespace {

Image pad_replicate(const Image& img, int pad)
{
    Image out(img.height() + 2 * pad, img.width() + 2 * pad, img.channels());
    for (int r = 0; r < out.height(); ++r)
        for (int c = 0; c < out.width(); ++c)
            for (int ch = 0; ch < img.channels(); ++ch)
                out.at(r, c, ch) = img.at(std::clamp(r - pad, 0, img.height() - 1),
                                          std::clamp(c - pad, 0, img.width() - 1), ch);
    return out;
}

// Unit-normalized descriptors for every pixel; a zero row marks a
// degenerate (near-zero norm) descriptor.
struct DescriptorField {
    std::size_t dim = 0;
    std::vector<double> data;
    std::vector<std::uint8_t> degenerate;

    std::span<const double> at(std::size_t pixel) const { return {data.data() + pixel * dim, dim}; }
};

DescriptorField describe(const Image& img, DescriptorKind kind, int patch_radius)
{
    const Image padded = pad_replicate(img, patch_radius);
    DescriptorField field;
    const std::size_t n = img.pixel_count();
    field.degenerate.assign(n, 0);
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) {
            auto d = extract_descriptor(padded, r + patch_radius, c + patch_radius, kind, patch_radius);
            if (field.dim == 0) {
                field.dim = d.size();
                field.data.resize(n * field.dim);
            }
            double norm = 0.0;
            for (double v : d)
                norm += v * v;
            norm = std::sqrt(norm);
            const std::size_t p = static_cast<std::size_t>(r) * img.width() + c;
            if (norm < 1e-12) {
                field.degenerate[p] = 1;
                norm = std::numeric_limits<double>::infinity();
            }
            std::transform(d.begin(), d.end(), field.data.begin() + static_cast<std::ptrdiff_t>(p * field.dim),
                           [norm](double v) { return v / norm; });
        }
    return field;
}

} // namespace

CostVolume build_cost_volume(const Image& left, const Image& right, int d_max, DescriptorKind kind, int patch_radius)
{
    if (left.channels() != 1 || right.channels() != 1)
        throw std::invalid_argument("build_cost_volume: single-channel images required");
    if (left.height() != right.height() || left.width() != right.width())
        throw std::invalid_argument("build_cost_volume: image size mismatch");
    if (d_max < 0 || d_max >= left.width())
        throw std::invalid_argument("build_cost_volume: d_max must be in [0, width)");

    const DescriptorField dl = describe(left, kind, patch_radius);
    const DescriptorField dr = describe(right, kind, patch_radius);
    const int h = left.height();
    const int w = left.width();
    CostVolume cv(h, w, d_max, kOutOfFrameCost);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t pl = static_cast<std::size_t>(r) * w + c;
            const auto a = dl.at(pl);
            for (int d = 0; d <= d_max && c - d >= 0; ++d) {
                const std::size_t pr = pl - static_cast<std::size_t>(d);
                if (dl.degenerate[pl] || dr.degenerate[pr]) {
                    cv.at(r, c, d) = 0.0;
                    continue;
                }
                const auto b = dr.at(pr);
                double s = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k)
                    s += a[k] * b[k];
                cv.at(r, c, d) = std::clamp(-s, -1.0, 1.0);
            }
        }
    return cv;
}

CostVolume aggregate_costs(const CostVolume& cv, int radius)
{
    if (radius < 0)
        throw std::invalid_argument("aggregate_costs: radius must be >= 0");
    if (radius == 0)
        return cv;
    const int h = cv.height();
    const int w = cv.width();
    const int nd = cv.num_disparities();
    const double norm = 1.0 / (2 * radius + 1);
    CostVolume tmp(h, w, cv.d_max(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = -radius; k <= radius; ++k) {
                const int cc = std::clamp(c + k, 0, w - 1);
                for (int d = 0; d < nd; ++d)
                    tmp.at(r, c, d) += cv.at(r, cc, d);
            }
    CostVolume out(h, w, cv.d_max(), 0.0);
    for (int r = 0; r < h; ++r)
        for (int k = -radius; k <= radius; ++k) {
            const int rr = std::clamp(r + k, 0, h - 1);
            for (int c = 0; c < w; ++c)
                for (int d = 0; d < nd; ++d)
                    out.at(r, c, d) += tmp.at(rr, c, d);
        }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < nd; ++d)
                out.at(r, c, d) *= norm * norm;
    return out;
}

std::size_t DisparityMap::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

DisparityMap winner_take_all(const CostVolume& cv)
{
    DisparityMap dm(cv.height(), cv.width(), cv.d_max());
    for (int r = 0; r < cv.height(); ++r)
        for (int c = 0; c < cv.width(); ++c) {
            int best = 0;
            double best_cost = cv.at(r, c, 0);
            for (int d = 1; d < cv.num_disparities(); ++d)
                if (cv.at(r, c, d) < best_cost) {
                    best_cost = cv.at(r, c, d);
                    best = d;
                }
            dm.set(r, c, best, true);
        }
    return dm;
}

DisparityMap left_right_check(const DisparityMap& dl, const DisparityMap& dr, double tol)
{
    if (dl.height != dr.height || dl.width != dr.width)
        throw std::invalid_argument("left_right_check: size mismatch");
    DisparityMap out = dl;
    for (int r = 0; r < dl.height; ++r)
        for (int c = 0; c < dl.width; ++c) {
            if (!dl.is_valid(r, c))
                continue;
            const double d = dl.at(r, c);
            const long cr = c - std::lround(d);
            const bool ok = cr >= 0 && cr < dl.width && dr.is_valid(r, static_cast<int>(cr)) &&
                            std::abs(d - dr.at(r, static_cast<int>(cr))) <= tol;
            if (!ok)
                out.set(r, c, 0.0, false);
        }
    return out;
}

namespace {

double lower_median(std::vector<double>& v)
{
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

} // namespace

DisparityMap median_fill(const DisparityMap& dm, int radius)
{
    if (radius < 1)
        throw std::invalid_argument("median_fill: radius must be >= 1");
    const int h = dm.height;
    const int w = dm.width;
    DisparityMap filled = dm;
    std::vector<double> window;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (dm.is_valid(r, c))
                continue;
            window.clear();
            for (int rr = std::max(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr)
                for (int cc = std::max(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc)
                    if (dm.is_valid(rr, cc))
                        window.push_back(dm.at(rr, cc));
            if (window.size() >= 3)
                filled.set(r, c, lower_median(window), true);
        }

    DisparityMap out = filled;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!filled.is_valid(r, c))
                continue;
            window.clear();
            for (int rr = std::max(0, r - 1); rr <= std::min(h - 1, r + 1); ++rr)
                for (int cc = std::max(0, c - 1); cc <= std::min(w - 1, c + 1); ++cc)
                    if (filled.is_valid(rr, cc))
                        window.push_back(filled.at(rr, cc));
            out.set(r, c, lower_median(window), true);
        }
    return out;
}

Image flip_horizontal(const Image& img)
{
    Image out(img.height(), img.width(), img.channels());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c)
            for (int ch = 0; ch < img.channels(); ++ch)
                out.at(r, c, ch) = img.at(r, img.width() - 1 - c, ch);
    return out;
}

CostVolume flip_horizontal(const CostVolume& cv)
{
    CostVolume out(cv.height(), cv.width(), cv.d_max());
    for (int r = 0; r < cv.height(); ++r)
        for (int c = 0; c < cv.width(); ++c)
            for (int d = 0; d < cv.num_disparities(); ++d)
                out.at(r, c, d) = cv.at(r, cv.width() - 1 - c, d);
    return out;
}

DisparityMap flip_horizontal(const DisparityMap& dm)
{
    DisparityMap out(dm.height, dm.width, dm.d_max);
    for (int r = 0; r < dm.height; ++r)
        for (int c = 0; c < dm.width; ++c) {
            const int src = dm.width - 1 - c;
            out.set(r, c, dm.at(r, src), dm.is_valid(r, src));
        }
    return out;
}

DisparityPair compute_disparity(const Image& left, const Image& right, const StereoParams& params)
{
    const CostVolume cv_left =
        aggregate_costs(build_cost_volume(left, right, params.d_max, params.kind, params.patch_radius),
                        params.aggregation_radius);
    // Right reference: mirroring both views turns rightward search into leftward search.
    const CostVolume cv_right_flipped = aggregate_costs(
        build_cost_volume(flip_horizontal(right), flip_horizontal(left), params.d_max, params.kind,
                          params.patch_radius),
        params.aggregation_radius);

    const DisparityMap raw_left = winner_take_all(cv_left);
    const DisparityMap raw_right_flipped = winner_take_all(cv_right_flipped);
    const DisparityMap raw_left_flipped = flip_horizontal(raw_left);

    DisparityPair out;
    out.left = median_fill(left_right_check(raw_left, flip_horizontal(raw_right_flipped), params.lr_tolerance),
                           params.median_radius);
    out.right = flip_horizontal(median_fill(
        left_right_check(raw_right_flipped, raw_left_flipped, params.lr_tolerance), params.median_radius));
    return out;
}

} // namespace defence::stereo
