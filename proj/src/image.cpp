#include "defence/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace defence::imaging {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels)
{
    if (height < 0 || width < 0 || channels < 1)
        throw std::invalid_argument("Image: invalid dimensions");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Image Image::from_values(int height, int width, int channels, std::vector<double> values)
{
    Image img(height, width, channels);
    if (values.size() != img.data_.size())
        throw std::invalid_argument("Image: data length " + std::to_string(values.size()) +
                                    " does not match " + std::to_string(img.data_.size()));
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw std::invalid_argument("Image: value outside [0,1]");
    }
    img.data_ = std::move(values);
    return img;
}

Image Image::channel(int ch) const
{
    if (ch < 0 || ch >= channels_)
        throw std::invalid_argument("Image::channel: index out of range");
    Image out(height_, width_, 1);
    for (std::size_t p = 0; p < pixel_count(); ++p)
        out.data_[p] = data_[p * channels_ + ch];
    return out;
}

void Image::set_channel(int ch, const Image& plane)
{
    if (ch < 0 || ch >= channels_ || plane.channels_ != 1 || plane.height_ != height_ ||
        plane.width_ != width_)
        throw std::invalid_argument("Image::set_channel: incompatible plane");
    for (std::size_t p = 0; p < pixel_count(); ++p)
        data_[p * channels_ + ch] = plane.data_[p];
}

Image Image::clamped() const
{
    Image out = *this;
    for (double& v : out.data_)
        v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
    return out;
}

bool Image::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

BinaryMask::BinaryMask(int height, int width, bool fill)
    : height_(height), width_(width)
{
    if (height < 0 || width < 0)
        throw std::invalid_argument("BinaryMask: invalid dimensions");
    data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::complement() const
{
    BinaryMask out = *this;
    for (auto& v : out.data_)
        v = v ? 0 : 1;
    return out;
}

bool BinaryMask::subset_of(const BinaryMask& other) const
{
    if (other.height_ != height_ || other.width_ != width_)
        throw std::invalid_argument("BinaryMask::subset_of: size mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i)
        if (data_[i] && !other.data_[i])
            return false;
    return true;
}

Image to_luma(const Image& img)
{
    if (img.channels() == 1)
        return img;
    if (img.channels() != 3)
        throw std::invalid_argument("to_luma: expected 1 or 3 channels");
    Image out(img.height(), img.width(), 1);
    auto src = img.values();
    auto dst = out.values();
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        dst[p] = 0.299 * src[3 * p] + 0.587 * src[3 * p + 1] + 0.114 * src[3 * p + 2];
    return out;
}

Image mask_to_image(const BinaryMask& mask)
{
    Image out(mask.height(), mask.width(), 1);
    auto dst = out.values();
    for (std::size_t i = 0; i < mask.pixel_count(); ++i)
        dst[i] = mask[i] ? 1.0 : 0.0;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

} // namespace defence::imaging
