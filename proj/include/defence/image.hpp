#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace defence::imaging {

/// Dense row-major pixel grid, channel-interleaved.
///
/// Values coming from files or from_values() are finite and in [0,1]. The
/// same container also carries signed intermediate fields (divergence,
/// solver gradients, unclamped iterates); clamped() restores the range.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, double fill = 0.0);

    /// Throws std::invalid_argument on a size mismatch, a non-finite value or
    /// a value outside [0,1].
    static Image from_values(int height, int width, int channels, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(int row, int col, int ch = 0) const
    {
        return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
    }
    double& at(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }
    double at(int row, int col, int ch = 0) const { return data_[index(row, col, ch)]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    Image channel(int ch) const;
    void set_channel(int ch, const Image& plane);

    Image clamped() const;
    bool all_finite() const;
    bool same_shape(const Image& other) const
    {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int height, int width, bool fill = false);

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t pixel_count() const { return data_.size(); }

    bool at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col] != 0; }
    void set(int row, int col, bool value) { data_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0; }
    bool operator[](std::size_t i) const { return data_[i] != 0; }
    void set(std::size_t i, bool value) { data_[i] = value ? 1 : 0; }

    std::size_t count() const;
    bool none() const { return count() == 0; }
    bool all() const { return count() == data_.size(); }
    BinaryMask complement() const;
    bool subset_of(const BinaryMask& other) const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Forward-difference gradient per channel. dx is zero on the last column,
/// dy on the last row.
struct GradientField {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> dx;
    std::vector<double> dy;

    GradientField() = default;
    GradientField(int h, int w, int c = 1)
        : height(h), width(w), channels(c),
          dx(static_cast<std::size_t>(h) * w * c, 0.0), dy(static_cast<std::size_t>(h) * w * c, 0.0)
    {
    }

    std::size_t index(int row, int col, int ch = 0) const
    {
        return (static_cast<std::size_t>(row) * width + col) * channels + ch;
    }
    bool same_shape(const GradientField& o) const
    {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

/// 0.299 R + 0.587 G + 0.114 B; single-channel input is copied.
Image to_luma(const Image& img);

/// Renders a mask as a single-channel {0,1} image.
Image mask_to_image(const BinaryMask& mask);

/// Row-major, length height*width*channels.
double dot(std::span<const double> a, std::span<const double> b);

} // namespace defence::imaging
