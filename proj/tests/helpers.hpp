#pragma once

#include "defence/filters.hpp"
#include "defence/image.hpp"

#include <algorithm>

#include <filesystem>
#include <random>
#include <string>

namespace testing_support {

inline defence::imaging::Image random_image(int h, int w, int c, std::mt19937_64& rng, double lo = 0.0,
                                             double hi = 1.0)
{
    std::uniform_real_distribution<double> uni(lo, hi);
    defence::imaging::Image img(h, w, c);
    for (double& v : img.values())
        v = uni(rng);
    return img;
}

inline defence::imaging::BinaryMask random_mask(int h, int w, double p, std::mt19937_64& rng)
{
    std::bernoulli_distribution coin(p);
    defence::imaging::BinaryMask m(h, w);
    for (std::size_t i = 0; i < m.pixel_count(); ++i)
        m.set(i, coin(rng));
    return m;
}

// Blurred uniform noise stretched to [0.1, 0.9].
inline defence::imaging::Image smooth_texture(int h, int w, std::mt19937_64& rng, double sigma = 2.0)
{
    defence::imaging::Image img = defence::imaging::gaussian_blur(random_image(h, w, 1, rng), sigma);
    auto vals = img.values();
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    const double a = *lo;
    const double span = std::max(*hi - a, 1e-12);
    for (double& v : vals)
        v = 0.1 + 0.8 * (v - a) / span;
    return img;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("defence_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace testing_support
