#include "defence/filters.hpp"
#include "defence/flow.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace defence;
using namespace defence::flow;
using imaging::BinaryMask;
using imaging::Image;
using testing_support::random_image;
using testing_support::random_mask;
using testing_support::smooth_texture;

namespace {

// ref(r, c) = tgt(r + dy, c + dx), both cut from one larger texture.
void translated_pair(int h, int w, int dx, int dy, std::uint64_t seed, Image& ref, Image& tgt)
{
    std::mt19937_64 rng(seed);
    const Image big = smooth_texture(h + dy, w + dx, rng, 2.0);
    ref = Image(h, w, 1);
    tgt = Image(h, w, 1);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            tgt.at(r, c) = big.at(r, c);
            ref.at(r, c) = big.at(r + dy, c + dx);
        }
}

double interior_epe(const FlowField& f, double u, double v, int margin)
{
    double s = 0.0;
    int n = 0;
    for (int r = margin; r < f.height - margin; ++r)
        for (int c = margin; c < f.width - margin; ++c) {
            const std::size_t p = f.index(r, c);
            s += std::hypot(f.u[p] - u, f.v[p] - v);
            ++n;
        }
    return s / n;
}

FlowField random_flow(int h, int w, double mag, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> uni(-mag, mag);
    FlowField f(h, w);
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] = uni(rng);
        f.v[i] = uni(rng);
    }
    return f;
}

} // namespace

TEST_SUITE("flow")
{
    TEST_CASE("preblur leaves fence-free images alone")
    {
        std::mt19937_64 rng(31);
        const Image img = random_image(16, 16, 1, rng);
        CHECK(preblur_fences(img, BinaryMask(16, 16)) == img);
        CHECK_THROWS_AS(preblur_fences(img, BinaryMask(16, 16, true)), std::invalid_argument);
        CHECK_THROWS_AS(preblur_fences(img, BinaryMask(16, 15)), std::invalid_argument);
    }

    TEST_CASE("preblur touches only the band around the fence")
    {
        std::mt19937_64 rng(32);
        const Image img = random_image(30, 30, 1, rng);
        BinaryMask fence(30, 30);
        for (int r = 0; r < 30; ++r)
            fence.set(r, 15, true);
        const double sigma = 1.0;
        const Image out = preblur_fences(img, fence, sigma);
        const BinaryMask band = imaging::dilate(fence, 3);
        for (int r = 0; r < 30; ++r)
            for (int c = 0; c < 30; ++c) {
                if (!band.at(r, c))
                    CHECK(out.at(r, c) == img.at(r, c));
            }

        // a single-column fence is filled from its two neighbours
        Image filled = img;
        for (int r = 0; r < 30; ++r) {
            double s = 0.0;
            int n = 0;
            for (int rr = std::max(0, r - 1); rr <= std::min(29, r + 1); ++rr)
                for (int cc : {14, 16}) {
                    s += img.at(rr, cc);
                    ++n;
                }
            filled.at(r, 15) = s / n;
        }
        const Image blurred = imaging::gaussian_blur(filled, sigma);
        for (int r = 0; r < 30; ++r)
            for (int c = 12; c <= 18; ++c)
                CHECK(out.at(r, c) == doctest::Approx(blurred.at(r, c)).epsilon(1e-12));
    }

    TEST_CASE("preblur of a constant image is constant")
    {
        std::mt19937_64 rng(33);
        const BinaryMask fence = random_mask(20, 20, 0.2, rng);
        const Image out = preblur_fences(Image(20, 20, 1, 0.3), fence, 2.0);
        for (double v : out.values())
            CHECK(v == doctest::Approx(0.3));
    }

    TEST_CASE("flow recovers a global translation")
    {
        Image ref, tgt;
        translated_pair(96, 96, 3, 0, 34, ref, tgt);
        const FlowField f = estimate_flow(ref, tgt);
        CHECK(interior_epe(f, 3.0, 0.0, 8) <= 0.5);

        translated_pair(96, 96, 2, 1, 35, ref, tgt);
        CHECK(interior_epe(estimate_flow(ref, tgt), 2.0, 1.0, 8) <= 0.5);
    }

    TEST_CASE("flow of identical frames is zero")
    {
        std::mt19937_64 rng(36);
        const Image img = smooth_texture(32, 32, rng);
        const FlowField f = estimate_flow(img, img);
        for (std::size_t i = 0; i < f.u.size(); ++i) {
            CHECK(std::abs(f.u[i]) < 1e-9);
            CHECK(std::abs(f.v[i]) < 1e-9);
        }
    }

    TEST_CASE("flow argument checks")
    {
        std::mt19937_64 rng(37);
        const Image a = random_image(32, 32, 1, rng);
        CHECK_THROWS_AS(estimate_flow(a, random_image(32, 32, 3, rng)), std::invalid_argument);
        CHECK_THROWS_AS(estimate_flow(a, random_image(32, 31, 1, rng)), std::invalid_argument);
        FlowParams p;
        p.levels = 6;
        CHECK_THROWS_AS(estimate_flow(a, a, p), std::invalid_argument);
        p.levels = 2;
        p.alpha = 0.0;
        CHECK_THROWS_AS(estimate_flow(a, a, p), std::invalid_argument);
    }

    TEST_CASE("warp adjoint identity")
    {
        std::mt19937_64 rng(38);
        for (int t = 0; t < 20; ++t) {
            const WarpOperator op = build_warp(random_flow(14, 17, 5.0, rng));
            const Image x = random_image(14, 17, 3, rng, -1.0, 1.0);
            const Image y = random_image(14, 17, 3, rng, -1.0, 1.0);
            const double lhs = imaging::dot(op.apply(x).values(), y.values());
            const double rhs = imaging::dot(x.values(), op.apply_adjoint(y).values());
            CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
        }
    }

    TEST_CASE("warp weights form a partition of unity")
    {
        std::mt19937_64 rng(39);
        const WarpOperator op = build_warp(random_flow(20, 20, 4.0, rng));
        int inside = 0;
        for (std::size_t p = 0; p < op.pixel_count(); ++p) {
            if (op.out_of_bounds(p))
                continue;
            ++inside;
            double s = 0.0;
            for (int k = 0; k < op.tap_count(p); ++k) {
                CHECK(op.tap(p, k).weight > 0.0);
                s += op.tap(p, k).weight;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
        CHECK(inside > 0);
    }

    TEST_CASE("integer warp is a shift with empty rows outside the frame")
    {
        std::mt19937_64 rng(40);
        const Image img = random_image(6, 10, 2, rng);
        FlowField f(6, 10);
        for (double& u : f.u)
            u = 3.0;
        const WarpOperator op = build_warp(f);
        const Image out = op.apply(img);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 10; ++c) {
                const std::size_t p = f.index(r, c);
                if (c + 3 < 10) {
                    CHECK(op.tap_count(p) == 1);
                    CHECK(out.at(r, c, 1) == img.at(r, c + 3, 1));
                } else {
                    CHECK(op.out_of_bounds(p));
                    CHECK(out.at(r, c, 0) == 0.0);
                }
            }
        CHECK_FALSE(op.is_identity());
        CHECK(build_warp(FlowField(6, 10)).is_identity());
        CHECK(WarpOperator::identity(6, 10).apply(img) == img);
        CHECK_THROWS_AS(op.apply(Image(6, 9, 1)), std::invalid_argument);
    }
}
