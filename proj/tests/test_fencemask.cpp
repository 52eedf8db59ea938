#include "defence/error.hpp"
#include "defence/fencemask.hpp"
#include "defence/filters.hpp"
#include "defence/log.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace defence;
using namespace defence::fencemask;
using imaging::BinaryMask;
using imaging::Image;
using stereo::DisparityMap;
using testing_support::random_image;
using testing_support::random_mask;

namespace {

BinaryMask vertical_bar(int h, int w, int c0, int width)
{
    BinaryMask m(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = c0; c < c0 + width; ++c)
            m.set(r, c, true);
    return m;
}

struct CapturedLog {
    std::vector<std::string> warnings;
    LogSink previous;
    CapturedLog()
    {
        previous = set_log_sink([this](LogLevel level, const std::string& msg) {
            if (level == LogLevel::warning)
                warnings.push_back(msg);
        });
    }
    ~CapturedLog() { set_log_sink(previous); }
};

} // namespace

TEST_SUITE("fencemask")
{
    TEST_CASE("near layer of a two-spike disparity map")
    {
        DisparityMap dm(10, 10, 32);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                dm.set(r, c, c < 5 ? 5 : 20, true);
        const BinaryMask m = near_layer_mask(dm);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c)
                CHECK(m.at(r, c) == (c >= 5));
    }

    TEST_CASE("near layer agrees with an exhaustive between-class variance search")
    {
        std::mt19937_64 rng(21);
        std::normal_distribution<double> far_d(6.0, 2.0), near_d(25.0, 3.0);
        std::bernoulli_distribution is_near(0.3);
        DisparityMap dm(30, 30, 40);
        for (int r = 0; r < 30; ++r)
            for (int c = 0; c < 30; ++c)
                dm.set(r, c, std::clamp(std::round(is_near(rng) ? near_d(rng) : far_d(rng)), 0.0, 40.0), true);

        double lo = 1e9, hi = -1e9;
        for (double d : dm.disparity) {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        auto bin = [&](double d) { return std::min(63, static_cast<int>((d - lo) / (hi - lo) * 64)); };
        double best = -1.0;
        int split = -1;
        for (int t = 0; t < 63; ++t) {
            double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
            for (double d : dm.disparity) {
                const int b = bin(d);
                if (b <= t) {
                    n0 += 1;
                    s0 += b;
                } else {
                    n1 += 1;
                    s1 += b;
                }
            }
            if (n0 == 0 || n1 == 0)
                continue;
            const double v = n0 * n1 * (s0 / n0 - s1 / n1) * (s0 / n0 - s1 / n1);
            if (v > best) {
                best = v;
                split = t;
            }
        }
        const BinaryMask m = near_layer_mask(dm);
        for (std::size_t i = 0; i < dm.disparity.size(); ++i)
            CHECK(m[i] == (bin(dm.disparity[i]) > split));
    }

    TEST_CASE("near layer edge cases")
    {
        DisparityMap dm(6, 6, 10);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c)
                dm.set(r, c, 3, true);
        {
            CapturedLog log;
            CHECK(near_layer_mask(dm).none());
            CHECK(log.warnings.size() == 1);
        }
        for (int r = 0; r < 6; ++r)
            for (int c = 3; c < 6; ++c)
                dm.set(r, c, 9, true);
        for (int r = 0; r < 6; ++r)
            dm.set(r, 4, 0, false);
        const BinaryMask m = near_layer_mask(dm);
        for (int r = 0; r < 6; ++r)
            CHECK_FALSE(m.at(r, 4));
        CHECK(m.at(0, 5));
        CHECK_THROWS_AS(near_layer_mask(DisparityMap(4, 4, 8)), std::invalid_argument);
    }

    TEST_CASE("scribbles on a wide vertical bar")
    {
        const BinaryMask raw = vertical_bar(40, 60, 20, 20);
        const ScribbleMap s = generate_scribbles(raw, 5, 2, 0.1, 0.3);
        const BinaryMask fg = s.support(Scribble::foreground);
        const BinaryMask bg = s.support(Scribble::background);
        CHECK(fg == imaging::erode(raw, 2));
        CHECK(fg.subset_of(raw));
        CHECK(!bg.none());
        for (int r = 0; r < 40; ++r)
            for (int c = 0; c < 60; ++c) {
                if (bg.at(r, c)) {
                    CHECK_FALSE(raw.at(r, c));
                    CHECK(imaging::dilate(raw, 6).at(r, c));
                }
            }
        // Canny marks the first bright pixel on the left and the first dark one on the right
        for (int r = 0; r < 40; ++r) {
            CHECK(bg.at(r, 15));
            CHECK(bg.at(r, 45));
        }
        CHECK(bg.count() == 80);
    }

    TEST_CASE("scribble labels never conflict")
    {
        std::mt19937_64 rng(22);
        int checked = 0;
        for (int t = 0; t < 100; ++t) {
            BinaryMask raw = imaging::dilate(random_mask(24, 24, 0.03, rng), 2);
            if (raw.none() || raw.all())
                continue;
            ScribbleMap s;
            try {
                s = generate_scribbles(raw, 3, 1, 0.1, 0.3);
            } catch (const std::runtime_error&) {
                continue;
            }
            ++checked;
            CHECK(s.support(Scribble::foreground).subset_of(raw));
            const BinaryMask bg = s.support(Scribble::background);
            for (std::size_t i = 0; i < bg.pixel_count(); ++i)
                if (bg[i])
                    CHECK_FALSE(raw[i]);
        }
        CHECK(checked > 50);
    }

    TEST_CASE("scribble errors")
    {
        CHECK_THROWS_AS(generate_scribbles(BinaryMask(10, 10), 5, 2, 0.1, 0.3), std::invalid_argument);
        CHECK_THROWS_AS(generate_scribbles(BinaryMask(10, 10, true), 5, 2, 0.1, 0.3), std::invalid_argument);
        // a 2-px bar survives only the radius-1 retry; a 1-px bar never does
        CHECK_NOTHROW(generate_scribbles(vertical_bar(30, 30, 14, 3), 5, 2, 0.1, 0.3));
        CHECK_THROWS_AS(generate_scribbles(vertical_bar(30, 30, 14, 1), 5, 2, 0.1, 0.3), std::runtime_error);
    }

    TEST_CASE("matting Laplacian is symmetric, PSD, with zero row sums")
    {
        std::mt19937_64 rng(23);
        const Image gray = random_image(9, 11, 1, rng);
        const Eigen::SparseMatrix<double> L = matting_laplacian(gray, 1e-5);
        const Eigen::MatrixXd dense(L);
        CHECK((dense - dense.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(dense.rowwise().sum().cwiseAbs().maxCoeff() < 1e-8);
        std::normal_distribution<double> g;
        for (int t = 0; t < 20; ++t) {
            Eigen::VectorXd v(dense.rows());
            for (Eigen::Index i = 0; i < v.size(); ++i)
                v[i] = g(rng);
            CHECK(v.dot(dense * v) >= -1e-9);
        }
    }

    TEST_CASE("alpha on a two-region image matches a dense solve")
    {
        const int h = 12, w = 16;
        Image img(h, w, 1);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                img.at(r, c) = c < w / 2 ? 0.1 : 0.9;
        ScribbleMap s(h, w);
        s.label[static_cast<std::size_t>(6 * w + 13)] = Scribble::foreground;
        s.label[static_cast<std::size_t>(6 * w + 2)] = Scribble::background;
        const MattingParams params;
        const AlphaMap a = solve_alpha(img, s, params);

        const Eigen::SparseMatrix<double> L = matting_laplacian(img, params.eps);
        Eigen::MatrixXd A(L);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(h * w);
        A(6 * w + 13, 6 * w + 13) += params.gamma;
        b[6 * w + 13] = params.gamma;
        A(6 * w + 2, 6 * w + 2) += params.gamma;
        const Eigen::VectorXd x = A.ldlt().solve(b);
        for (int i = 0; i < h * w; ++i) {
            if (s.label[static_cast<std::size_t>(i)] != Scribble::unknown)
                continue;
            CHECK(a.alpha[static_cast<std::size_t>(i)] == doctest::Approx(std::clamp(x[i], 0.0, 1.0)).epsilon(1e-3));
        }
        for (int r = 0; r < h; ++r) {
            CHECK(a.at(r, 1) < 0.1);
            CHECK(a.at(r, w - 2) > 0.9);
        }
        CHECK(a.at(6, 13) == 1.0);
        CHECK(a.at(6, 2) == 0.0);
    }

    TEST_CASE("fully scribbled image returns the labels")
    {
        std::mt19937_64 rng(24);
        const Image img = random_image(8, 8, 3, rng);
        ScribbleMap s(8, 8);
        for (std::size_t i = 0; i < s.label.size(); ++i)
            s.label[i] = (i % 3 == 0) ? Scribble::foreground : Scribble::background;
        const AlphaMap a = solve_alpha(img, s);
        for (std::size_t i = 0; i < s.label.size(); ++i)
            CHECK(a.alpha[i] == (i % 3 == 0 ? 1.0 : 0.0));
    }

    TEST_CASE("alpha needs both scribble classes")
    {
        ScribbleMap s(5, 5);
        s.label[3] = Scribble::foreground;
        CHECK_THROWS_AS(solve_alpha(Image(5, 5, 1, 0.5), s), std::invalid_argument);
    }

    TEST_CASE("threshold and visibility")
    {
        AlphaMap a;
        a.height = 2;
        a.width = 2;
        a.alpha = {0.0, 0.0, 0.0, 0.0};
        CHECK(threshold_alpha(a).none());
        a.alpha = {1.0, 1.0, 1.0, 1.0};
        CHECK(threshold_alpha(a).all());
        a.alpha = {0.2, 0.5, 0.7, 0.49};
        const BinaryMask t = threshold_alpha(a, 0.5);
        CHECK_FALSE(t[0]);
        CHECK(t[1]);
        CHECK(t[2]);
        CHECK_FALSE(t[3]);
        CHECK_THROWS_AS(threshold_alpha(a, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(threshold_alpha(a, 0.0), std::invalid_argument);

        CHECK(mask_for_frame(BinaryMask(6, 6)).all());
        BinaryMask one(7, 7);
        one.set(3, 3, true);
        const BinaryMask vis = mask_for_frame(one, 1);
        CHECK(vis.count() == 49 - 9);
        CHECK_FALSE(vis.at(2, 2));
        CHECK(vis.at(1, 3));

        std::mt19937_64 rng(25);
        const BinaryMask f = random_mask(9, 9, 0.3, rng);
        CHECK(mask_for_frame(f, 0).complement() == f);
    }
}
