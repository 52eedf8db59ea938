#include "defence/solver.hpp"

#include "defence/error.hpp"
#include "defence/filters.hpp"
#include "defence/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>

namespace defence::solver {

void ObservationSet::validate() const
{
    if (frames.empty())
        throw std::invalid_argument("ObservationSet: at least one frame required");
    const Image& ref = frames.front().y;
    for (std::size_t m = 0; m < frames.size(); ++m) {
        const Frame& f = frames[m];
        if (!f.y.same_shape(ref))
            throw std::invalid_argument("ObservationSet: frame " + std::to_string(m) + " has different dimensions");
        if (f.visible.height() != ref.height() || f.visible.width() != ref.width() ||
            f.warp.height() != ref.height() || f.warp.width() != ref.width())
            throw std::invalid_argument("ObservationSet: mask or warp of frame " + std::to_string(m) +
                                        " does not match the image");
    }
    if (!frames.front().warp.is_identity())
        throw std::invalid_argument("ObservationSet: frame 0 must use the identity warp");
}

void SolverConfig::validate() const
{
    if (!(mu >= 0.0) || !std::isfinite(mu))
        throw std::invalid_argument("solver.mu must be finite and >= 0");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("solver.lambda must be finite and > 0");
    if (outer_iters < 1)
        throw std::invalid_argument("solver.outer_iters must be >= 1");
    if (sd_iters < 1)
        throw std::invalid_argument("solver.sd_iters must be >= 1");
    if (sd_step && !(*sd_step > 0.0 && std::isfinite(*sd_step)))
        throw std::invalid_argument("solver.sd_step must be positive or auto");
    if (!(tol >= 0.0))
        throw std::invalid_argument("solver.tol must be >= 0");
}

Image degrade(const Image& x, const BinaryMask& visible, const flow::WarpOperator& warp, double noise_sigma,
              std::uint64_t seed)
{
    if (visible.height() != x.height() || visible.width() != x.width())
        throw std::invalid_argument("degrade: mask size mismatch");
    if (!(noise_sigma >= 0.0))
        throw std::invalid_argument("degrade: noise sigma must be >= 0");
    Image y = warp.apply(x);
    const int nc = y.channels();
    auto v = y.values();
    for (std::size_t p = 0; p < y.pixel_count(); ++p)
        if (!visible[p])
            for (int ch = 0; ch < nc; ++ch)
                v[p * nc + ch] = 0.0;
    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (double& s : v)
            s += noise(rng);
    }
    return y;
}

namespace {

double tv_of(const GradientField& g, TvKind tv)
{
    double s = 0.0;
    for (std::size_t i = 0; i < g.dx.size(); ++i)
        s += tv == TvKind::isotropic ? std::sqrt(g.dx[i] * g.dx[i] + g.dy[i] * g.dy[i])
                                     : std::abs(g.dx[i]) + std::abs(g.dy[i]);
    return s;
}

// O (W x - y) for one frame.
Image masked_residual(const Image& x, const Frame& f)
{
    Image r = f.warp.apply(x);
    const int nc = r.channels();
    auto rv = r.values();
    auto yv = f.y.values();
    for (std::size_t p = 0; p < r.pixel_count(); ++p)
        for (int ch = 0; ch < nc; ++ch) {
            const std::size_t i = p * nc + ch;
            rv[i] = f.visible[p] ? rv[i] - yv[i] : 0.0;
        }
    return r;
}

double norm2(std::span<const double> v)
{
    return std::sqrt(imaging::dot(v, v));
}

} // namespace

double energy(const Image& x, const ObservationSet& obs, double mu, TvKind tv)
{
    double data = 0.0;
    for (const Frame& f : obs.frames) {
        const Image r = masked_residual(x, f);
        data += imaging::dot(r.values(), r.values());
    }
    return 0.5 * data + mu * tv_of(imaging::grad(x), tv);
}

Image data_gradient(const Image& x, const ObservationSet& obs, const GradientField& d, const GradientField& b,
                    double lambda)
{
    GradientField split = imaging::grad(x);
    if (!split.same_shape(d) || !split.same_shape(b))
        throw std::invalid_argument("data_gradient: split variables do not match the image");
    for (std::size_t i = 0; i < split.dx.size(); ++i) {
        split.dx[i] += b.dx[i] - d.dx[i];
        split.dy[i] += b.dy[i] - d.dy[i];
    }
    Image g = imaging::div(split);
    for (double& v : g.values())
        v *= -lambda;
    for (const Frame& f : obs.frames) {
        const Image back = f.warp.apply_adjoint(masked_residual(x, f));
        auto gv = g.values();
        auto bv = back.values();
        for (std::size_t i = 0; i < gv.size(); ++i)
            gv[i] += bv[i];
    }
    return g;
}

GradientField shrink(const GradientField& g, double t, TvKind tv)
{
    if (!(t >= 0.0))
        throw std::invalid_argument("shrink: threshold must be >= 0");
    GradientField out = g;
    for (std::size_t i = 0; i < g.dx.size(); ++i) {
        if (tv == TvKind::anisotropic) {
            auto soft = [t](double v) { return std::copysign(std::max(std::abs(v) - t, 0.0), v); };
            out.dx[i] = soft(g.dx[i]);
            out.dy[i] = soft(g.dy[i]);
            continue;
        }
        const double m = std::sqrt(g.dx[i] * g.dx[i] + g.dy[i] * g.dy[i]);
        if (m <= t) {
            out.dx[i] = 0.0;
            out.dy[i] = 0.0;
        } else {
            const double s = (m - t) / m;
            out.dx[i] = g.dx[i] * s;
            out.dy[i] = g.dy[i] * s;
        }
    }
    return out;
}

double estimate_lipschitz(const ObservationSet& obs, double lambda, int iterations)
{
    obs.validate();
    const Image& ref = obs.frames.front().y;
    Image v(ref.height(), ref.width(), 1);
    std::mt19937_64 rng(0x5eed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (double& s : v.values())
        s = uni(rng);

    // A v = sum W^T O W v + lambda grad^T grad v; the operator acts per channel
    // identically, so one plane suffices.
    auto apply_a = [&](const Image& in) {
        Image out = imaging::div(imaging::grad(in));
        for (double& s : out.values())
            s *= -lambda;
        for (const Frame& f : obs.frames) {
            Image wv = f.warp.apply(in);
            auto wvv = wv.values();
            for (std::size_t p = 0; p < wv.pixel_count(); ++p)
                if (!f.visible[p])
                    wvv[p] = 0.0;
            const Image back = f.warp.apply_adjoint(wv);
            auto ov = out.values();
            auto bv = back.values();
            for (std::size_t i = 0; i < ov.size(); ++i)
                ov[i] += bv[i];
        }
        return out;
    };

    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double n = norm2(v.values());
        if (n == 0.0)
            break;
        for (double& s : v.values())
            s /= n;
        Image av = apply_a(v);
        estimate = imaging::dot(v.values(), av.values());
        v = std::move(av);
    }
    return estimate;
}

SolveResult solve(const ObservationSet& obs, const SolverConfig& cfg, const Image& x0)
{
    obs.validate();
    cfg.validate();
    if (!x0.same_shape(obs.frames.front().y))
        throw std::invalid_argument("solve: x0 does not match the observations");

    SolverState st;
    st.x = x0;
    st.d = imaging::grad(x0);
    st.b = GradientField(x0.height(), x0.width(), x0.channels());
    if (cfg.sd_step) {
        st.step = *cfg.sd_step;
    } else {
        const double lip = estimate_lipschitz(obs, cfg.lambda);
        if (!(lip > 0.0) || !std::isfinite(lip))
            throw NumericalError("solve: could not estimate the step size (Lipschitz estimate " +
                                 std::to_string(lip) + ")");
        st.step = 1.0 / lip;
    }

    const double e0 = energy(st.x, obs, cfg.mu, cfg.tv);
    st.energy_trace.push_back(e0);
    st.relative_change.push_back(0.0);
    const double threshold = cfg.mu / cfg.lambda;

    for (int k = 1; k <= cfg.outer_iters; ++k) {
        const Image previous = st.x;
        for (int s = 0; s < cfg.sd_iters; ++s) {
            const Image g = data_gradient(st.x, obs, st.d, st.b, cfg.lambda);
            auto xv = st.x.values();
            auto gv = g.values();
            for (std::size_t i = 0; i < xv.size(); ++i)
                xv[i] -= st.step * gv[i];
        }
        if (!st.x.all_finite())
            throw NumericalError("solve: non-finite iterate at outer iteration " + std::to_string(k));

        GradientField gx = imaging::grad(st.x);
        GradientField v = gx;
        for (std::size_t i = 0; i < v.dx.size(); ++i) {
            v.dx[i] += st.b.dx[i];
            v.dy[i] += st.b.dy[i];
        }
        st.d = shrink(v, threshold, cfg.tv);
        for (std::size_t i = 0; i < gx.dx.size(); ++i) {
            st.b.dx[i] += gx.dx[i] - st.d.dx[i];
            st.b.dy[i] += gx.dy[i] - st.d.dy[i];
        }
        st.k = k;

        const double e = energy(st.x, obs, cfg.mu, cfg.tv);
        if (!std::isfinite(e) || e > 10.0 * std::max(e0, 1e-300)) {
            std::ostringstream msg;
            msg << "solve: diverged at outer iteration " << k << " (energy " << e << ", initial " << e0 << ")";
            throw NumericalError(msg.str());
        }
        double diff = 0.0;
        auto xv = st.x.values();
        auto pv = previous.values();
        for (std::size_t i = 0; i < xv.size(); ++i)
            diff += (xv[i] - pv[i]) * (xv[i] - pv[i]);
        const double prev_norm = norm2(pv);
        const double rel = prev_norm > 0.0 ? std::sqrt(diff) / prev_norm : std::sqrt(diff);
        st.energy_trace.push_back(e);
        st.relative_change.push_back(rel);
        if (rel < cfg.tol)
            break;
    }
    log_info("solve: " + std::to_string(st.k) + " outer iterations, final energy " +
             std::to_string(st.energy_trace.back()));

    SolveResult out;
    out.x = st.x.clamped();
    out.state = std::move(st);
    return out;
}

Image fill_occluded(const Image& y, const BinaryMask& visible, int window)
{
    if (visible.height() != y.height() || visible.width() != y.width())
        throw std::invalid_argument("fill_occluded: mask size mismatch");
    if (window < 1)
        throw std::invalid_argument("fill_occluded: window must be >= 1");
    const int h = y.height();
    const int w = y.width();
    const int nc = y.channels();
    Image out = y;
    if (visible.none()) {
        for (double& v : out.values())
            v = 0.5;
        return out;
    }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (visible.at(r, c))
                continue;
            for (int radius = window / 2;; ++radius) {
                std::vector<double> sum(static_cast<std::size_t>(nc), 0.0);
                int n = 0;
                for (int rr = std::max(0, r - radius); rr <= std::min(h - 1, r + radius); ++rr)
                    for (int cc = std::max(0, c - radius); cc <= std::min(w - 1, c + radius); ++cc)
                        if (visible.at(rr, cc)) {
                            ++n;
                            for (int ch = 0; ch < nc; ++ch)
                                sum[static_cast<std::size_t>(ch)] += y.at(rr, cc, ch);
                        }
                if (n > 0) {
                    for (int ch = 0; ch < nc; ++ch)
                        out.at(r, c, ch) = sum[static_cast<std::size_t>(ch)] / n;
                    break;
                }
            }
        }
    return out;
}

void write_energy_csv(const std::filesystem::path& path, const SolverState& state)
{
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "iteration,energy,relative_change\n" << std::setprecision(17);
    for (std::size_t i = 0; i < state.energy_trace.size(); ++i)
        out << i << ',' << state.energy_trace[i] << ',' << state.relative_change[i] << '\n';
    if (!out)
        throw IoError("write failed for " + path.string());
}

} // namespace defence::solver
