// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include "defence/filters.hpp"
#include "defence/flow.hpp"
#include "defence/io.hpp"
#include "defence/pipeline.hpp"
#include "defence/solver.hpp"
#include "defence/stereo.hpp"
#include "helpers.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace defence;
using imaging::BinaryMask;
using imaging::GradientField;
using imaging::Image;
using testing_support::random_image;
using testing_support::random_mask;
using testing_support::smooth_texture;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double time_limit;
    std::function<Outcome()> body;
};

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

flow::WarpOperator shift_warp(int h, int w, double u, double v)
{
    flow::FlowField f(h, w);
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] = u;
        f.v[i] = v;
    }
    return flow::build_warp(f);
}

flow::FlowField random_flow(int h, int w, double mag, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> uni(-mag, mag);
    flow::FlowField f(h, w);
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] = uni(rng);
        f.v[i] = uni(rng);
    }
    return f;
}

GradientField random_field(int h, int w, int c, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    GradientField f(h, w, c);
    for (double& v : f.dx)
        v = g(rng);
    for (double& v : f.dy)
        v = g(rng);
    return f;
}

double split_objective(const Image& x, const solver::ObservationSet& obs, const GradientField& d,
                       const GradientField& b, double lambda)
{
    const GradientField g = imaging::grad(x);
    double s = 0.0;
    for (std::size_t i = 0; i < g.dx.size(); ++i) {
        const double ex = d.dx[i] - g.dx[i] - b.dx[i];
        const double ey = d.dy[i] - g.dy[i] - b.dy[i];
        s += ex * ex + ey * ey;
    }
    return solver::energy(x, obs, 0.0) + 0.5 * lambda * s;
}

// Two views of truth with random wire-like occlusions in each and a
// horizontal shift between them.
solver::ObservationSet two_frame_instance(int size, std::mt19937_64& rng, double noise)
{
    const Image truth = smooth_texture(size, size, rng);
    std::uniform_int_distribution<int> col(0, size - 1);
    solver::ObservationSet obs;
    for (int m = 0; m < 2; ++m) {
        BinaryMask fence(size, size);
        for (int k = 0; k < size / 8; ++k) {
            const int c = col(rng);
            for (int r = 0; r < size; ++r)
                for (int dc = 0; dc < 2 && c + dc < size; ++dc)
                    fence.set(r, c + dc, true);
        }
        solver::Frame f;
        f.visible = fence.complement();
        f.warp = m == 0 ? flow::WarpOperator::identity(size, size) : shift_warp(size, size, 1.5, 0.0);
        f.y = solver::degrade(truth, f.visible, f.warp, noise, rng());
        obs.frames.push_back(std::move(f));
    }
    return obs;
}

Outcome operators()
{
    std::mt19937_64 rng(101);
    double worst_grad = 0.0;
    double worst_warp = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Image u = random_image(16, 16, 1, rng, -1.0, 1.0);
        const GradientField g = random_field(16, 16, 1, rng);
        const GradientField gu = imaging::grad(u);
        const double lhs = imaging::dot(gu.dx, g.dx) + imaging::dot(gu.dy, g.dy);
        const double rhs = -imaging::dot(u.values(), imaging::div(g).values());
        worst_grad = std::max(worst_grad, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    for (int t = 0; t < 20; ++t) {
        const flow::WarpOperator op = flow::build_warp(random_flow(16, 16, 4.0, rng));
        const Image x = random_image(16, 16, 1, rng, -1.0, 1.0);
        const Image y = random_image(16, 16, 1, rng, -1.0, 1.0);
        const double lhs = imaging::dot(op.apply(x).values(), y.values());
        const double rhs = imaging::dot(x.values(), op.apply_adjoint(y).values());
        worst_warp = std::max(worst_warp, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    double worst_fd = 0.0;
    for (int t = 0; t < 10; ++t) {
        const int n = 12;
        const Image truth = random_image(n, n, 1, rng);
        solver::ObservationSet obs;
        obs.frames.push_back({{}, random_mask(n, n, 0.8, rng), flow::WarpOperator::identity(n, n)});
        obs.frames.push_back({{}, random_mask(n, n, 0.8, rng), flow::build_warp(random_flow(n, n, 2.0, rng))});
        for (auto& f : obs.frames)
            f.y = solver::degrade(truth, f.visible, f.warp, 0.01, rng());
        const Image x = random_image(n, n, 1, rng);
        const GradientField d = random_field(n, n, 1, rng, 0.1);
        const GradientField b = random_field(n, n, 1, rng, 0.1);
        const double lambda = 0.1;
        const Image dir = random_image(n, n, 1, rng, -1.0, 1.0);
        const double h = 1e-5;
        Image xp = x, xm = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            xp.values()[i] += h * dir.values()[i];
            xm.values()[i] -= h * dir.values()[i];
        }
        const double fd = (split_objective(xp, obs, d, b, lambda) - split_objective(xm, obs, d, b, lambda)) / (2 * h);
        const double an = imaging::dot(solver::data_gradient(x, obs, d, b, lambda).values(), dir.values());
        worst_fd = std::max(worst_fd, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
    }
    Outcome o;
    o.pass = worst_grad <= 1e-9 && worst_warp <= 1e-9 && worst_fd <= 1e-4;
    o.detail = "grad/div " + fmt("%.1e", worst_grad) + ", warp " + fmt("%.1e", worst_warp) + ", data_gradient fd " +
               fmt("%.1e", worst_fd);
    return o;
}

Outcome shrinkage()
{
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> vd(-0.5, 0.5);
    std::uniform_real_distribution<double> mud(0.001, 0.05);
    std::uniform_real_distribution<double> lamd(0.05, 1.0);
    const double step = 1e-3;
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const double vx = vd(rng), vy = vd(rng);
        const double mu = mud(rng), lambda = lamd(rng);
        GradientField g(1, 1, 1);
        g.dx[0] = vx;
        g.dy[0] = vy;
        const GradientField s = solver::shrink(g, mu / lambda);
        // the minimiser lies within min(mu/lambda, |v|) of v
        const double reach = std::min(mu / lambda, std::hypot(vx, vy)) + 2 * step;
        const int i0 = static_cast<int>(std::floor((vx - reach) / step));
        const int i1 = static_cast<int>(std::ceil((vx + reach) / step));
        const int j0 = static_cast<int>(std::floor((vy - reach) / step));
        const int j1 = static_cast<int>(std::ceil((vy + reach) / step));
        double best = 1e300, bx = 0.0, by = 0.0;
        for (int i = i0; i <= i1; ++i)
            for (int j = j0; j <= j1; ++j) {
                const double x = i * step, y = j * step;
                const double f = mu * std::hypot(x, y) + 0.5 * lambda * ((x - vx) * (x - vx) + (y - vy) * (y - vy));
                if (f < best) {
                    best = f;
                    bx = x;
                    by = y;
                }
            }
        worst = std::max({worst, std::abs(s.dx[0] - bx), std::abs(s.dy[0] - by)});
    }
    return {worst <= 2e-3, "max deviation from grid argmin " + fmt("%.2e", worst) + " over 1000 samples"};
}

Outcome solver_sanity()
{
    std::mt19937_64 rng(103);
    const Image y = random_image(32, 32, 3, rng);
    solver::ObservationSet single;
    single.frames.push_back({y, BinaryMask(32, 32, true), flow::WarpOperator::identity(32, 32)});
    solver::SolverConfig cfg;
    cfg.mu = 0.0;
    const solver::SolveResult ls = solver::solve(single, cfg, Image(32, 32, 3, 0.5));
    double dev = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        dev = std::max(dev, std::abs(ls.x.values()[i] - y.values()[i]));

    int monotone = 0;
    double worst_rise = 0.0;
    for (int t = 0; t < 5; ++t) {
        const solver::ObservationSet obs = two_frame_instance(32, rng, 0.01);
        const solver::SolveResult res =
            solver::solve(obs, solver::SolverConfig{}, solver::fill_occluded(obs.frames[0].y, obs.frames[0].visible));
        const auto& e = res.state.energy_trace;
        const double slack = 1e-8 * (1.0 + std::abs(e[0]));
        bool ok = true;
        for (std::size_t k = 1; k < e.size(); ++k) {
            worst_rise = std::max(worst_rise, (e[k] - e[k - 1]) / (1.0 + std::abs(e[0])));
            ok = ok && e[k] <= e[k - 1] + slack;
        }
        monotone += ok;
    }
    Outcome o;
    o.pass = dev <= 1e-4 && monotone == 5;
    o.detail = "mu=0 max|x-y| " + fmt("%.1e", dev) + "; monotone traces " + std::to_string(monotone) +
               "/5 (largest relative rise " + fmt("%.1e", worst_rise) + ")";
    return o;
}

Outcome stereo_recovery()
{
    const int n = 256, shift = 7;
    std::mt19937_64 rng(104);
    const Image wide = random_image(n, n + shift, 1, rng);
    Image left(n, n, 1), right(n, n, 1);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            left.at(r, c) = wide.at(r, c);
            right.at(r, c) = wide.at(r, c + shift);
        }
    stereo::StereoParams p;
    p.d_max = 16;
    const stereo::DisparityPair dp = stereo::compute_disparity(left, right, p);
    const int margin = p.patch_radius + p.d_max;
    int hits = 0, total = 0;
    for (int r = margin; r < n - margin; ++r)
        for (int c = margin; c < n - margin; ++c) {
            ++total;
            hits += dp.left.is_valid(r, c) && dp.left.at(r, c) == shift;
        }
    const double frac = static_cast<double>(hits) / total;
    return {frac >= 0.95, "disparity 7 at " + fmt("%.2f%%", 100 * frac) + " of interior pixels"};
}

Outcome flow_recovery()
{
    const int n = 128;
    std::mt19937_64 rng(105);
    const Image big = smooth_texture(n, n + 3, rng);
    Image ref(n, n, 1), tgt(n, n, 1);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            tgt.at(r, c) = big.at(r, c);
            ref.at(r, c) = big.at(r, c + 3);
        }
    const flow::FlowField f = flow::estimate_flow(ref, tgt);
    double s = 0.0;
    int cnt = 0;
    const int margin = 8;
    for (int r = margin; r < n - margin; ++r)
        for (int c = margin; c < n - margin; ++c) {
            const std::size_t p = f.index(r, c);
            s += std::hypot(f.u[p] - 3.0, f.v[p]);
            ++cnt;
        }
    const double epe = s / cnt;
    return {epe <= 0.5, "interior mean endpoint error " + fmt("%.3f px", epe)};
}

pipeline::PipelineConfig synthetic_config()
{
    pipeline::PipelineConfig cfg;
    pipeline::apply_config(cfg, pipeline::read_key_value_file(std::filesystem::path(DEFENCE_DATA_DIR) / "synthetic.cfg"));
    return cfg;
}

struct SceneRun {
    pipeline::SyntheticScene scene;
    pipeline::PipelineOutputs out;
};

SceneRun run_scene(double noise)
{
    pipeline::SyntheticSceneSpec spec; // 320x240, fence 20 px, background 5 px, wire 4, pitch 32
    spec.noise_sigma = noise;
    SceneRun r;
    r.scene = pipeline::generate_scene(spec);
    r.out = pipeline::run_pipeline(r.scene.left, r.scene.right, synthetic_config());
    return r;
}

SceneRun noiseless;

Outcome mask_quality()
{
    noiseless = run_scene(0.0);
    const double iou = pipeline::mask_iou(noiseless.out.left_mask.fence, noiseless.scene.truth_fence_left);
    const double iou_r = pipeline::mask_iou(noiseless.out.right_mask.fence, noiseless.scene.truth_fence_right);
    return {iou >= 0.9, "IoU left " + fmt("%.3f", iou) + " (right " + fmt("%.3f", iou_r) + ")"};
}

Outcome reconstruction()
{
    if (noiseless.out.result.size() == 0)
        noiseless = run_scene(0.0);
    const SceneRun noisy = run_scene(0.01);
    const double clean = pipeline::evaluate(noiseless.out.result, noiseless.scene.truth_background,
                                            noiseless.scene.truth_fence_left)
                             .psnr;
    const double with_noise =
        pipeline::evaluate(noisy.out.result, noisy.scene.truth_background, noisy.scene.truth_fence_left).psnr;
    return {clean >= 30.0 && with_noise >= 27.0,
            "fence-region PSNR " + fmt("%.2f dB", clean) + " noiseless, " + fmt("%.2f dB", with_noise) +
                " at sigma 0.01"};
}

Outcome real_smoke()
{
    testing_support::TempDir dir("smoke");
    pipeline::PipelineConfig cfg;
    cfg.left = std::filesystem::path(DEFENCE_DATA_DIR) / "motorcycle_fenced_left.png";
    cfg.right = std::filesystem::path(DEFENCE_DATA_DIR) / "motorcycle_fenced_right.png";
    cfg.output = dir.path() / "background.png";
    cfg.debug_dir = dir.path() / "debug";
    const int code = pipeline::run_pipeline(cfg);
    int present = 0;
    for (const auto& name : pipeline::debug_artifact_names()) {
        const auto p = *cfg.debug_dir / name;
        present += std::filesystem::exists(p) && std::filesystem::file_size(p) > 0;
    }
    const int expected = static_cast<int>(pipeline::debug_artifact_names().size());
    const bool out_ok = code == 0 && std::filesystem::exists(cfg.output);
    return {out_ok && present == expected, "motorcycle pair: exit " + std::to_string(code) + ", " +
                                               std::to_string(present) + "/" + std::to_string(expected) +
                                               " debug artifacts"};
}

} // namespace

int main()
{
    const Criterion criteria[] = {
        {1, "operator correctness", 10.0, operators},
        {2, "shrinkage oracle", 5.0, shrinkage},
        {3, "solver sanity", 30.0, solver_sanity},
        {4, "stereo recovery", 60.0, stereo_recovery},
        {5, "flow recovery", 30.0, flow_recovery},
        {6, "fence mask quality", 120.0, mask_quality},
        {7, "end-to-end reconstruction", 180.0, reconstruction},
        {8, "real-data smoke", 600.0, real_smoke},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = sec <= c.time_limit;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("%s criterion %d (%s): %s; %.1f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), sec, c.time_limit);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
