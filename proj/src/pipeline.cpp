#include "defence/pipeline.hpp"

#include "defence/error.hpp"
#include "defence/filters.hpp"
#include "defence/io.hpp"
#include "defence/log.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <sstream>

namespace defence::pipeline {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size())
            throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
}

int to_int(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size() || v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            throw std::invalid_argument(value);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected an integer, got '" + value + "'");
    }
}

bool to_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes")
        return true;
    if (value == "false" || value == "0" || value == "no")
        return false;
    throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

using Setter = std::function<void(PipelineConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& config_setters()
{
    static const std::map<std::string, Setter> setters = {
        {"stereo.d_max", [](auto& c, auto& k, auto& v) { c.stereo.d_max = to_int(k, v); }},
        {"stereo.descriptor",
         [](auto& c, auto& k, auto& v) {
             try {
                 c.stereo.kind = stereo::parse_descriptor_kind(v);
             } catch (const std::invalid_argument& e) {
                 throw ConfigError(k + ": " + e.what());
             }
         }},
        {"stereo.patch_radius", [](auto& c, auto& k, auto& v) { c.stereo.patch_radius = to_int(k, v); }},
        {"stereo.aggregation_radius", [](auto& c, auto& k, auto& v) { c.stereo.aggregation_radius = to_int(k, v); }},
        {"stereo.lr_tolerance", [](auto& c, auto& k, auto& v) { c.stereo.lr_tolerance = to_double(k, v); }},
        {"stereo.median_radius", [](auto& c, auto& k, auto& v) { c.stereo.median_radius = to_int(k, v); }},
        {"mask.dilate_radius", [](auto& c, auto& k, auto& v) { c.mask.dilate_radius = to_int(k, v); }},
        {"mask.erode_radius", [](auto& c, auto& k, auto& v) { c.mask.erode_radius = to_int(k, v); }},
        {"mask.canny_low", [](auto& c, auto& k, auto& v) { c.mask.canny_low = to_double(k, v); }},
        {"mask.canny_high", [](auto& c, auto& k, auto& v) { c.mask.canny_high = to_double(k, v); }},
        {"mask.alpha_threshold", [](auto& c, auto& k, auto& v) { c.mask.alpha_threshold = to_double(k, v); }},
        {"mask.matting_eps", [](auto& c, auto& k, auto& v) { c.mask.matting.eps = to_double(k, v); }},
        {"mask.matting_gamma", [](auto& c, auto& k, auto& v) { c.mask.matting.gamma = to_double(k, v); }},
        {"mask.safety_dilate", [](auto& c, auto& k, auto& v) { c.safety_dilate = to_int(k, v); }},
        {"flow.sigma", [](auto& c, auto& k, auto& v) { c.flow_sigma = to_double(k, v); }},
        {"flow.levels", [](auto& c, auto& k, auto& v) { c.flow.levels = to_int(k, v); }},
        {"flow.alpha", [](auto& c, auto& k, auto& v) { c.flow.alpha = to_double(k, v); }},
        {"flow.iterations", [](auto& c, auto& k, auto& v) { c.flow.iterations = to_int(k, v); }},
        {"flow.max_magnitude", [](auto& c, auto& k, auto& v) { c.flow.max_magnitude = to_double(k, v); }},
        {"solver.mu", [](auto& c, auto& k, auto& v) { c.solver.mu = to_double(k, v); }},
        {"solver.lambda", [](auto& c, auto& k, auto& v) { c.solver.lambda = to_double(k, v); }},
        {"solver.outer_iters", [](auto& c, auto& k, auto& v) { c.solver.outer_iters = to_int(k, v); }},
        {"solver.sd_iters", [](auto& c, auto& k, auto& v) { c.solver.sd_iters = to_int(k, v); }},
        {"solver.sd_step",
         [](auto& c, auto& k, auto& v) {
             if (v == "auto")
                 c.solver.sd_step.reset();
             else
                 c.solver.sd_step = to_double(k, v);
         }},
        {"solver.tol", [](auto& c, auto& k, auto& v) { c.solver.tol = to_double(k, v); }},
        {"solver.tv",
         [](auto& c, auto& k, auto& v) {
             if (v == "isotropic")
                 c.solver.tv = solver::TvKind::isotropic;
             else if (v == "anisotropic")
                 c.solver.tv = solver::TvKind::anisotropic;
             else
                 throw ConfigError(k + ": expected isotropic or anisotropic, got '" + v + "'");
         }},
        {"solver.init_window", [](auto& c, auto& k, auto& v) { c.init_window = to_int(k, v); }},
    };
    return setters;
}

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw ConfigError(message);
}

} // namespace

void PipelineConfig::validate(bool check_paths) const
{
    if (check_paths) {
        require(!left.empty(), "left: input path is required");
        require(!right.empty(), "right: input path is required");
        require(!output.empty(), "out: output path is required");
    }
    require(stereo.d_max >= 1, "stereo.d_max must be >= 1");
    require(stereo.patch_radius >= 1, "stereo.patch_radius must be >= 1");
    require(stereo.aggregation_radius >= 0, "stereo.aggregation_radius must be >= 0");
    require(stereo.lr_tolerance >= 0.0, "stereo.lr_tolerance must be >= 0");
    require(stereo.median_radius >= 1, "stereo.median_radius must be >= 1");
    require(mask.dilate_radius >= 2, "mask.dilate_radius must be >= 2");
    require(mask.erode_radius >= 1, "mask.erode_radius must be >= 1");
    require(mask.canny_low >= 0.0 && mask.canny_low < mask.canny_high && mask.canny_high <= 1.0,
            "mask.canny_low/mask.canny_high must satisfy 0 <= low < high <= 1");
    require(mask.alpha_threshold > 0.0 && mask.alpha_threshold < 1.0, "mask.alpha_threshold must lie in (0,1)");
    require(mask.matting.eps > 0.0 && std::isfinite(mask.matting.eps), "mask.matting_eps must be > 0");
    require(mask.matting.gamma > 0.0 && std::isfinite(mask.matting.gamma), "mask.matting_gamma must be > 0");
    require(safety_dilate >= 0, "mask.safety_dilate must be >= 0");
    require(flow_sigma > 0.0 && std::isfinite(flow_sigma), "flow.sigma must be > 0");
    require(flow.levels >= 1 && flow.levels <= 12, "flow.levels must be in [1,12]");
    require(flow.alpha > 0.0 && std::isfinite(flow.alpha), "flow.alpha must be > 0");
    require(flow.iterations >= 1, "flow.iterations must be >= 1");
    require(flow.max_magnitude > 0.0, "flow.max_magnitude must be > 0");
    require(init_window >= 1, "solver.init_window must be >= 1");
    try {
        solver.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

KeyValues parse_key_values(const std::string& text)
{
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

KeyValues read_key_value_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str());
}

void apply_config(PipelineConfig& cfg, const KeyValues& kv)
{
    const auto& setters = config_setters();
    for (const auto& [key, value] : kv) {
        const auto it = setters.find(key);
        if (it == setters.end())
            throw ConfigError("unknown config key '" + key + "'");
        it->second(cfg, key, value);
    }
}

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& [key, setter] : config_setters())
        keys.push_back(key);
    return keys;
}

const std::vector<std::string>& debug_artifact_names()
{
    static const std::vector<std::string> names = {"disparity.pfm",   "disparity.png",   "scribbles.png",
                                                   "alpha.png",       "fence_left.pgm",  "fence_right.pgm",
                                                   "flow.pfm",        "energy.csv"};
    return names;
}

namespace {

template <typename F>
auto stage(const char* name, F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(name) + ": " + e.what());
    } catch (const IoError& e) {
        throw IoError(std::string(name) + ": " + e.what());
    } catch (const std::exception& e) {
        throw NumericalError(std::string(name) + ": " + e.what());
    }
}

} // namespace

PipelineOutputs run_pipeline(const Image& left, const Image& right, const PipelineConfig& cfg)
{
    stage("validate", [&] {
        cfg.validate(false);
        if (!left.same_shape(right))
            throw ConfigError("left and right images differ in size or channel count");
        if (left.width() <= cfg.stereo.d_max)
            throw ConfigError("stereo.d_max must be smaller than the image width");
        return 0;
    });

    PipelineOutputs out;
    const Image gray_left = imaging::to_luma(left);
    const Image gray_right = imaging::to_luma(right);

    log_info("stereo: matching with d_max " + std::to_string(cfg.stereo.d_max));
    out.disparity = stage("stereo", [&] { return stereo::compute_disparity(gray_left, gray_right, cfg.stereo); });

    log_info("fencemask: segmenting both views");
    out.left_mask = stage("fencemask(left)", [&] { return fencemask::detect_fence(left, out.disparity.left, cfg.mask); });
    out.right_mask =
        stage("fencemask(right)", [&] { return fencemask::detect_fence(right, out.disparity.right, cfg.mask); });
    out.visible_left = fencemask::mask_for_frame(out.left_mask.fence, cfg.safety_dilate);
    out.visible_right = fencemask::mask_for_frame(out.right_mask.fence, cfg.safety_dilate);

    log_info("flow: estimating right -> left correspondence");
    const flow::WarpOperator warp = stage("flow", [&] {
        const Image blur_left = flow::preblur_fences(gray_left, out.left_mask.fence, cfg.flow_sigma);
        const Image blur_right = flow::preblur_fences(gray_right, out.right_mask.fence, cfg.flow_sigma);
        out.flow = flow::estimate_flow(blur_right, blur_left, cfg.flow);
        return flow::build_warp(out.flow);
    });

    log_info("solver: split Bregman reconstruction");
    stage("solver", [&] {
        solver::ObservationSet obs;
        obs.frames.push_back({left, out.visible_left, flow::WarpOperator::identity(left.height(), left.width())});
        obs.frames.push_back({right, out.visible_right, warp});
        const Image x0 = solver::fill_occluded(left, out.visible_left, cfg.init_window);
        auto solved = solver::solve(obs, cfg.solver, x0);
        out.result = std::move(solved.x);
        out.solver_state = std::move(solved.state);
        return 0;
    });
    return out;
}

void write_debug_artifacts(const std::filesystem::path& dir, const Image& left, const PipelineOutputs& out)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& dm = out.disparity.left;
    imaging::write_pfm(dir / "disparity.pfm", dm.height, dm.width, 1, dm.disparity);
    imaging::save_image(dir / "disparity.png",
                        imaging::false_color(dm.disparity, dm.valid, dm.height, dm.width, 0.0, dm.d_max));
    imaging::save_image(dir / "scribbles.png", fencemask::render_scribbles(left, out.left_mask.scribbles));
    imaging::save_image(dir / "alpha.png", fencemask::render_alpha(out.left_mask.alpha));
    imaging::save_mask(dir / "fence_left.pgm", out.left_mask.fence);
    imaging::save_mask(dir / "fence_right.pgm", out.right_mask.fence);
    std::vector<double> uv(out.flow.u.size() * 2);
    for (std::size_t i = 0; i < out.flow.u.size(); ++i) {
        uv[2 * i] = out.flow.u[i];
        uv[2 * i + 1] = out.flow.v[i];
    }
    imaging::write_pfm(dir / "flow.pfm", out.flow.height, out.flow.width, 2, uv);
    solver::write_energy_csv(dir / "energy.csv", out.solver_state);
}

int run_pipeline(const PipelineConfig& cfg)
{
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    try {
        cfg.validate(true);
        const Image left = imaging::load_image(cfg.left);
        const Image right = imaging::load_image(cfg.right);
        const PipelineOutputs out = run_pipeline(left, right, cfg);

        written.push_back(cfg.output);
        if (cfg.output.has_parent_path())
            fs::create_directories(cfg.output.parent_path());
        imaging::save_image(cfg.output, out.result);
        if (cfg.debug_dir) {
            for (const auto& name : debug_artifact_names())
                written.push_back(*cfg.debug_dir / name);
            write_debug_artifacts(*cfg.debug_dir, left, out);
        }
        return 0;
    } catch (const std::exception& e) {
        std::error_code ec;
        for (const auto& p : written)
            fs::remove(p, ec);
        std::cerr << "error: " << e.what() << '\n';
        if (dynamic_cast<const ConfigError*>(&e))
            return 2;
        if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e))
            return 3;
        return 4;
    }
}

FenceOrientation parse_orientation(const std::string& name)
{
    if (name == "grid")
        return FenceOrientation::grid;
    if (name == "diamond")
        return FenceOrientation::diamond;
    if (name == "vertical")
        return FenceOrientation::vertical;
    throw ConfigError("orientation: expected grid, diamond or vertical, got '" + name + "'");
}

void SyntheticSceneSpec::validate() const
{
    require(height >= 16 && width >= 16, "scene size must be at least 16x16");
    require(wire_width >= 1, "wire_width must be >= 1");
    require(wire_width < pitch, "wire_width must be smaller than pitch");
    require(background_disparity >= 0, "background_disparity must be >= 0");
    require(fence_disparity > background_disparity, "fence_disparity must exceed background_disparity");
    require(fence_disparity < width, "fence_disparity must be smaller than the width");
    require(fence_intensity >= 0.0 && fence_intensity <= 1.0, "fence_intensity must lie in [0,1]");
    require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
}

SyntheticSceneSpec scene_spec_from(const KeyValues& kv)
{
    SyntheticSceneSpec spec;
    for (const auto& [k, v] : kv) {
        if (k == "height")
            spec.height = to_int(k, v);
        else if (k == "width")
            spec.width = to_int(k, v);
        else if (k == "background")
            spec.background_path = v;
        else if (k == "seed")
            spec.seed = static_cast<std::uint64_t>(to_int(k, v));
        else if (k == "wire_width")
            spec.wire_width = to_int(k, v);
        else if (k == "pitch")
            spec.pitch = to_int(k, v);
        else if (k == "orientation")
            spec.orientation = parse_orientation(v);
        else if (k == "fence_intensity")
            spec.fence_intensity = to_double(k, v);
        else if (k == "fence_disparity")
            spec.fence_disparity = to_int(k, v);
        else if (k == "background_disparity")
            spec.background_disparity = to_int(k, v);
        else if (k == "noise_sigma")
            spec.noise_sigma = to_double(k, v);
        else if (k == "color")
            spec.color = to_bool(k, v);
        else
            throw ConfigError("unknown scene key '" + k + "'");
    }
    return spec;
}

bool fence_pattern(const SyntheticSceneSpec& spec, int row, int col)
{
    auto wrap = [p = spec.pitch](long v) { return ((v % p) + p) % p; };
    // Column wires sit clear of the left strip the right view cannot see, and clear of the right view's border.
    const long spare = spec.pitch - spec.wire_width - spec.fence_disparity;
    const long phase = spec.fence_disparity + std::max(0L, spare / 2);
    switch (spec.orientation) {
    case FenceOrientation::vertical:
        return wrap(col - phase) < spec.wire_width;
    case FenceOrientation::grid:
        return wrap(col - phase) < spec.wire_width || wrap(row - spec.pitch / 2) < spec.wire_width;
    case FenceOrientation::diamond:
        return wrap(static_cast<long>(row) + col - phase) < spec.wire_width ||
               wrap(static_cast<long>(col) - row - phase) < spec.wire_width;
    }
    return false;
}

namespace {

// Multi-scale noise texture normalised to [lo, hi].
Image noise_texture(int h, int w, std::mt19937_64& rng, std::span<const double> scales, std::span<const double> weights,
                    double lo, double hi)
{
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Image plane(h, w, 1);
    for (std::size_t s = 0; s < scales.size(); ++s) {
        Image noise(h, w, 1);
        for (double& v : noise.values())
            v = uni(rng);
        const Image smooth = imaging::gaussian_blur(noise, scales[s]);
        // blurring shrinks the variance with the scale, so each octave is standardised first
        double mean = 0.0;
        for (double v : smooth.values())
            mean += v;
        mean /= static_cast<double>(smooth.size());
        double var = 0.0;
        for (double v : smooth.values())
            var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(smooth.size()));
        auto pv = plane.values();
        auto sv = smooth.values();
        for (std::size_t i = 0; i < pv.size(); ++i)
            pv[i] += weights[s] * (sv[i] - mean) / sd;
    }
    const auto [mn, mx] = std::minmax_element(plane.values().begin(), plane.values().end());
    const double a = *mn;
    const double span = std::max(*mx - a, 1e-12);
    for (double& v : plane.values())
        v = lo + (hi - lo) * (v - a) / span;
    return plane;
}

// Textured luminance with a slowly varying colour tint per channel.
Image procedural_background(int h, int w, int channels, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    constexpr double scales[] = {0.8, 1.6, 3.2, 6.4};
    constexpr double weights[] = {0.5, 0.7, 0.8, 1.0};
    const Image base = noise_texture(h, w, rng, scales, weights, 0.25, 0.95);
    if (channels == 1)
        return base;
    Image out(h, w, channels);
    constexpr double tint_scale[] = {8.0};
    constexpr double tint_weight[] = {1.0};
    for (int ch = 0; ch < channels; ++ch) {
        const Image tint = noise_texture(h, w, rng, tint_scale, tint_weight, 0.85, 1.1);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                out.at(r, c, ch) = std::clamp(base.at(r, c) * tint.at(r, c), 0.0, 1.0);
    }
    return out;
}

} // namespace

SyntheticScene generate_scene(const SyntheticSceneSpec& spec)
{
    spec.validate();
    const int h = spec.height;
    const int w = spec.width;
    const int bd = spec.background_disparity;
    const int fd = spec.fence_disparity;

    Image background;
    if (spec.background_path) {
        Image src = imaging::load_image(*spec.background_path);
        if (!spec.color)
            src = imaging::to_luma(src);
        if (src.height() < h || src.width() < w + bd)
            throw ConfigError("background image is smaller than the scene plus its disparity");
        background = Image(h, w + bd, src.channels());
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w + bd; ++c)
                for (int ch = 0; ch < src.channels(); ++ch)
                    background.at(r, c, ch) = src.at(r, c, ch);
    } else {
        background = procedural_background(h, w + bd, spec.color ? 3 : 1, spec.seed);
    }
    const int nc = background.channels();

    SyntheticScene scene;
    scene.truth_background = Image(h, w, nc);
    scene.truth_fence_left = BinaryMask(h, w);
    scene.truth_fence_right = BinaryMask(h, w);
    Image left(h, w, nc);
    Image right(h, w, nc);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const bool fl = fence_pattern(spec, r, c);
            const bool fr = fence_pattern(spec, r, c + fd);
            scene.truth_fence_left.set(r, c, fl);
            scene.truth_fence_right.set(r, c, fr);
            for (int ch = 0; ch < nc; ++ch) {
                scene.truth_background.at(r, c, ch) = background.at(r, c, ch);
                left.at(r, c, ch) = fl ? spec.fence_intensity : background.at(r, c, ch);
                right.at(r, c, ch) = fr ? spec.fence_intensity : background.at(r, c + bd, ch);
            }
        }

    const BinaryMask all(h, w, true);
    const auto identity = flow::WarpOperator::identity(h, w);
    scene.left = solver::degrade(left, all, identity, spec.noise_sigma, spec.seed * 2 + 1).clamped();
    scene.right = solver::degrade(right, all, identity, spec.noise_sigma, spec.seed * 2 + 2).clamped();
    return scene;
}

Evaluation evaluate(const Image& result, const Image& truth, const BinaryMask& region)
{
    if (!result.same_shape(truth))
        throw std::invalid_argument("evaluate: result and truth differ in size");
    if (region.height() != truth.height() || region.width() != truth.width())
        throw std::invalid_argument("evaluate: region size mismatch");
    if (region.none())
        throw std::invalid_argument("evaluate: empty region");
    const int nc = truth.channels();
    auto a = result.values();
    auto b = truth.values();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < region.pixel_count(); ++p) {
        if (!region[p])
            continue;
        for (int ch = 0; ch < nc; ++ch) {
            const double d = a[p * nc + ch] - b[p * nc + ch];
            sum += d * d;
            ++n;
        }
    }
    Evaluation ev;
    ev.mse = sum / static_cast<double>(n);
    ev.psnr = ev.mse > 0.0 ? 10.0 * std::log10(1.0 / ev.mse) : std::numeric_limits<double>::infinity();
    return ev;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b)
{
    if (a.height() != b.height() || a.width() != b.width())
        throw std::invalid_argument("mask_iou: size mismatch");
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        inter += a[i] && b[i];
        uni += a[i] || b[i];
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace defence::pipeline
