#pragma once

#include "defence/fencemask.hpp"
#include "defence/flow.hpp"
#include "defence/image.hpp"
#include "defence/solver.hpp"
#include "defence/stereo.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace defence::pipeline {

using imaging::BinaryMask;
using imaging::Image;

struct PipelineConfig {
    std::filesystem::path left;
    std::filesystem::path right;
    std::filesystem::path output;
    std::optional<std::filesystem::path> debug_dir;

    stereo::StereoParams stereo;
    fencemask::FenceParams mask;
    int safety_dilate = 1;
    double flow_sigma = 2.0;
    flow::FlowParams flow;
    solver::SolverConfig solver;
    int init_window = 11;

    /// Throws ConfigError naming the first out-of-range field. Paths are only
    /// checked when check_paths is set.
    void validate(bool check_paths = true) const;
};

/// Flat "key = value" text, '#' starts a comment. Unknown keys and malformed
/// values throw ConfigError.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_value_file(const std::filesystem::path& path);

/// Applies every recognised key to cfg.
void apply_config(PipelineConfig& cfg, const KeyValues& kv);

/// All keys accepted by apply_config, e.g. "stereo.d_max".
std::vector<std::string> config_keys();

/// Names of the files written into the debug directory.
const std::vector<std::string>& debug_artifact_names();

struct PipelineOutputs {
    Image result;
    stereo::DisparityPair disparity;
    fencemask::FenceDetection left_mask;
    fencemask::FenceDetection right_mask;
    BinaryMask visible_left;
    BinaryMask visible_right;
    flow::FlowField flow; // right grid -> left
    solver::SolverState solver_state;
};

/// In-memory pipeline. Errors are rethrown as the same category with the
/// failing stage prefixed to the message.
PipelineOutputs run_pipeline(const Image& left, const Image& right, const PipelineConfig& cfg);

/// File-based pipeline used by the command-line front end. Returns the exit
/// status (0 ok, 2 config, 3 I/O, 4 numerical) and removes partial outputs on
/// failure.
int run_pipeline(const PipelineConfig& cfg);

/// Writes the documented debug artifacts for a finished run.
void write_debug_artifacts(const std::filesystem::path& dir, const Image& left, const PipelineOutputs& out);

enum class FenceOrientation { grid, diamond, vertical };

FenceOrientation parse_orientation(const std::string& name);

struct SyntheticSceneSpec {
    int height = 240;
    int width = 320;
    std::optional<std::filesystem::path> background_path; // procedural texture when empty
    std::uint64_t seed = 1;
    int wire_width = 4;
    int pitch = 32;
    FenceOrientation orientation = FenceOrientation::vertical;
    double fence_intensity = 0.08;
    int fence_disparity = 20;
    int background_disparity = 5;
    double noise_sigma = 0.0;
    bool color = true;

    void validate() const;
};

SyntheticSceneSpec scene_spec_from(const KeyValues& kv);

struct SyntheticScene {
    Image left;
    Image right;
    Image truth_background;
    BinaryMask truth_fence_left;
    BinaryMask truth_fence_right;
};

/// True when pixel (row, col) of the fence plane lies on a wire.
bool fence_pattern(const SyntheticSceneSpec& spec, int row, int col);

/// The right view sees the background shifted by background_disparity and
/// the fence by fence_disparity (a point at left column c appears at c - d).
SyntheticScene generate_scene(const SyntheticSceneSpec& spec);

struct Evaluation {
    double psnr = 0.0; // +infinity when mse == 0
    double mse = 0.0;
};

/// MSE and PSNR (peak 1) over the pixels where region is true.
Evaluation evaluate(const Image& result, const Image& truth, const BinaryMask& region);

double mask_iou(const BinaryMask& a, const BinaryMask& b);

} // namespace defence::pipeline
