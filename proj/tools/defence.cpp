// Command-line front end: run, synth, eval.

#include "defence/error.hpp"
#include "defence/io.hpp"
#include "defence/log.hpp"
#include "defence/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace defence;

namespace {

int exit_code_for(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e))
        return 2;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e))
        return 3;
    if (dynamic_cast<const std::invalid_argument*>(&e))
        return 2;
    return 4;
}

int run_synth(const fs::path& spec_path, const fs::path& out_dir)
{
    const auto spec = pipeline::scene_spec_from(pipeline::read_key_value_file(spec_path));
    const auto scene = pipeline::generate_scene(spec);
    fs::create_directories(out_dir);
    imaging::save_image(out_dir / "left.png", scene.left);
    imaging::save_image(out_dir / "right.png", scene.right);
    imaging::save_image(out_dir / "truth_background.png", scene.truth_background);
    imaging::save_mask(out_dir / "truth_fence_left.pgm", scene.truth_fence_left);
    imaging::save_mask(out_dir / "truth_fence_right.pgm", scene.truth_fence_right);
    return 0;
}

int run_eval(const fs::path& result_path, const fs::path& truth_path, const fs::path& mask_path)
{
    const auto result = imaging::load_image(result_path);
    const auto truth = imaging::load_image(truth_path);
    const auto region = imaging::load_mask(mask_path);
    const auto ev = pipeline::evaluate(result, truth, region);
    std::cout << "mse " << ev.mse << '\n';
    if (std::isinf(ev.psnr))
        std::cout << "psnr inf\n";
    else
        std::cout << "psnr " << ev.psnr << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Stereo fence removal"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Progress messages on stderr");

    auto* run = app.add_subcommand("run", "Remove the fence from a stereo pair");
    std::string left, right, out, config_path, debug_dir;
    run->add_option("--left", left, "Left view")->required();
    run->add_option("--right", right, "Right view")->required();
    run->add_option("--out", out, "Output image")->required();
    run->add_option("--config", config_path, "key = value configuration file");
    run->add_option("--debug-dir", debug_dir, "Directory for intermediate results");
    std::map<std::string, std::string> overrides;
    for (const auto& key : pipeline::config_keys())
        run->add_option("--" + key, overrides[key], "Overrides " + key);

    auto* synth = app.add_subcommand("synth", "Render a synthetic fenced stereo pair");
    std::string spec_path, out_dir;
    synth->add_option("--spec", spec_path, "Scene description")->required();
    synth->add_option("--out-dir", out_dir, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "MSE and PSNR inside a mask");
    std::string result_path, truth_path, mask_path;
    eval->add_option("--result", result_path)->required();
    eval->add_option("--truth", truth_path)->required();
    eval->add_option("--mask", mask_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    set_verbose(verbose);

    try {
        if (*run) {
            pipeline::PipelineConfig cfg;
            cfg.left = left;
            cfg.right = right;
            cfg.output = out;
            if (!debug_dir.empty())
                cfg.debug_dir = fs::path(debug_dir);
            if (!config_path.empty())
                pipeline::apply_config(cfg, pipeline::read_key_value_file(config_path));
            pipeline::KeyValues flags;
            for (const auto& [key, value] : overrides)
                if (run->count("--" + key) > 0)
                    flags[key] = value;
            pipeline::apply_config(cfg, flags);
            return pipeline::run_pipeline(cfg);
        }
        if (*synth)
            return run_synth(spec_path, out_dir);
        return run_eval(result_path, truth_path, mask_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}
