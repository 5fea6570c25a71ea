#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tiledefect/pipeline.hpp"

using namespace tiledefect;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct StageCommand {
    CLI::App* app = nullptr;
    std::string input;
    std::string output;
    std::string extra;  // synth: target manifest, detect: model dir
    const char* input_key = nullptr;
    const char* output_key = nullptr;
    const char* extra_key = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tiledefect: tile-based surface defect detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string grid;
    std::optional<double> threshold;
    std::string backbone;
    std::optional<int> epochs;
    std::string out_dir;
    app.add_option("--config", config_path, "pipeline configuration file (JSON)")->required();
    app.add_option("--seed", seed, "master RNG seed");
    app.add_option("--grid", grid, "tile grid as MxN, e.g. 10x10");
    app.add_option("--threshold", threshold, "detection threshold");
    app.add_option("--backbone", backbone, "model backbone name");
    app.add_option("--epochs", epochs, "training epochs");
    app.add_option("--out", out_dir, "work directory (paths.work_dir)");

    // Every configuration key is also a flag of the same name.
    std::map<std::string, std::string> key_values;
    std::map<std::string, CLI::Option*> key_options;
    for (const auto& key : config_schema()) {
        if (key.name == "seed") continue;
        key_options[key.name] = app.add_option("--" + key.name, key_values[key.name], key.help)->group("Config keys");
    }

    std::map<std::string, StageCommand> stages;
    auto add_stage = [&](const std::string& name, const std::string& help, const char* in_key, const char* out_key,
                         const char* extra_key = nullptr, const std::string& extra_flag = "") {
        StageCommand& s = stages[name];
        s.app = app.add_subcommand(name, help);
        s.input_key = in_key;
        s.output_key = out_key;
        s.extra_key = extra_key;
        if (in_key) s.app->add_option("--input", s.input, std::string("overrides ") + in_key);
        if (out_key) s.app->add_option("--output", s.output, std::string("overrides ") + out_key);
        if (extra_key) s.app->add_option(extra_flag, s.extra, std::string("overrides ") + extra_key);
    };
    add_stage("synth", "generate synthetic source and target image sets", nullptr, "paths.source_manifest",
              "paths.target_manifest", "--target-output");
    add_stage("preprocess", "crop, tile and label source images", "paths.source_manifest", "paths.tiles_dir");
    add_stage("enhance", "balance the tile dataset and split it 8:1:1", "paths.tiles_dir", "paths.balanced_dir");
    add_stage("train", "train the tile classifier", "paths.balanced_dir", "paths.model_dir");
    add_stage("evaluate", "report metrics on the test split and target tiles", "paths.model_dir", "paths.eval_dir");
    add_stage("detect", "flag defective tiles on target images", "paths.target_manifest", "paths.detect_dir",
              "paths.model_dir", "--model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    std::string stage_name;
    StageCommand* stage = nullptr;
    for (auto& [name, s] : stages) {
        if (s.app->parsed()) {
            stage_name = name;
            stage = &s;
        }
    }

    std::optional<PipelineConfig> cfg;
    try {
        cfg = PipelineConfig::from_file(config_path);
        for (const auto& [key, opt] : key_options) {
            if (opt->count() > 0) cfg->set_from_string(key, key_values[key]);
        }
        if (seed) cfg->set("seed", *seed);
        if (!grid.empty()) {
            const GridSpec g = parse_grid(grid);
            cfg->set("grid.m", g.columns);
            cfg->set("grid.n", g.rows);
        }
        if (threshold) cfg->set("detect.threshold", *threshold);
        if (!backbone.empty()) cfg->set("model.backbone", backbone);
        if (epochs) cfg->set("model.epochs", *epochs);
        if (!out_dir.empty()) cfg->set("paths.work_dir", out_dir);
        if (!stage->input.empty()) cfg->set(stage->input_key, stage->input);
        if (!stage->output.empty()) cfg->set(stage->output_key, stage->output);
        if (!stage->extra.empty()) cfg->set(stage->extra_key, stage->extra);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }

    StageResult result;
    int code = 0;
    std::string status = "ok";
    const auto t0 = std::chrono::steady_clock::now();
    try {
        WorkDirLock lock(cfg->work_dir());
        std::cerr << "[INFO] " << stage_name << ": work directory " << cfg->work_dir().string() << "\n";
        if (stage_name == "synth") result = run_synth(*cfg);
        else if (stage_name == "preprocess") result = run_preprocess(*cfg);
        else if (stage_name == "enhance") result = run_enhance(*cfg);
        else if (stage_name == "train") result = run_train(*cfg, &std::cerr);
        else if (stage_name == "evaluate") result = run_evaluate(*cfg);
        else if (stage_name == "detect") result = run_detect(*cfg);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = kExitValidation;
        status = "validation-error";
        result.warnings.push_back(e.what());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = kExitRuntime;
        status = "runtime-error";
        result.warnings.push_back(e.what());
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    for (const auto& w : result.warnings) {
        if (code == 0) std::cerr << "[WARN] " << w << "\n";
    }
    try {
        write_run_log(*cfg, stage_name, result, elapsed, status);
    } catch (const std::exception& e) {
        std::cerr << "[WARN] could not write run log: " << e.what() << "\n";
    }
    if (code == 0) {
        if (result.outputs.contains("table")) std::cout << result.outputs["table"].get<std::string>();
        else std::cout << result.outputs.dump(2) << "\n";
    }
    return code;
}
