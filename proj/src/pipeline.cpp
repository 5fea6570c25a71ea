#include "tiledefect/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fcntl.h>
#include <iomanip>
#include <sstream>
#include <unistd.h>

#include "tiledefect/metrics.hpp"

namespace tiledefect {

using ojson = nlohmann::ordered_json;

namespace {

ojson counts_json(const ClassCounts& c) { return {{"0", c.negative}, {"1", c.positive}, {"total", c.total()}}; }

std::vector<AnnotatedImage> synth_set(const SceneSpec& spec, int count, const fs::path& manifest_path,
                                      const std::string& prefix) {
    const fs::path dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
    auto images = generate_dataset(spec, count, dir, prefix);
    if (manifest_path.filename() != "manifest.json") {
        save_source_manifest(images, manifest_path);
        fs::remove(dir / "manifest.json");
    }
    return images;
}

}  // namespace

StageResult run_synth(const PipelineConfig& cfg) {
    StageResult r;
    const int count = static_cast<int>(cfg.get_int("synth.count"));
    const int target_count = static_cast<int>(cfg.get_int("synth.target_count"));
    const auto source = synth_set(cfg.scene(false), count, cfg.source_manifest(), "SRC");
    r.outputs["source_manifest"] = cfg.source_manifest().string();
    r.outputs["source_images"] = source.size();
    if (target_count > 0) {
        const auto target = synth_set(cfg.scene(true), target_count, cfg.target_manifest(), "TGT");
        r.outputs["target_manifest"] = cfg.target_manifest().string();
        r.outputs["target_images"] = target.size();
    }
    return r;
}

StageResult run_preprocess(const PipelineConfig& cfg) {
    StageResult r;
    const auto images = load_source_manifest(cfg.source_manifest());
    PreprocessOptions opts;
    opts.grid = cfg.grid();
    opts.canny = cfg.canny();
    opts.source_manifest = relative_path(cfg.source_manifest(), cfg.tiles_dir());
    auto outcome = preprocess_dataset(images, opts, cfg.tiles_dir());
    r.warnings = std::move(outcome.warnings);
    r.outputs["manifest"] = (cfg.tiles_dir() / "manifest.json").string();
    r.outputs["images"] = images.size();
    r.outputs["counts"] = counts_json(outcome.manifest.counts());
    return r;
}

StageResult run_enhance(const PipelineConfig& cfg) {
    StageResult r;
    const DatasetManifest enhanced = load_dataset_manifest(cfg.tiles_dir() / "manifest.json");
    const fs::path out = cfg.balanced_dir();
    const DatasetManifest balanced = balance_dataset(enhanced, cfg.get_uint("seed"), out);
    const SplitResult parts = split_dataset(balanced, cfg.split());
    save_dataset_manifest(parts.train, out / "train.json");
    save_dataset_manifest(parts.val, out / "val.json");
    save_dataset_manifest(parts.test, out / "test.json");
    r.outputs["manifest"] = (out / "manifest.json").string();
    r.outputs["counts"] = counts_json(balanced.counts());
    r.outputs["train"] = counts_json(parts.train.counts());
    r.outputs["val"] = counts_json(parts.val.counts());
    r.outputs["test"] = counts_json(parts.test.counts());
    return r;
}

StageResult run_train(const PipelineConfig& cfg, std::ostream* progress) {
    StageResult r;
    const DatasetManifest train_m = load_dataset_manifest(cfg.balanced_dir() / "train.json");
    const DatasetManifest val_m = load_dataset_manifest(cfg.balanced_dir() / "val.json");
    const ClassifierConfig config = cfg.classifier();
    const BackboneSpec& backbone = resolve_backbone(cfg.get_string("model.backbone"));
    ClassifierModel model = build_classifier(backbone, config);
    model = train(std::move(model), train_m, val_m, config, progress);
    save_model(model, cfg.model_dir());
    const auto& last = model.history().back();
    r.outputs["model_dir"] = cfg.model_dir().string();
    r.outputs["epochs"] = model.history().size();
    r.outputs["final"] = {{"train_loss", last.train_loss},
                          {"train_accuracy", last.train_accuracy},
                          {"val_loss", last.val_loss},
                          {"val_accuracy", last.val_accuracy}};
    return r;
}

DatasetManifest tile_target_images(const std::vector<AnnotatedImage>& images, const PipelineConfig& cfg,
                                   const fs::path& output_dir) {
    PreprocessOptions opts;
    opts.grid = cfg.grid();
    opts.canny = cfg.canny();
    opts.apply_crop = cfg.get_bool("detect.apply_crop");
    opts.source_manifest = relative_path(cfg.target_manifest(), output_dir);
    return preprocess_dataset(images, opts, output_dir).manifest;
}

StageResult run_evaluate(const PipelineConfig& cfg) {
    StageResult r;
    const ClassifierModel model = load_model(cfg.model_dir());
    const fs::path out = cfg.eval_dir();
    std::vector<std::pair<std::string, MetricsReport>> rows;
    ojson doc{{"model", model.describe()}};

    const DatasetManifest test = load_dataset_manifest(cfg.balanced_dir() / "test.json");
    const MetricsReport test_report = evaluate_tiles(model, test, cfg.get_double("eval.threshold"));
    doc["source_test"] = report_to_json(test_report);
    rows.emplace_back("source-test", test_report);

    if (fs::exists(cfg.target_manifest())) {
        const auto images = load_source_manifest(cfg.target_manifest());
        const DatasetManifest tiles = tile_target_images(images, cfg, out / "target_tiles");
        if (!tiles.entries.empty()) {
            const MetricsReport target_report = evaluate_tiles(model, tiles, cfg.get_double("detect.threshold"));
            doc["target"] = report_to_json(target_report);
            rows.emplace_back("target", target_report);
        }
    } else {
        r.warnings.push_back("no target manifest at " + cfg.target_manifest().string() + "; target evaluation skipped");
    }

    const std::string table = format_metrics_table(rows);
    write_text_file(out / "metrics.json", doc.dump(2) + "\n");
    write_text_file(out / "metrics.txt", table);
    r.outputs = doc;
    r.outputs["table"] = table;
    return r;
}

StageResult run_detect(const PipelineConfig& cfg) {
    StageResult r;
    const DetectionConfig dc = cfg.detection();
    if (auto w = dc.validate(); !w.empty()) r.warnings.push_back(w);
    const ClassifierModel model = load_model(cfg.model_dir());
    const auto images = load_source_manifest(cfg.target_manifest());
    const fs::path out = cfg.detect_dir();
    fs::create_directories(out);

    std::vector<DetectionResult> results;
    std::string report;
    ojson truth = ojson::array();
    for (const auto& img : images) {
        DetectionResult det = detect_defects(model, img, dc);
        write_png(out / (img.image_id + "_overlay.png"), render_overlay(img.pixels, det));
        report += detection_report_lines(det);

        // Tile-level agreement with the annotations, when the target images carry any.
        const CropResult cropped = crop_and_remap(img, det.crop);
        std::int64_t gt = 0;
        std::int64_t hit = 0;
        for (const auto& t : tile_and_label(cropped.image, dc.grid)) {
            if (t.label != 1) continue;
            ++gt;
            hit += classify_score(det.score(t.col, t.row), dc.threshold);
        }
        truth.push_back({{"image_id", img.image_id}, {"defective_tiles", gt}, {"flagged_defective_tiles", hit}});
        results.push_back(std::move(det));
    }
    write_text_file(out / "report.jsonl", report);
    ojson summary = detection_summary(results, model.describe());
    summary["ground_truth"] = truth;
    write_text_file(out / "summary.json", summary.dump(2) + "\n");
    r.outputs = summary;
    r.outputs["report"] = (out / "report.jsonl").string();
    return r;
}

// ---------------------------------------------------------------------------

WorkDirLock::WorkDirLock(const fs::path& work_dir) : path_(work_dir / ".tiledefect.lock") {
    fs::create_directories(work_dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw ValidationError("work directory " + work_dir.string() + " is locked by another run (" + path_.string() +
                              "); remove the lock file if no run is active");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

WorkDirLock::~WorkDirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

void write_run_log(const PipelineConfig& cfg, const std::string& stage, const StageResult& result,
                   double elapsed_seconds, const std::string& status) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ts;
    ts << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    ojson log{{"stage", stage},
              {"status", status},
              {"finished_at", ts.str()},
              {"elapsed_seconds", elapsed_seconds},
              {"seed", cfg.get_uint("seed")},
              {"config", cfg.resolved()},
              {"warnings", result.warnings},
              {"outputs", result.outputs}};
    write_text_file(cfg.work_dir() / "logs" / (stage + ".json"), log.dump(2) + "\n");
}

}  // namespace tiledefect
