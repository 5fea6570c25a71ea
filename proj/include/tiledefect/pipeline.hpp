#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tiledefect/pipeline_config.hpp"

namespace tiledefect {

/// Outcome of one pipeline stage: declared outputs plus warnings, both
/// copied into the stage's run log.
struct StageResult {
    nlohmann::ordered_json outputs = nlohmann::ordered_json::object();
    std::vector<std::string> warnings;
};

/// synth: source and target image sets with annotation manifests.
StageResult run_synth(const PipelineConfig& cfg);
/// preprocess: source manifest -> enhanced tile dataset.
StageResult run_preprocess(const PipelineConfig& cfg);
/// enhance: enhanced dataset -> balanced dataset + train/val/test manifests.
StageResult run_enhance(const PipelineConfig& cfg);
/// train: train/val manifests -> model artifact.
StageResult run_train(const PipelineConfig& cfg, std::ostream* progress = nullptr);
/// evaluate: model on the test split and, when present, on tiled target images.
StageResult run_evaluate(const PipelineConfig& cfg);
/// detect: model on target images -> overlays + report.
StageResult run_detect(const PipelineConfig& cfg);

/// Tiles annotated target images with the source-side procedure so their
/// tiles carry ground-truth labels for evaluation.
DatasetManifest tile_target_images(const std::vector<AnnotatedImage>& images, const PipelineConfig& cfg,
                                   const fs::path& output_dir);

/// Exclusive lock on a work directory, held for the object's lifetime.
class WorkDirLock {
public:
    explicit WorkDirLock(const fs::path& work_dir);
    ~WorkDirLock();
    WorkDirLock(const WorkDirLock&) = delete;
    WorkDirLock& operator=(const WorkDirLock&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// Writes <work_dir>/logs/<stage>.json with the resolved config, timing and
/// stage outputs.
void write_run_log(const PipelineConfig& cfg, const std::string& stage, const StageResult& result,
                   double elapsed_seconds, const std::string& status);

}  // namespace tiledefect
