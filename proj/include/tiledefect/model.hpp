#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tiledefect/core_data.hpp"
#include "tiledefect/network.hpp"
#include "tiledefect/scorer.hpp"

namespace tiledefect {

struct BackboneSpec {
    std::string name;
    std::string depth_class;  // "~100", "~200", "~400", "desk-scale"
    int input_size = 32;
    int channels = 1;         // channel count the backbone consumes
    bool pretrained = false;
    nn::Architecture architecture;  // only meaningful for locally trainable backbones
};

/// xception-class, resnet101v2-class, inceptionresnetv2-class and tiny.
const std::vector<BackboneSpec>& backbone_registry();

/// Throws ValidationError for names missing from the registry.
const BackboneSpec& resolve_backbone(const std::string& name);

/// Pretrained backbones need ImageNet weights from an external provider.
/// None is bundled, so only "tiny" can be built in this distribution.
bool pretrained_weights_available(const BackboneSpec& spec);

struct ClassifierConfig {
    double dropout_rate = 0.2;
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
    int freeze_epochs = 0;  // optional two-stage schedule: head only for the first k epochs

    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

/// v / 127.5 - 1
inline double rescale_value(double v) { return v / 127.5 - 1.0; }

/// Elementwise [0,255] -> [-1,1] over an 8-bit raster, row-major and
/// channel-major for multi-channel input.
std::vector<double> rescale_pixels(const cv::Mat& raster);

struct TileSet {
    std::vector<cv::Mat> tiles;
    std::vector<int> labels;

    std::size_t size() const { return tiles.size(); }
};

/// Rescale + backbone + global average pooling + dropout + sigmoid unit.
class ClassifierModel : public TileScorer {
public:
    ClassifierModel(BackboneSpec backbone, ClassifierConfig config, nn::Network network);

    const BackboneSpec& backbone() const { return backbone_; }
    const ClassifierConfig& config() const { return config_; }
    const std::vector<EpochMetrics>& history() const { return history_; }
    const nn::Network& network() const { return network_; }
    nn::Network& network() { return network_; }

    /// Resize to the backbone input (bilinear), replicate gray to the
    /// backbone's channel count and rescale.
    std::vector<double> prepare_input(const cv::Mat& tile) const;

    /// Inference-mode probability; dropout disabled, deterministic.
    double predict_tile(const cv::Mat& tile) const;
    std::vector<double> predict_batch(const std::vector<cv::Mat>& tiles) const;

    double score_tile(const cv::Mat& tile) const override { return predict_tile(tile); }
    std::string describe() const override;

    void set_history(std::vector<EpochMetrics> history) { history_ = std::move(history); }
    void set_config(const ClassifierConfig& config) { config_ = config; }

private:
    BackboneSpec backbone_;
    ClassifierConfig config_;
    nn::Network network_;
    std::vector<EpochMetrics> history_;
};

using TrainedModel = ClassifierModel;

/// Head initialized from config.seed, final bias zero. Throws
/// ValidationError for unknown backbones or missing pretrained weights.
ClassifierModel build_classifier(const BackboneSpec& backbone, const ClassifierConfig& config);

/// Loads every tile file listed in the manifest.
TileSet load_tile_set(const DatasetManifest& manifest);

/// Mini-batch Adam on mean binary cross-entropy, all parameters trainable
/// (unless config.freeze_epochs > 0). One history entry per epoch.
/// Per-epoch progress lines go to `progress` when given.
ClassifierModel train(ClassifierModel model, const TileSet& train_set, const TileSet& val_set,
                      const ClassifierConfig& config, std::ostream* progress = nullptr);
ClassifierModel train(ClassifierModel model, const DatasetManifest& train_manifest,
                      const DatasetManifest& val_manifest, const ClassifierConfig& config,
                      std::ostream* progress = nullptr);

/// Writes model.json (descriptor) and params.bin into dir.
void save_model(const ClassifierModel& model, const fs::path& dir);
ClassifierModel load_model(const fs::path& dir);

nlohmann::ordered_json config_to_json(const ClassifierConfig& config);

}  // namespace tiledefect
