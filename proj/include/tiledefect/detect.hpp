#pragma once

#include <string>
#include <vector>

#include "tiledefect/core_data.hpp"
#include "tiledefect/preprocess.hpp"
#include "tiledefect/scorer.hpp"

namespace tiledefect {

struct DetectionConfig {
    GridSpec grid;
    double threshold = 0.7;
    bool apply_crop = true;
    CannyParams canny;

    /// Throws for thresholds outside (0,1); returns a warning for
    /// thresholds at or below 0.5, empty otherwise.
    std::string validate() const;
};

struct FlaggedTile {
    int col = 0;
    int row = 0;
    PixelRect rect;  // original-image pixels
    double score = 0.0;
};

struct DetectionResult {
    std::string image_id;
    GridSpec grid;
    double threshold = 0.7;
    CropBox crop;                   // full image when cropping is off
    std::vector<double> scores;     // index col * rows + row
    std::vector<PixelRect> rects;   // every tile, original-image pixels, same indexing
    std::vector<FlaggedTile> flagged;

    double score(int col, int row) const { return scores.at(static_cast<std::size_t>(col) * grid.rows + row); }
};

/// 1 iff p > threshold.
int classify_score(double p, double threshold);

/// Non-overlapping grid pass over the (optionally cropped) image; every
/// tile is scored, flagged tiles are those strictly above the threshold,
/// ordered by (col, row).
DetectionResult detect_defects(const TileScorer& model, const AnnotatedImage& image, const DetectionConfig& config);

/// Re-thresholds existing scores without re-running the model.
std::vector<FlaggedTile> flag_tiles(const DetectionResult& result, double threshold);

struct OverlayStyle {
    cv::Scalar color{0, 0, 255};  // BGR
    int thickness = 2;
    bool draw_scores = true;
};

/// BGR copy of the image with one rectangle per flagged tile drawn inside
/// the tile's pixel bounds. The input is not modified.
cv::Mat render_overlay(const cv::Mat& image, const DetectionResult& result, const OverlayStyle& style = {});

/// One JSON object per flagged tile, one per line.
std::string detection_report_lines(const DetectionResult& result);

nlohmann::ordered_json detection_summary(const std::vector<DetectionResult>& results, const std::string& model_descriptor);

}  // namespace tiledefect
