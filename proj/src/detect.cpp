#include "tiledefect/detect.hpp"

#include <cstdio>
#include <sstream>

#include <opencv2/imgproc.hpp>

namespace tiledefect {

std::string DetectionConfig::validate() const {
    grid.validate();
    canny.validate();
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("detection threshold must lie in (0, 1)");
    if (threshold <= 0.5) {
        return "detection threshold " + std::to_string(threshold) +
               " is not above 0.5; defective tiles may be over-reported";
    }
    return {};
}

int classify_score(double p, double threshold) { return p > threshold ? 1 : 0; }

std::vector<FlaggedTile> flag_tiles(const DetectionResult& result, double threshold) {
    std::vector<FlaggedTile> out;
    for (int col = 0; col < result.grid.columns; ++col) {
        for (int row = 0; row < result.grid.rows; ++row) {
            const std::size_t i = static_cast<std::size_t>(col) * result.grid.rows + row;
            if (classify_score(result.scores[i], threshold) == 1) {
                out.push_back({col, row, result.rects[i], result.scores[i]});
            }
        }
    }
    return out;
}

DetectionResult detect_defects(const TileScorer& model, const AnnotatedImage& image, const DetectionConfig& config) {
    config.validate();
    if (image.pixels.empty()) throw ValidationError("image '" + image.image_id + "' has no pixels");

    DetectionResult result;
    result.image_id = image.image_id;
    result.grid = config.grid;
    result.threshold = config.threshold;
    result.crop = config.apply_crop ? compute_crop_box(image.pixels, config.canny)
                                    : CropBox{0, 0, image.pixels.cols, image.pixels.rows};
    const cv::Mat cropped = image.pixels(result.crop.to_cv());

    AnnotatedImage view;
    view.image_id = image.image_id;
    view.width = cropped.cols;
    view.height = cropped.rows;
    view.pixels = cropped;
    for (const auto& tile : tile_and_label(view, config.grid)) {
        const double p = tile.pixels.empty() ? 0.0 : model.score_tile(tile.pixels);
        result.scores.push_back(p);
        result.rects.push_back(tile.rect.translated(result.crop.x_min, result.crop.y_min));
    }
    result.flagged = flag_tiles(result, config.threshold);
    return result;
}

cv::Mat render_overlay(const cv::Mat& image, const DetectionResult& result, const OverlayStyle& style) {
    cv::Mat out;
    if (image.channels() == 1) cv::cvtColor(image, out, cv::COLOR_GRAY2BGR);
    else out = image.clone();

    for (const auto& f : result.flagged) {
        const PixelRect& r = f.rect;
        const int t = std::min({style.thickness, r.width(), r.height()});
        // Border bands drawn inside [x_min, x_max) x [y_min, y_max).
        cv::rectangle(out, cv::Rect(r.x_min, r.y_min, r.width(), t), style.color, cv::FILLED);
        cv::rectangle(out, cv::Rect(r.x_min, r.y_max - t, r.width(), t), style.color, cv::FILLED);
        cv::rectangle(out, cv::Rect(r.x_min, r.y_min, t, r.height()), style.color, cv::FILLED);
        cv::rectangle(out, cv::Rect(r.x_max - t, r.y_min, t, r.height()), style.color, cv::FILLED);

        if (style.draw_scores) {
            char label[16];
            std::snprintf(label, sizeof(label), "%.2f", f.score);
            int baseline = 0;
            const double scale = 0.35;
            const cv::Size sz = cv::getTextSize(label, cv::FONT_HERSHEY_SIMPLEX, scale, 1, &baseline);
            // Only when the text fits inside the rectangle's interior.
            if (sz.width + 2 * t + 2 <= r.width() && sz.height + baseline + 2 * t + 2 <= r.height()) {
                cv::putText(out, label, cv::Point(r.x_min + t + 1, r.y_min + t + 1 + sz.height),
                            cv::FONT_HERSHEY_SIMPLEX, scale, style.color, 1, cv::LINE_8);
            }
        }
    }
    return out;
}

std::string detection_report_lines(const DetectionResult& result) {
    std::ostringstream os;
    for (const auto& f : result.flagged) {
        nlohmann::ordered_json line{{"image_id", result.image_id}, {"col", f.col},           {"row", f.row},
                                    {"x_min", f.rect.x_min},       {"y_min", f.rect.y_min}, {"x_max", f.rect.x_max},
                                    {"y_max", f.rect.y_max},       {"score", f.score}};
        os << line.dump() << "\n";
    }
    return os.str();
}

nlohmann::ordered_json detection_summary(const std::vector<DetectionResult>& results, const std::string& model_descriptor) {
    nlohmann::ordered_json images = nlohmann::ordered_json::array();
    std::size_t total = 0;
    GridSpec grid;
    double threshold = 0.7;
    for (const auto& r : results) {
        grid = r.grid;
        threshold = r.threshold;
        total += r.flagged.size();
        images.push_back({{"image_id", r.image_id},
                          {"crop", {r.crop.x_min, r.crop.y_min, r.crop.x_max, r.crop.y_max}},
                          {"flagged", r.flagged.size()}});
    }
    return {{"grid", {{"m", grid.columns}, {"n", grid.rows}}},
            {"threshold", threshold},
            {"model", model_descriptor},
            {"images", images},
            {"total_flagged", total}};
}

}  // namespace tiledefect
