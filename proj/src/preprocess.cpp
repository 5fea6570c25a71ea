#include "tiledefect/preprocess.hpp"

#include <cmath>
#include <iostream>
#include <set>

#include <opencv2/imgproc.hpp>

namespace tiledefect {

void CannyParams::validate() const {
    if (!(low >= 0.0) || !(low < high)) {
        throw ValidationError("canny thresholds must satisfy 0 <= low < high");
    }
    if (!(sigma >= 0.0)) throw ValidationError("canny sigma must be nonnegative");
}

CropBox compute_crop_box(const cv::Mat& gray, const CannyParams& params) {
    params.validate();
    const CropBox full{0, 0, gray.cols, gray.rows};
    if (gray.empty()) return full;

    cv::Mat smoothed;
    if (params.sigma > 0.0) {
        // 3-sigma support on each side, forced odd.
        int k = 2 * static_cast<int>(std::ceil(3.0 * params.sigma)) + 1;
        cv::GaussianBlur(gray, smoothed, cv::Size(k, k), params.sigma, params.sigma, cv::BORDER_REPLICATE);
    } else {
        smoothed = gray;
    }
    cv::Mat edges;
    cv::Canny(smoothed, edges, params.low, params.high, 3, true);

    std::vector<cv::Point> points;
    cv::findNonZero(edges, points);
    if (points.empty()) return full;
    const cv::Rect r = cv::boundingRect(points);
    return {r.x, r.y, r.x + r.width, r.y + r.height};
}

CropBox compute_crop_box(const AnnotatedImage& image, const CannyParams& params) {
    if (image.pixels.empty()) return {0, 0, image.width, image.height};
    return compute_crop_box(image.pixels, params);
}

CropResult crop_and_remap(const AnnotatedImage& image, const CropBox& box) {
    if (box.empty() || !box.inside(image.width, image.height)) {
        throw ValidationError("crop box does not fit image '" + image.image_id + "'");
    }
    CropResult out;
    out.image.image_id = image.image_id;
    out.image.path = image.path;
    out.image.width = box.width();
    out.image.height = box.height();
    if (!image.pixels.empty()) out.image.pixels = image.pixels(box.to_cv()).clone();

    const PixelRect bounds{0, 0, box.width(), box.height()};
    for (const auto& d : image.defects) {
        PixelRect moved = d.rect.translated(-box.x_min, -box.y_min).intersect(bounds);
        if (moved.empty()) {
            ++out.dropped_defects;
            continue;
        }
        out.image.defects.push_back({moved, d.kind});
    }
    return out;
}

PixelRect tile_rect(int image_w, int image_h, const GridSpec& grid, int col, int row) {
    auto edge = [](long long i, long long extent, long long parts) {
        return static_cast<int>(i * extent / parts);  // floor for nonnegative operands
    };
    return {edge(col, image_w, grid.columns), edge(row, image_h, grid.rows), edge(col + 1, image_w, grid.columns),
            edge(row + 1, image_h, grid.rows)};
}

bool tile_overlaps_defect(const PixelRect& tile, const PixelRect& defect) {
    return std::max(tile.x_min, defect.x_min) < std::min(tile.x_max, defect.x_max) &&
           std::max(tile.y_min, defect.y_min) < std::min(tile.y_max, defect.y_max);
}

std::vector<TileRecord> tile_and_label(const AnnotatedImage& image, const GridSpec& grid) {
    grid.validate();
    std::vector<TileRecord> tiles;
    tiles.reserve(static_cast<std::size_t>(grid.cell_count()));
    for (int col = 0; col < grid.columns; ++col) {
        for (int row = 0; row < grid.rows; ++row) {
            TileRecord t;
            t.image_id = image.image_id;
            t.col = col;
            t.row = row;
            t.rect = tile_rect(image.width, image.height, grid, col, row);
            t.label = 0;
            for (const auto& d : image.defects) {
                if (tile_overlaps_defect(t.rect, d.rect)) {
                    t.label = 1;
                    break;
                }
            }
            if (!image.pixels.empty() && !t.rect.empty()) t.pixels = image.pixels(t.rect.to_cv());
            tiles.push_back(std::move(t));
        }
    }
    return tiles;
}

PreprocessOutcome preprocess_dataset(const std::vector<AnnotatedImage>& source, const PreprocessOptions& options,
                                     const fs::path& output_dir) {
    options.grid.validate();
    options.canny.validate();

    std::set<std::string> ids;
    for (const auto& img : source) {
        validate_image_id(img.image_id);
        if (!ids.insert(img.image_id).second) {
            throw ValidationError("duplicate image id '" + img.image_id + "' would collide in tile file names");
        }
    }

    std::error_code ec;
    fs::create_directories(output_dir, ec);
    if (ec || !fs::is_directory(output_dir)) {
        throw std::runtime_error("cannot create output directory " + output_dir.string());
    }

    PreprocessOutcome out;
    auto& m = out.manifest;
    m.kind = "tiles";
    m.base_dir = output_dir;
    m.grid = options.grid;
    m.source_manifest = options.source_manifest;
    m.parameters = {{"canny", {{"low", options.canny.low}, {"high", options.canny.high}, {"sigma", options.canny.sigma}}},
                    {"apply_crop", options.apply_crop}};
    auto crops = nlohmann::ordered_json::array();

    if (source.empty()) out.warnings.push_back("source dataset is empty; tile manifest has no entries");

    for (const auto& img : source) {
        const CropBox box = options.apply_crop ? compute_crop_box(img, options.canny)
                                               : CropBox{0, 0, img.width, img.height};
        CropResult cropped = crop_and_remap(img, box);
        if (cropped.dropped_defects > 0) {
            out.warnings.push_back("image '" + img.image_id + "': " + std::to_string(cropped.dropped_defects) +
                                   " defect(s) outside the crop were dropped");
        }
        if (box.width() < options.grid.columns || box.height() < options.grid.rows) {
            out.warnings.push_back("image '" + img.image_id + "': crop smaller than the grid, some tiles are empty");
        }
        crops.push_back({{"id", img.image_id}, {"crop", {box.x_min, box.y_min, box.x_max, box.y_max}},
                         {"dropped_defects", cropped.dropped_defects}});

        for (auto& t : tile_and_label(cropped.image, options.grid)) {
            ManifestEntry e;
            e.file = tile_filename(t.label, t.image_id, t.col, t.row);
            e.label = t.label;
            e.image_id = t.image_id;
            e.col = t.col;
            e.row = t.row;
            e.rect = t.rect;
            if (!t.pixels.empty()) write_png(output_dir / e.file, t.pixels);
            m.entries.push_back(std::move(e));
        }
    }
    m.parameters["crops"] = std::move(crops);
    save_dataset_manifest(m, output_dir / "manifest.json");
    return out;
}

}  // namespace tiledefect
