#pragma once

#include <string>
#include <vector>

#include "tiledefect/core_data.hpp"

namespace tiledefect {

struct CannyParams {
    double low = 50.0;
    double high = 150.0;
    double sigma = 1.4;  // Gaussian pre-smoothing

    void validate() const;
};

/// Crop rectangle in original-image pixels, half-open.
using CropBox = PixelRect;

/// Bounding rectangle of all Canny edge pixels; the full image when there
/// are none.
CropBox compute_crop_box(const cv::Mat& gray, const CannyParams& params = {});
CropBox compute_crop_box(const AnnotatedImage& image, const CannyParams& params = {});

struct CropResult {
    AnnotatedImage image;
    int dropped_defects = 0;  // defects with no pixel inside the crop
};

/// Crops the raster and shifts every defect to the crop origin, clipping
/// boxes that straddle the crop edge.
CropResult crop_and_remap(const AnnotatedImage& image, const CropBox& box);

/// Cell (col, row) of the floor partition; remainder pixels go to the last
/// column/row.
PixelRect tile_rect(int image_w, int image_h, const GridSpec& grid, int col, int row);

/// Positive-area intersection; edge-touching rectangles do not overlap.
bool tile_overlaps_defect(const PixelRect& tile, const PixelRect& defect);

/// m*n tiles, columns in the outer loop and rows in the inner loop. Tile
/// pixels are views into image.pixels when present.
std::vector<TileRecord> tile_and_label(const AnnotatedImage& image, const GridSpec& grid);

struct PreprocessOptions {
    GridSpec grid;
    CannyParams canny;
    bool apply_crop = true;
    std::string source_manifest;  // recorded as provenance only
};

struct PreprocessOutcome {
    DatasetManifest manifest;
    std::vector<std::string> warnings;
};

/// crop -> remap -> tile -> label -> write one PNG per tile, plus
/// manifest.json in output_dir. Produces exactly N*m*n entries.
PreprocessOutcome preprocess_dataset(const std::vector<AnnotatedImage>& source, const PreprocessOptions& options,
                                     const fs::path& output_dir);

}  // namespace tiledefect
