#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "json.hpp"
#include "tiledefect/errors.hpp"

namespace tiledefect {

namespace fs = std::filesystem;

/// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max), origin top-left.
struct PixelRect {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    long long area() const { return empty() ? 0 : static_cast<long long>(width()) * height(); }
    bool empty() const { return x_max <= x_min || y_max <= y_min; }
    bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
    bool inside(int w, int h) const { return x_min >= 0 && y_min >= 0 && x_max <= w && y_max <= h; }

    PixelRect translated(int dx, int dy) const { return {x_min + dx, y_min + dy, x_max + dx, y_max + dy}; }
    PixelRect intersect(const PixelRect& o) const;
    cv::Rect to_cv() const { return {x_min, y_min, width(), height()}; }

    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

struct DefectBox {
    PixelRect rect;
    std::string kind;  // informational only; never used by any logic

    friend bool operator==(const DefectBox&, const DefectBox&) = default;
};

/// Grayscale source image plus its defect annotations.
struct AnnotatedImage {
    std::string image_id;
    std::string path;  // as written in the manifest (may be relative)
    int width = 0;
    int height = 0;
    cv::Mat pixels;  // CV_8UC1, may be empty when loaded without pixels
    std::vector<DefectBox> defects;
};

/// m columns by n rows.
struct GridSpec {
    int columns = 10;
    int rows = 10;

    void validate() const;
    int cell_count() const { return columns * rows; }

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// One grid cell cut from a (cropped) parent image.
struct TileRecord {
    std::string image_id;
    int col = 0;
    int row = 0;
    PixelRect rect;
    int label = 0;
    cv::Mat pixels;
    std::optional<int> transform;  // dihedral transform applied, if any
};

struct ClassCounts {
    std::int64_t negative = 0;  // label 0
    std::int64_t positive = 0;  // label 1
    std::int64_t total() const { return negative + positive; }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// One tile file listed in a dataset manifest. Optional fields carry the
/// resampling provenance of balanced datasets.
struct ManifestEntry {
    std::string file;  // relative to the manifest directory
    int label = 0;
    std::string image_id;
    int col = 0;
    int row = 0;
    PixelRect rect;
    std::optional<std::string> source;   // source tile file (balanced datasets)
    std::optional<int> transform;        // dihedral transform id
    std::optional<std::int64_t> draw;    // draw index in the balancing loop

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::string kind = "tiles";  // tiles | balanced | split
    std::vector<ManifestEntry> entries;
    std::optional<GridSpec> grid;
    std::optional<std::uint64_t> seed;
    std::string source_manifest;  // upstream manifest, relative to base_dir when written by a stage
    nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
    fs::path base_dir;  // directory the entry files are relative to; not serialized

    ClassCounts counts() const;
    fs::path file_path(const ManifestEntry& e) const { return base_dir / e.file; }
};

// ---------------------------------------------------------------------------
// Naming

/// "{label}_{image_id}_{col}_{row}.png"
std::string tile_filename(int label, const std::string& image_id, int col, int row);

/// Filename of a resampled tile: the draw index is appended so repeated
/// draws of one source tile never collide.
std::string balanced_tile_filename(int label, const std::string& image_id, int col, int row,
                                   std::int64_t draw);

struct ParsedTileName {
    int label;
    std::string image_id;
    int col;
    int row;
    friend bool operator==(const ParsedTileName&, const ParsedTileName&) = default;
};

/// Inverse of tile_filename. Returns nullopt for names not in that format.
std::optional<ParsedTileName> parse_tile_filename(const std::string& name);

/// Rejects empty ids and ids that would escape the tile directory.
void validate_image_id(const std::string& image_id);

// ---------------------------------------------------------------------------
// I/O

/// Reads an annotation manifest. Paths inside it resolve against the
/// manifest's directory. Throws ValidationError on any schema or bounds
/// violation, naming the offending image.
std::vector<AnnotatedImage> load_source_manifest(const fs::path& path, bool load_pixels = true);

/// Writes the annotation manifest. Pixels are not written; see write_png.
void save_source_manifest(const std::vector<AnnotatedImage>& images, const fs::path& path);

void save_dataset_manifest(const DatasetManifest& manifest, const fs::path& path);
DatasetManifest load_dataset_manifest(const fs::path& path);

cv::Mat read_gray_png(const fs::path& path);
void write_png(const fs::path& path, const cv::Mat& image);

/// Writes text atomically enough for our purposes: temp file then rename.
void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

/// target expressed relative to from_dir (generic separators), so manifests
/// stay valid when the whole work directory moves.
std::string relative_path(const fs::path& target, const fs::path& from_dir);

}  // namespace tiledefect
