#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tiledefect/core_data.hpp"

namespace tiledefect {

enum class ObjectShape { rounded_rectangle, ellipse, polygon };

ObjectShape parse_object_shape(const std::string& name);
const char* object_shape_name(ObjectShape shape);

/// Procedural stand-in for deflectometry inspection images: a textured
/// object on a near-black background with bright scratch and dirt defects.
struct SceneSpec {
    ObjectShape shape = ObjectShape::rounded_rectangle;
    int width = 320;
    int height = 320;
    int background_min = 0;
    int background_max = 10;
    int object_min = 70;   // base object intensity band
    int object_max = 110;
    double stripe_amplitude = 18.0;
    double stripe_period = 22.0;
    int defect_min = 1;
    int defect_max = 3;
    bool scratches = true;
    bool dirt = true;
    int defect_contrast = 110;
    std::uint64_t seed = 1;

    void validate() const;
};

struct RenderedScene {
    cv::Mat pixels;       // CV_8UC1
    cv::Mat object_mask;  // 255 on the object
    PixelRect object_frame;
    std::vector<DefectBox> defects;
    std::vector<cv::Mat> defect_masks;  // one per defect, 255 where drawn
};

/// Renders image `index` of the scene. When with_defects is false the
/// defect geometry is still drawn from the stream (so boxes are reported)
/// but nothing is painted, which gives the clean reference image.
RenderedScene render_scene(const SceneSpec& spec, int index, bool with_defects = true);

/// Deterministic in (spec.seed, index). Image id is id_prefix + 4-digit index.
AnnotatedImage generate_image(const SceneSpec& spec, int index, const std::string& id_prefix = "IMG");

/// Writes count PNGs plus manifest.json (annotation schema) into output_dir.
std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec, int count, const fs::path& output_dir,
                                             const std::string& id_prefix = "IMG");

}  // namespace tiledefect
