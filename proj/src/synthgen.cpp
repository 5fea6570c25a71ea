#include "tiledefect/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <opencv2/imgproc.hpp>

#include "tiledefect/rng.hpp"

namespace tiledefect {

ObjectShape parse_object_shape(const std::string& name) {
    if (name == "rounded-rectangle") return ObjectShape::rounded_rectangle;
    if (name == "ellipse") return ObjectShape::ellipse;
    if (name == "polygon") return ObjectShape::polygon;
    throw ValidationError("unknown object shape '" + name + "' (rounded-rectangle, ellipse, polygon)");
}

const char* object_shape_name(ObjectShape shape) {
    switch (shape) {
        case ObjectShape::rounded_rectangle: return "rounded-rectangle";
        case ObjectShape::ellipse: return "ellipse";
        case ObjectShape::polygon: return "polygon";
    }
    return "unknown";
}

void SceneSpec::validate() const {
    if (width < 64 || height < 64) throw ValidationError("synth image size must be at least 64x64");
    if (background_min < 0 || background_max < background_min || background_max > 255) {
        throw ValidationError("synth background band must satisfy 0 <= min <= max <= 255");
    }
    if (object_min <= background_max || object_max < object_min || object_max > 255) {
        throw ValidationError("synth object band must lie above the background band");
    }
    if (defect_min < 0 || defect_max < defect_min) throw ValidationError("synth defect count range is invalid");
    if (defect_max > 0 && !scratches && !dirt) throw ValidationError("synth needs at least one defect kind");
    if (defect_contrast < 1) throw ValidationError("synth defect contrast must be positive");
    if (stripe_period <= 0.0) throw ValidationError("synth stripe period must be positive");
}

namespace {

constexpr int kMaxPlacementTries = 50;
constexpr int kMargin = 20;

// Sub-stream keys; the object and defect streams are independent so the
// same seed yields the same defects whatever the object shape.
constexpr std::uint64_t kObjectStream = 0;
constexpr std::uint64_t kDefectStream = 1;
constexpr std::uint64_t kTextureStream = 2;

cv::Mat object_mask_for(const SceneSpec& spec, const PixelRect& f) {
    cv::Mat mask = cv::Mat::zeros(spec.height, spec.width, CV_8UC1);
    const cv::Point2d c((f.x_min + f.x_max - 1) / 2.0, (f.y_min + f.y_max - 1) / 2.0);
    const double hw = (f.width() - 1) / 2.0;
    const double hh = (f.height() - 1) / 2.0;
    switch (spec.shape) {
        case ObjectShape::ellipse:
            cv::ellipse(mask, cv::Point(cvRound(c.x), cvRound(c.y)), cv::Size(cvRound(hw), cvRound(hh)), 0, 0, 360,
                        cv::Scalar(255), cv::FILLED, cv::LINE_8);
            break;
        case ObjectShape::polygon: {
            std::vector<cv::Point> pts;
            for (int k = 0; k < 8; ++k) {
                const double a = std::numbers::pi / 8.0 + k * std::numbers::pi / 4.0;
                pts.emplace_back(cvRound(c.x + hw * std::cos(a) / std::cos(std::numbers::pi / 8.0)),
                                 cvRound(c.y + hh * std::sin(a) / std::cos(std::numbers::pi / 8.0)));
            }
            for (auto& p : pts) {
                p.x = std::clamp(p.x, f.x_min, f.x_max - 1);
                p.y = std::clamp(p.y, f.y_min, f.y_max - 1);
            }
            cv::fillConvexPoly(mask, pts, cv::Scalar(255), cv::LINE_8);
            break;
        }
        case ObjectShape::rounded_rectangle: {
            const int r = std::max(2, std::min(f.width(), f.height()) / 6);
            cv::rectangle(mask, cv::Rect(f.x_min + r, f.y_min, f.width() - 2 * r, f.height()), cv::Scalar(255), cv::FILLED);
            cv::rectangle(mask, cv::Rect(f.x_min, f.y_min + r, f.width(), f.height() - 2 * r), cv::Scalar(255), cv::FILLED);
            for (const cv::Point& corner : {cv::Point(f.x_min + r, f.y_min + r), cv::Point(f.x_max - 1 - r, f.y_min + r),
                                           cv::Point(f.x_min + r, f.y_max - 1 - r), cv::Point(f.x_max - 1 - r, f.y_max - 1 - r)}) {
                cv::circle(mask, corner, r, cv::Scalar(255), cv::FILLED, cv::LINE_8);
            }
            break;
        }
    }
    return mask;
}

struct DefectShape {
    bool scratch = true;
    std::vector<cv::Point> points;  // scratch polyline
    int thickness = 1;
    cv::Point center;               // dirt ellipse
    cv::Size axes;
    double angle = 0.0;
};

DefectShape draw_defect_shape(const SceneSpec& spec, const PixelRect& frame, Rng& rng) {
    DefectShape d;
    d.scratch = spec.scratches && (!spec.dirt || rng.bernoulli(0.6));
    // Centre within a disk of 0.3 normalized radius around the frame centre,
    // which lies inside every supported silhouette.
    const double r = 0.3 * std::sqrt(rng.uniform01());
    const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const cv::Point center(cvRound(frame.x_min + frame.width() * (0.5 + r * std::cos(th))),
                           cvRound(frame.y_min + frame.height() * (0.5 + r * std::sin(th))));
    if (d.scratch) {
        d.thickness = rng.uniform_int(1, 2);
        double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
        cv::Point2d p(center);
        d.points.push_back(center);
        const int segments = rng.uniform_int(1, 3);
        for (int s = 0; s < segments; ++s) {
            const double len = rng.uniform(5.0, 11.0);
            p += cv::Point2d(len * std::cos(dir), len * std::sin(dir));
            d.points.emplace_back(cvRound(p.x), cvRound(p.y));
            dir += rng.uniform(-0.6, 0.6);
        }
    } else {
        d.center = center;
        d.axes = cv::Size(rng.uniform_int(2, 5), rng.uniform_int(2, 5));
        d.angle = rng.uniform(0.0, 180.0);
    }
    return d;
}

cv::Mat rasterize(const DefectShape& d, int width, int height) {
    cv::Mat mask = cv::Mat::zeros(height, width, CV_8UC1);
    if (d.scratch) {
        cv::polylines(mask, std::vector<std::vector<cv::Point>>{d.points}, false, cv::Scalar(255), d.thickness,
                      cv::LINE_8);
    } else {
        cv::ellipse(mask, d.center, d.axes, d.angle, 0, 360, cv::Scalar(255), cv::FILLED, cv::LINE_8);
    }
    return mask;
}

}  // namespace

RenderedScene render_scene(const SceneSpec& spec, int index, bool with_defects) {
    spec.validate();
    RenderedScene scene;
    const std::uint64_t base = mix_seed(spec.seed, static_cast<std::uint64_t>(index));

    Rng obj_rng(mix_seed(base, kObjectStream));
    const int ow_max = static_cast<int>(spec.width * 0.8);
    const int oh_max = static_cast<int>(spec.height * 0.8);
    const int mx = std::min(kMargin, (spec.width - ow_max) / 2);
    const int my = std::min(kMargin, (spec.height - oh_max) / 2);
    const int ow = obj_rng.uniform_int(static_cast<int>(spec.width * 0.62), ow_max);
    const int oh = obj_rng.uniform_int(static_cast<int>(spec.height * 0.62), oh_max);
    const int ox = obj_rng.uniform_int(mx, spec.width - mx - ow);
    const int oy = obj_rng.uniform_int(my, spec.height - my - oh);
    scene.object_frame = {ox, oy, ox + ow, oy + oh};
    const double stripe_angle = obj_rng.uniform(0.0, std::numbers::pi);
    const double stripe_phase = obj_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const int base_level = obj_rng.uniform_int(spec.object_min, spec.object_max);

    scene.object_mask = object_mask_for(spec, scene.object_frame);

    Rng tex_rng(mix_seed(base, kTextureStream));
    scene.pixels = cv::Mat(spec.height, spec.width, CV_8UC1);
    const double kx = std::cos(stripe_angle) * 2.0 * std::numbers::pi / spec.stripe_period;
    const double ky = std::sin(stripe_angle) * 2.0 * std::numbers::pi / spec.stripe_period;
    for (int y = 0; y < spec.height; ++y) {
        auto* row = scene.pixels.ptr<std::uint8_t>(y);
        const auto* m = scene.object_mask.ptr<std::uint8_t>(y);
        for (int x = 0; x < spec.width; ++x) {
            const int noise = tex_rng.uniform_int(-3, 3);
            if (m[x]) {
                const double v = base_level + spec.stripe_amplitude * std::sin(kx * x + ky * y + stripe_phase) + noise;
                row[x] = static_cast<std::uint8_t>(std::clamp(cvRound(v), spec.background_max + 1, 254));
            } else {
                row[x] = static_cast<std::uint8_t>(tex_rng.uniform_int(spec.background_min, spec.background_max));
            }
        }
    }
    const cv::Mat clean = scene.pixels.clone();

    Rng def_rng(mix_seed(base, kDefectStream));
    const int count = def_rng.uniform_int(spec.defect_min, spec.defect_max);
    for (int k = 0; k < count; ++k) {
        cv::Mat mask;
        DefectShape shape;
        bool placed = false;
        for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
            shape = draw_defect_shape(spec, scene.object_frame, def_rng);
            mask = rasterize(shape, spec.width, spec.height);
            cv::Mat outside;
            cv::bitwise_and(mask, ~scene.object_mask, outside);
            placed = cv::countNonZero(outside) == 0 && cv::countNonZero(mask) > 0;
        }
        if (!placed) {
            throw ValidationError("could not place defect " + std::to_string(k) + " on the object of image " +
                                  std::to_string(index) + "; the object is too small");
        }
        std::vector<cv::Point> pts;
        cv::findNonZero(mask, pts);
        const cv::Rect bb = cv::boundingRect(pts);
        scene.defects.push_back({{bb.x, bb.y, bb.x + bb.width, bb.y + bb.height}, shape.scratch ? "scratch" : "dirt"});
        scene.defect_masks.push_back(mask);
        if (!with_defects) continue;
        const int contrast = shape.scratch ? spec.defect_contrast : spec.defect_contrast * 4 / 5;
        for (const auto& p : pts) {
            const int v = clean.at<std::uint8_t>(p) + std::max(1, contrast);
            scene.pixels.at<std::uint8_t>(p) = static_cast<std::uint8_t>(std::min(255, v));
        }
    }
    return scene;
}

AnnotatedImage generate_image(const SceneSpec& spec, int index, const std::string& id_prefix) {
    RenderedScene scene = render_scene(spec, index, true);
    char id[32];
    std::snprintf(id, sizeof(id), "%04d", index);
    AnnotatedImage img;
    img.image_id = id_prefix + id;
    img.path = img.image_id + ".png";
    img.width = spec.width;
    img.height = spec.height;
    img.pixels = std::move(scene.pixels);
    img.defects = std::move(scene.defects);
    return img;
}

std::vector<AnnotatedImage> generate_dataset(const SceneSpec& spec, int count, const fs::path& output_dir,
                                             const std::string& id_prefix) {
    if (count < 1) throw ValidationError("synth count must be at least 1");
    spec.validate();
    std::error_code ec;
    fs::create_directories(output_dir, ec);
    if (ec || !fs::is_directory(output_dir)) {
        throw std::runtime_error("cannot create output directory " + output_dir.string());
    }
    std::vector<AnnotatedImage> images;
    images.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        AnnotatedImage img = generate_image(spec, i, id_prefix);
        write_png(output_dir / img.path, img.pixels);
        images.push_back(std::move(img));
    }
    save_source_manifest(images, output_dir / "manifest.json");
    return images;
}

}  // namespace tiledefect
