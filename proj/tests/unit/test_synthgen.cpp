#include <opencv2/imgproc.hpp>

#include "test_support.hpp"
#include "tiledefect/preprocess.hpp"
#include "tiledefect/synthgen.hpp"

using namespace tiledefect;
using testing_support::TempDir;

namespace {

SceneSpec spec_with(ObjectShape shape, std::uint64_t seed = 4) {
    SceneSpec s;
    s.shape = shape;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(SceneSpec, Validation) {
    SceneSpec s;
    EXPECT_NO_THROW(s.validate());
    s.width = 10;
    EXPECT_THROW(s.validate(), ValidationError);
    s = {};
    s.object_min = 5;
    EXPECT_THROW(s.validate(), ValidationError);
    s = {};
    s.defect_min = 3;
    s.defect_max = 1;
    EXPECT_THROW(s.validate(), ValidationError);
    EXPECT_THROW(parse_object_shape("triangle"), ValidationError);
    EXPECT_EQ(parse_object_shape("rounded-rectangle"), ObjectShape::rounded_rectangle);
    EXPECT_STREQ(object_shape_name(ObjectShape::ellipse), "ellipse");
}

TEST(Synth, NoDefectsRequested) {
    SceneSpec s;
    s.defect_min = s.defect_max = 0;
    const AnnotatedImage img = generate_image(s, 0);
    EXPECT_TRUE(img.defects.empty());
    const RenderedScene clean = render_scene(s, 0, false);
    EXPECT_EQ(cv::norm(img.pixels, clean.pixels, cv::NORM_INF), 0.0);
}

TEST(Synth, SameSeedAndIndexGiveIdenticalImages) {
    const SceneSpec s = spec_with(ObjectShape::polygon);
    const AnnotatedImage a = generate_image(s, 5, "X");
    const AnnotatedImage b = generate_image(s, 5, "X");
    EXPECT_EQ(a.image_id, "X0005");
    EXPECT_EQ(cv::norm(a.pixels, b.pixels, cv::NORM_INF), 0.0);
    EXPECT_EQ(a.defects, b.defects);
    const AnnotatedImage c = generate_image(s, 6, "X");
    EXPECT_GT(cv::norm(a.pixels, c.pixels, cv::NORM_INF), 0.0);
}

// Image-diff oracle: the pixels that differ from the defect-free render are
// exactly the union of the defect masks, every changed pixel lies inside an
// annotated box, and each box is the tight bounding box of its own pixels.
TEST(Synth, BoxesAreTightAroundRenderedDefects) {
    for (ObjectShape shape : {ObjectShape::rounded_rectangle, ObjectShape::ellipse, ObjectShape::polygon}) {
        SceneSpec s = spec_with(shape);
        s.defect_min = s.defect_max = 3;
        for (int index = 0; index < 8; ++index) {
            const RenderedScene with = render_scene(s, index, true);
            const RenderedScene without = render_scene(s, index, false);
            ASSERT_EQ(with.defects.size(), 3u);
            ASSERT_EQ(without.defects, with.defects);
            cv::Mat diff = with.pixels != without.pixels;

            cv::Mat boxes = cv::Mat::zeros(diff.size(), CV_8UC1);
            cv::Mat masks = cv::Mat::zeros(diff.size(), CV_8UC1);
            for (std::size_t k = 0; k < with.defects.size(); ++k) {
                boxes(with.defects[k].rect.to_cv()).setTo(255);
                masks |= with.defect_masks[k];
                std::vector<cv::Point> pts;
                cv::findNonZero(with.defect_masks[k] & diff, pts);
                ASSERT_FALSE(pts.empty());
                const cv::Rect bb = cv::boundingRect(pts);
                EXPECT_EQ(with.defects[k].rect, (PixelRect{bb.x, bb.y, bb.x + bb.width, bb.y + bb.height}));
                // Drawn entirely on the object.
                EXPECT_EQ(cv::countNonZero(with.defect_masks[k] & ~with.object_mask), 0);
            }
            EXPECT_EQ(cv::countNonZero(diff != masks), 0);
            EXPECT_EQ(cv::countNonZero(diff & ~boxes), 0);
        }
    }
}

TEST(Synth, ObjectStandsOutFromBackground) {
    const RenderedScene scene = render_scene(spec_with(ObjectShape::ellipse), 2, true);
    double bg_max = 0, obj_min = 0;
    cv::minMaxLoc(scene.pixels, nullptr, &bg_max, nullptr, nullptr, ~scene.object_mask);
    cv::minMaxLoc(scene.pixels, &obj_min, nullptr, nullptr, nullptr, scene.object_mask);
    EXPECT_LE(bg_max, 10);
    EXPECT_GT(obj_min, bg_max);
    // The Canny crop lands on the object frame.
    const PixelRect crop = compute_crop_box(scene.pixels);
    EXPECT_LE(std::abs(crop.x_min - scene.object_frame.x_min), 3);
    EXPECT_LE(std::abs(crop.x_max - scene.object_frame.x_max), 3);
    EXPECT_LE(std::abs(crop.y_min - scene.object_frame.y_min), 3);
    EXPECT_LE(std::abs(crop.y_max - scene.object_frame.y_max), 3);
}

// Shape transfer: changing the silhouette keeps the object frame and the
// defect geometry (relative to the frame) of every image.
TEST(Synth, ShapeChangeKeepsDefectGeometry) {
    const SceneSpec a = spec_with(ObjectShape::rounded_rectangle, 9);
    const SceneSpec b = spec_with(ObjectShape::ellipse, 9);
    int differing_silhouettes = 0;
    for (int index = 0; index < 30; ++index) {
        const RenderedScene ra = render_scene(a, index, true);
        const RenderedScene rb = render_scene(b, index, true);
        EXPECT_EQ(ra.object_frame, rb.object_frame);
        ASSERT_EQ(ra.defects.size(), rb.defects.size());
        for (std::size_t k = 0; k < ra.defects.size(); ++k) {
            EXPECT_EQ(ra.defects[k].rect, rb.defects[k].rect) << "image " << index << " defect " << k;
            EXPECT_EQ(ra.defects[k].kind, rb.defects[k].kind);
        }
        differing_silhouettes += cv::countNonZero(ra.object_mask != rb.object_mask) > 0;
    }
    EXPECT_EQ(differing_silhouettes, 30);
}

TEST(Synth, DatasetManifestRoundTrip) {
    TempDir one, two;
    SceneSpec s;
    s.width = s.height = 96;
    const auto imgs = generate_dataset(s, 3, one.path(), "S");
    generate_dataset(s, 3, two.path(), "S");
    ASSERT_EQ(imgs.size(), 3u);
    const auto loaded = load_source_manifest(one / "manifest.json");
    ASSERT_EQ(loaded.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(loaded[i].defects, imgs[i].defects);
        EXPECT_EQ(cv::norm(loaded[i].pixels, imgs[i].pixels, cv::NORM_INF), 0.0);
    }
    EXPECT_EQ(read_text_file(one / "manifest.json"), read_text_file(two / "manifest.json"));
    EXPECT_THROW(generate_dataset(s, 0, one.path()), ValidationError);
}

TEST(Synth, SingleImageDataset) {
    TempDir dir;
    generate_dataset(SceneSpec{}, 1, dir.path());
    EXPECT_EQ(load_source_manifest(dir / "manifest.json").size(), 1u);
}
