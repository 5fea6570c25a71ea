#include <set>

#include <opencv2/imgproc.hpp>

#include "test_support.hpp"
#include "tiledefect/detect.hpp"

using namespace tiledefect;
using testing_support::ConstantScorer;
using testing_support::random_rect;

namespace {

// Scores 1.0 on any tile containing a painted defect pixel, 0.0 otherwise.
class PaintOracle : public TileScorer {
public:
    double score_tile(const cv::Mat& tile) const override {
        double hi = 0;
        cv::minMaxLoc(tile, nullptr, &hi);
        return hi >= 250 ? 1.0 : 0.0;
    }
    std::string describe() const override { return "paint-oracle"; }
};

// Dark image with the given defect boxes painted white.
AnnotatedImage painted(int w, int h, const std::vector<PixelRect>& defects) {
    AnnotatedImage img;
    img.image_id = "T";
    img.width = w;
    img.height = h;
    img.pixels = cv::Mat(h, w, CV_8UC1, cv::Scalar(40));
    for (const auto& d : defects) {
        img.pixels(d.to_cv()).setTo(255);
        img.defects.push_back({d, ""});
    }
    return img;
}

DetectionResult fixed_scores(const GridSpec& g, const std::vector<double>& scores) {
    DetectionResult r;
    r.grid = g;
    r.scores = scores;
    for (int c = 0; c < g.columns; ++c) {
        for (int row = 0; row < g.rows; ++row) r.rects.push_back(tile_rect(100, 100, g, c, row));
    }
    return r;
}

std::set<std::pair<int, int>> cells(const std::vector<FlaggedTile>& f) {
    std::set<std::pair<int, int>> s;
    for (const auto& t : f) s.insert({t.col, t.row});
    return s;
}

}  // namespace

TEST(ClassifyScore, StrictThreshold) {
    EXPECT_EQ(classify_score(0.71, 0.7), 1);
    EXPECT_EQ(classify_score(0.70, 0.7), 0);
    for (double t : {0.01, 0.3, 0.5, 0.7, 0.99}) EXPECT_EQ(classify_score(0.0, t), 0);
}

TEST(DetectionConfig, ThresholdValidation) {
    DetectionConfig c;
    EXPECT_TRUE(c.validate().empty());
    c.threshold = 0.5;
    EXPECT_FALSE(c.validate().empty());
    c.threshold = 1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c.threshold = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Detect, ConstantZeroModelFlagsNothing) {
    const auto r = detect_defects(ConstantScorer(0.0), painted(120, 90, {{5, 5, 20, 20}}), {});
    EXPECT_TRUE(r.flagged.empty());
    EXPECT_EQ(r.scores.size(), 100u);
}

TEST(Detect, OracleModelRecoversGroundTruthTiles) {
    std::mt19937 gen(10);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<PixelRect> defects;
        for (int i = 0; i < 3; ++i) defects.push_back(random_rect(gen, 25, 25).translated(10 * i + 5, 40 * i + 3));
        const AnnotatedImage img = painted(140, 130, defects);
        DetectionConfig cfg;
        cfg.apply_crop = false;
        const auto r = detect_defects(PaintOracle(), img, cfg);
        std::set<std::pair<int, int>> truth;
        for (const auto& t : tile_and_label(img, cfg.grid)) {
            if (t.label == 1) truth.insert({t.col, t.row});
        }
        EXPECT_EQ(cells(r.flagged), truth);
    }
}

TEST(Detect, ScoresCompleteAndRectsMatchPreprocessGeometry) {
    AnnotatedImage img = painted(160, 120, {{70, 50, 75, 56}});
    img.pixels.setTo(0);
    cv::rectangle(img.pixels, cv::Rect(30, 20, 90, 70), cv::Scalar(120), cv::FILLED);
    DetectionConfig cfg;
    cfg.grid = {7, 5};
    const auto r = detect_defects(testing_support::MeanScorer(), img, cfg);
    ASSERT_EQ(r.scores.size(), 35u);
    for (double s : r.scores) {
        EXPECT_GE(s, 0.0);
        EXPECT_LE(s, 1.0);
    }
    const CropBox box = compute_crop_box(img, cfg.canny);
    EXPECT_EQ(r.crop, box);
    EXPECT_NE(box, (PixelRect{0, 0, 160, 120}));
    const auto tiles = tile_and_label(crop_and_remap(img, box).image, cfg.grid);
    ASSERT_EQ(tiles.size(), r.rects.size());
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        EXPECT_EQ(r.rects[i], tiles[i].rect.translated(box.x_min, box.y_min));
        EXPECT_TRUE(r.rects[i].inside(160, 120));
        EXPECT_EQ(r.score(tiles[i].col, tiles[i].row), r.scores[i]);
    }
}

TEST(Detect, MissingPixelsRejected) {
    AnnotatedImage img;
    img.image_id = "E";
    EXPECT_THROW(detect_defects(ConstantScorer(0.5), img, {}), ValidationError);
}

TEST(FlagTiles, MonotoneInThreshold) {
    std::mt19937 gen(3);
    std::uniform_real_distribution<double> u(0, 1);
    const GridSpec g{10, 10};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(100);
        for (auto& v : s) v = u(gen);
        s[7] = 0.7;
        const auto r = fixed_scores(g, s);
        auto prev = cells(flag_tiles(r, 0.0));
        for (double t = 0.05; t < 1.0; t += 0.05) {
            const auto cur = cells(flag_tiles(r, t));
            EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            prev = cur;
        }
        EXPECT_FALSE(cells(flag_tiles(r, 0.7)).contains({0, 7}));
        EXPECT_TRUE(cells(flag_tiles(r, 0.6)).contains({0, 7}));
    }
}

TEST(Overlay, NoFlagsLeavesImageUnchanged) {
    std::mt19937 gen(1);
    const cv::Mat img = testing_support::random_raster(gen, 50, 60);
    const cv::Mat before = img.clone();
    DetectionResult r = fixed_scores({5, 5}, std::vector<double>(25, 0.1));
    const cv::Mat out = render_overlay(img, r);
    cv::Mat expected;
    cv::cvtColor(img, expected, cv::COLOR_GRAY2BGR);
    EXPECT_EQ(cv::norm(out, expected, cv::NORM_INF), 0.0);
    EXPECT_EQ(cv::norm(img, before, cv::NORM_INF), 0.0);
}

TEST(Overlay, OneRectanglePerFlaggedTile) {
    const cv::Mat img(100, 100, CV_8UC1, cv::Scalar(0));
    std::vector<double> s(100, 0.1);
    s[3 * 10 + 4] = 0.9;  // (col 3, row 4)
    s[4 * 10 + 4] = 0.95;  // (col 4, row 4), adjacent
    DetectionResult r = fixed_scores({10, 10}, s);
    r.flagged = flag_tiles(r, 0.7);
    ASSERT_EQ(r.flagged.size(), 2u);
    OverlayStyle style;
    style.draw_scores = false;
    const cv::Mat out = render_overlay(img, r, style);
    cv::Mat red;
    cv::inRange(out, cv::Scalar(0, 0, 255), cv::Scalar(0, 0, 255), red);

    // Each flagged tile: border pixels red, interior untouched, and the red
    // pixels inside the tile span exactly the tile rect.
    for (const auto& f : r.flagged) {
        const cv::Mat tile = red(f.rect.to_cv());
        std::vector<cv::Point> pts;
        cv::findNonZero(tile, pts);
        EXPECT_EQ(cv::boundingRect(pts), cv::Rect(0, 0, f.rect.width(), f.rect.height()));
        EXPECT_EQ(tile.at<uchar>(0, 0), 255);
        EXPECT_EQ(tile.at<uchar>(1, 1), 255);
        EXPECT_EQ(tile.at<uchar>(f.rect.height() - 1, f.rect.width() - 1), 255);
        EXPECT_EQ(tile.at<uchar>(f.rect.height() / 2, f.rect.width() / 2), 0);
        EXPECT_EQ(tile.at<uchar>(2, 2), 0);
    }
    // Nothing drawn outside the two tiles, and the shared edge is not merged
    // away: both tiles keep their own 2-px band.
    cv::Mat outside = red.clone();
    for (const auto& f : r.flagged) outside(f.rect.to_cv()).setTo(0);
    EXPECT_EQ(cv::countNonZero(outside), 0);
    EXPECT_EQ(red.at<uchar>(45, 39), 255);
    EXPECT_EQ(red.at<uchar>(45, 40), 255);
}

TEST(Overlay, ScoreTextStaysInsideTile) {
    const cv::Mat img(400, 400, CV_8UC1, cv::Scalar(0));
    std::vector<double> s(4, 0.1);
    s[0] = 0.93;
    DetectionResult r = fixed_scores({2, 2}, s);
    for (auto& rect : r.rects) rect = {rect.x_min * 4, rect.y_min * 4, rect.x_max * 4, rect.y_max * 4};
    r.flagged = flag_tiles(r, 0.7);
    const cv::Mat with = render_overlay(img, r);
    OverlayStyle plain;
    plain.draw_scores = false;
    const cv::Mat without = render_overlay(img, r, plain);
    cv::Mat diff;
    cv::absdiff(with, without, diff);
    cv::cvtColor(diff, diff, cv::COLOR_BGR2GRAY);
    std::vector<cv::Point> pts;
    cv::findNonZero(diff, pts);
    ASSERT_FALSE(pts.empty());
    EXPECT_TRUE(cv::Rect(0, 0, 200, 200).contains(cv::boundingRect(pts).tl()));
    EXPECT_TRUE(cv::Rect(0, 0, 200, 200).contains(cv::boundingRect(pts).br()));
}

TEST(Report, OneLinePerFlaggedTile) {
    std::vector<double> s(100, 0.1);
    s[5] = 0.8;
    s[50] = 0.99;
    DetectionResult r = fixed_scores({10, 10}, s);
    r.image_id = "Z";
    r.flagged = flag_tiles(r, 0.7);
    const std::string lines = detection_report_lines(r);
    EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 2);
    const auto first = nlohmann::json::parse(lines.substr(0, lines.find('\n')));
    EXPECT_EQ(first["image_id"], "Z");
    EXPECT_EQ(first["col"], 0);
    EXPECT_EQ(first["row"], 5);
    const auto summary = detection_summary({r}, "m");
    EXPECT_EQ(summary["total_flagged"], 2);
}
