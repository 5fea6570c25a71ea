#include "test_support.hpp"
#include "tiledefect/pipeline_config.hpp"

using namespace tiledefect;
using testing_support::TempDir;

TEST(Config, Defaults) {
    const PipelineConfig c;
    EXPECT_EQ(c.grid(), (GridSpec{10, 10}));
    EXPECT_EQ(c.detection().threshold, 0.7);
    EXPECT_TRUE(c.detection().apply_crop);
    EXPECT_EQ(c.classifier().epochs, 50);
    EXPECT_EQ(c.classifier().learning_rate, 1e-4);
    EXPECT_EQ(c.classifier().batch_size, 32);
    EXPECT_EQ(c.classifier().dropout_rate, 0.2);
    EXPECT_EQ(c.get_double("eval.threshold"), 0.5);
    const SplitSpec s = c.split();
    EXPECT_EQ(s.train, 0.8);
    EXPECT_EQ(s.val, 0.1);
    EXPECT_EQ(s.test, 0.1);
    EXPECT_EQ(c.get_string("model.backbone"), "tiny");
}

TEST(Config, NestedAndDottedFormsAgree) {
    const auto a = PipelineConfig::from_json(nlohmann::json::parse(R"({"grid": {"m": 4, "n": 6}, "model": {"lr": 0.01}})"));
    const auto b = PipelineConfig::from_json(nlohmann::json::parse(R"({"grid.m": 4, "grid.n": 6, "model.lr": 0.01})"));
    EXPECT_EQ(a.resolved(), b.resolved());
    EXPECT_EQ(a.grid(), (GridSpec{4, 6}));
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse(R"({"grid": {"k": 4}})")), ValidationError);
    EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse(R"({"treshold": 0.7})")), ValidationError);
    PipelineConfig c;
    EXPECT_THROW(c.set("model.learning_rate", 0.1), ValidationError);
    EXPECT_THROW(c.set_from_string("nope", "1"), ValidationError);
}

TEST(Config, TypesChecked) {
    EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse(R"({"grid": {"m": "10"}})")), ValidationError);
    EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse(R"({"seed": -3})")), ValidationError);
    EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse(R"({"detect": {"apply_crop": 1}})")), ValidationError);
    EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::parse("[1, 2]")), ValidationError);
    PipelineConfig c;
    EXPECT_THROW(c.set_from_string("grid.m", "ten"), ValidationError);
    EXPECT_THROW(c.set_from_string("model.lr", "1e-3x"), ValidationError);
    EXPECT_THROW(c.set_from_string("detect.apply_crop", "maybe"), ValidationError);
    c.set_from_string("model.lr", "1e-3");
    c.set_from_string("detect.apply_crop", "false");
    c.set_from_string("seed", "7");
    EXPECT_EQ(c.get_double("model.lr"), 1e-3);
    EXPECT_FALSE(c.get_bool("detect.apply_crop"));
    EXPECT_EQ(c.get_uint("seed"), 7u);
}

TEST(Config, SemanticValidationAtUse) {
    PipelineConfig c;
    c.set("detect.threshold", 1.5);
    EXPECT_THROW(c.detection(), ValidationError);
    c = PipelineConfig();
    c.set("split.train", 0.9);
    EXPECT_THROW(c.split(), ValidationError);
    c = PipelineConfig();
    c.set("grid.m", 0);
    EXPECT_THROW(c.grid(), ValidationError);
}

TEST(Config, ResolvedEchoesEveryKey) {
    const auto r = PipelineConfig().resolved();
    for (const auto& k : config_schema()) {
        const auto dot = k.name.find('.');
        if (dot == std::string::npos) {
            EXPECT_TRUE(r.contains(k.name)) << k.name;
        } else {
            EXPECT_TRUE(r[k.name.substr(0, dot)].contains(k.name.substr(dot + 1))) << k.name;
        }
    }
}

TEST(Config, PathFallbacksAndSeeds) {
    PipelineConfig c;
    c.set("paths.work_dir", "/w");
    EXPECT_EQ(c.tiles_dir(), fs::path("/w/tiles"));
    EXPECT_EQ(c.source_manifest(), fs::path("/w/source/manifest.json"));
    c.set("paths.model_dir", "/m");
    EXPECT_EQ(c.model_dir(), fs::path("/m"));
    c.set("seed", 5u);
    EXPECT_EQ(c.classifier().seed, 5u);
    c.set("model.seed", 9);
    EXPECT_EQ(c.classifier().seed, 9u);
    EXPECT_EQ(c.scene(false).seed, 5u);
    EXPECT_NE(c.scene(true).seed, 5u);
    EXPECT_EQ(c.scene(true).shape, ObjectShape::ellipse);
}

TEST(Config, FromFile) {
    TempDir dir;
    EXPECT_THROW(PipelineConfig::from_file(dir / "none.json"), ValidationError);
    write_text_file(dir / "bad.json", "{");
    EXPECT_THROW(PipelineConfig::from_file(dir / "bad.json"), ValidationError);
    write_text_file(dir / "ok.json", R"({"seed": 3, "synth": {"shape": "polygon"}})");
    const auto c = PipelineConfig::from_file(dir / "ok.json");
    EXPECT_EQ(c.get_uint("seed"), 3u);
    EXPECT_EQ(c.scene(false).shape, ObjectShape::polygon);
}

TEST(ParseGrid, Forms) {
    EXPECT_EQ(parse_grid("10x10"), (GridSpec{10, 10}));
    EXPECT_EQ(parse_grid("3x7"), (GridSpec{3, 7}));
    EXPECT_THROW(parse_grid("10"), ValidationError);
    EXPECT_THROW(parse_grid("ax3"), ValidationError);
    EXPECT_THROW(parse_grid("0x3"), ValidationError);
}
