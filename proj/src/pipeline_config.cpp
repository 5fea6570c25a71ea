#include "tiledefect/pipeline_config.hpp"

#include <charconv>
#include <cstdlib>

namespace tiledefect {

using json = nlohmann::json;

const std::vector<ConfigKey>& config_schema() {
    using T = ConfigType;
    static const std::vector<ConfigKey> schema{
        {"seed", T::unsigned_integer, 42u, "master RNG seed (balancing, split, model unless model.seed is set)"},
        {"grid.m", T::integer, 10, "grid columns"},
        {"grid.n", T::integer, 10, "grid rows"},
        {"canny.low", T::real, 50.0, "Canny lower hysteresis threshold"},
        {"canny.high", T::real, 150.0, "Canny upper hysteresis threshold"},
        {"canny.sigma", T::real, 1.4, "Gaussian smoothing sigma before Canny"},
        {"split.train", T::real, 0.8, "train fraction"},
        {"split.val", T::real, 0.1, "validation fraction"},
        {"split.test", T::real, 0.1, "test fraction"},
        {"model.backbone", T::string, "tiny", "backbone name"},
        {"model.dropout", T::real, 0.2, "dropout rate"},
        {"model.epochs", T::integer, 50, "training epochs"},
        {"model.batch_size", T::integer, 32, "mini-batch size"},
        {"model.lr", T::real, 1e-4, "Adam learning rate"},
        {"model.seed", T::integer, -1, "model seed; -1 uses the master seed"},
        {"model.freeze_epochs", T::integer, 0, "epochs with the backbone frozen before full fine-tuning"},
        {"eval.threshold", T::real, 0.5, "decision threshold for source test-set reports"},
        {"detect.threshold", T::real, 0.7, "decision threshold for target evaluation and detection"},
        {"detect.apply_crop", T::boolean, true, "crop target images with Canny before tiling"},
        {"synth.shape", T::string, "rounded-rectangle", "source object shape"},
        {"synth.target_shape", T::string, "ellipse", "target object shape"},
        {"synth.count", T::integer, 30, "source images to generate"},
        {"synth.target_count", T::integer, 5, "target images to generate"},
        {"synth.width", T::integer, 320, "image width"},
        {"synth.height", T::integer, 320, "image height"},
        {"synth.background_min", T::integer, 0, "background intensity lower bound"},
        {"synth.background_max", T::integer, 10, "background intensity upper bound"},
        {"synth.object_min", T::integer, 70, "object base intensity lower bound"},
        {"synth.object_max", T::integer, 110, "object base intensity upper bound"},
        {"synth.stripe_amplitude", T::real, 18.0, "stripe texture amplitude"},
        {"synth.stripe_period", T::real, 22.0, "stripe texture period in pixels"},
        {"synth.defect_min", T::integer, 1, "minimum defects per image"},
        {"synth.defect_max", T::integer, 3, "maximum defects per image"},
        {"synth.scratches", T::boolean, true, "generate scratch defects"},
        {"synth.dirt", T::boolean, true, "generate dirt defects"},
        {"synth.defect_contrast", T::integer, 110, "defect brightness over the surface"},
        {"paths.work_dir", T::string, "work", "root of all stage outputs"},
        {"paths.source_manifest", T::string, "", "annotation manifest of the source images"},
        {"paths.target_manifest", T::string, "", "annotation manifest of the target images"},
        {"paths.tiles_dir", T::string, "", "enhanced tile dataset directory"},
        {"paths.balanced_dir", T::string, "", "balanced dataset and split manifests"},
        {"paths.model_dir", T::string, "", "model artifact directory"},
        {"paths.eval_dir", T::string, "", "evaluation reports"},
        {"paths.detect_dir", T::string, "", "detection reports and overlays"},
    };
    return schema;
}

PipelineConfig::PipelineConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

const ConfigKey& PipelineConfig::key_info(const std::string& key) const {
    for (const auto& k : config_schema()) {
        if (k.name == key) return k;
    }
    throw ValidationError("unknown configuration key '" + key + "'");
}

namespace {

void flatten(const json& node, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
    if (node.is_object()) {
        for (auto it = node.begin(); it != node.end(); ++it) {
            flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
        }
    } else {
        out.emplace_back(prefix, node);
    }
}

bool type_matches(ConfigType t, const json& v) {
    switch (t) {
        case ConfigType::integer: return v.is_number_integer();
        case ConfigType::unsigned_integer: return v.is_number_unsigned();
        case ConfigType::real: return v.is_number();
        case ConfigType::boolean: return v.is_boolean();
        case ConfigType::string: return v.is_string();
    }
    return false;
}

const char* type_name(ConfigType t) {
    switch (t) {
        case ConfigType::integer: return "integer";
        case ConfigType::unsigned_integer: return "nonnegative integer";
        case ConfigType::real: return "number";
        case ConfigType::boolean: return "boolean";
        case ConfigType::string: return "string";
    }
    return "?";
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
    if (!doc.is_object()) throw ValidationError("configuration must be a JSON object");
    PipelineConfig cfg;
    std::vector<std::pair<std::string, json>> flat;
    flatten(doc, "", flat);
    for (const auto& [k, v] : flat) cfg.set(k, v);
    return cfg;
}

PipelineConfig PipelineConfig::from_file(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(doc);
}

void PipelineConfig::set(const std::string& key, const json& value) {
    const ConfigKey& info = key_info(key);
    if (!type_matches(info.type, value)) {
        throw ValidationError("configuration key '" + key + "' expects a " + type_name(info.type));
    }
    values_[key] = value;
}

void PipelineConfig::set_from_string(const std::string& key, const std::string& text) {
    const ConfigKey& info = key_info(key);
    auto fail = [&]() -> void {
        throw ValidationError("value '" + text + "' for '" + key + "' is not a " + type_name(info.type));
    };
    switch (info.type) {
        case ConfigType::integer: {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{} || p != text.data() + text.size()) fail();
            values_[key] = v;
            break;
        }
        case ConfigType::unsigned_integer: {
            std::uint64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc{} || p != text.data() + text.size()) fail();
            values_[key] = v;
            break;
        }
        case ConfigType::real: {
            char* end = nullptr;
            const double v = std::strtod(text.c_str(), &end);
            if (text.empty() || end != text.c_str() + text.size()) fail();
            values_[key] = v;
            break;
        }
        case ConfigType::boolean:
            if (text == "true" || text == "1") values_[key] = true;
            else if (text == "false" || text == "0") values_[key] = false;
            else fail();
            break;
        case ConfigType::string: values_[key] = text; break;
    }
}

std::int64_t PipelineConfig::get_int(const std::string& key) const { return values_.at(key_info(key).name).get<std::int64_t>(); }
std::uint64_t PipelineConfig::get_uint(const std::string& key) const { return values_.at(key_info(key).name).get<std::uint64_t>(); }
double PipelineConfig::get_double(const std::string& key) const { return values_.at(key_info(key).name).get<double>(); }
bool PipelineConfig::get_bool(const std::string& key) const { return values_.at(key_info(key).name).get<bool>(); }
std::string PipelineConfig::get_string(const std::string& key) const { return values_.at(key_info(key).name).get<std::string>(); }

nlohmann::ordered_json PipelineConfig::resolved() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& k : config_schema()) {
        const auto dot = k.name.find('.');
        const json& v = values_.at(k.name);
        if (dot == std::string::npos) out[k.name] = v;
        else out[k.name.substr(0, dot)][k.name.substr(dot + 1)] = v;
    }
    return out;
}

GridSpec PipelineConfig::grid() const {
    GridSpec g{static_cast<int>(get_int("grid.m")), static_cast<int>(get_int("grid.n"))};
    g.validate();
    return g;
}

CannyParams PipelineConfig::canny() const {
    CannyParams c{get_double("canny.low"), get_double("canny.high"), get_double("canny.sigma")};
    c.validate();
    return c;
}

SplitSpec PipelineConfig::split() const {
    SplitSpec s{get_double("split.train"), get_double("split.val"), get_double("split.test"), get_uint("seed")};
    s.validate();
    return s;
}

ClassifierConfig PipelineConfig::classifier() const {
    ClassifierConfig c;
    c.dropout_rate = get_double("model.dropout");
    c.epochs = static_cast<int>(get_int("model.epochs"));
    c.batch_size = static_cast<int>(get_int("model.batch_size"));
    c.learning_rate = get_double("model.lr");
    const auto model_seed = get_int("model.seed");
    c.seed = model_seed < 0 ? get_uint("seed") : static_cast<std::uint64_t>(model_seed);
    c.freeze_epochs = static_cast<int>(get_int("model.freeze_epochs"));
    c.validate();
    return c;
}

DetectionConfig PipelineConfig::detection() const {
    DetectionConfig d;
    d.grid = grid();
    d.threshold = get_double("detect.threshold");
    d.apply_crop = get_bool("detect.apply_crop");
    d.canny = canny();
    d.validate();
    return d;
}

SceneSpec PipelineConfig::scene(bool target) const {
    SceneSpec s;
    s.shape = parse_object_shape(get_string(target ? "synth.target_shape" : "synth.shape"));
    s.width = static_cast<int>(get_int("synth.width"));
    s.height = static_cast<int>(get_int("synth.height"));
    s.background_min = static_cast<int>(get_int("synth.background_min"));
    s.background_max = static_cast<int>(get_int("synth.background_max"));
    s.object_min = static_cast<int>(get_int("synth.object_min"));
    s.object_max = static_cast<int>(get_int("synth.object_max"));
    s.stripe_amplitude = get_double("synth.stripe_amplitude");
    s.stripe_period = get_double("synth.stripe_period");
    s.defect_min = static_cast<int>(get_int("synth.defect_min"));
    s.defect_max = static_cast<int>(get_int("synth.defect_max"));
    s.scratches = get_bool("synth.scratches");
    s.dirt = get_bool("synth.dirt");
    s.defect_contrast = static_cast<int>(get_int("synth.defect_contrast"));
    // Target images come from a separate stream so they are unseen objects.
    s.seed = target ? mix_seed(get_uint("seed"), 0x7a6e7) : get_uint("seed");
    s.validate();
    return s;
}

fs::path PipelineConfig::work_dir() const { return get_string("paths.work_dir"); }

fs::path PipelineConfig::path_or(const std::string& key, const std::string& fallback) const {
    const std::string v = get_string(key);
    return v.empty() ? work_dir() / fallback : fs::path(v);
}

fs::path PipelineConfig::source_manifest() const { return path_or("paths.source_manifest", "source/manifest.json"); }
fs::path PipelineConfig::target_manifest() const { return path_or("paths.target_manifest", "target/manifest.json"); }
fs::path PipelineConfig::tiles_dir() const { return path_or("paths.tiles_dir", "tiles"); }
fs::path PipelineConfig::balanced_dir() const { return path_or("paths.balanced_dir", "balanced"); }
fs::path PipelineConfig::model_dir() const { return path_or("paths.model_dir", "model"); }
fs::path PipelineConfig::eval_dir() const { return path_or("paths.eval_dir", "eval"); }
fs::path PipelineConfig::detect_dir() const { return path_or("paths.detect_dir", "detect"); }

GridSpec parse_grid(const std::string& text) {
    const auto x = text.find_first_of("xX");
    if (x == std::string::npos) throw ValidationError("grid must be written MxN, got '" + text + "'");
    GridSpec g;
    auto parse = [&](std::string_view s, int& out) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        if (ec != std::errc{} || p != s.data() + s.size()) throw ValidationError("grid must be written MxN, got '" + text + "'");
    };
    parse(std::string_view(text).substr(0, x), g.columns);
    parse(std::string_view(text).substr(x + 1), g.rows);
    g.validate();
    return g;
}

}  // namespace tiledefect
