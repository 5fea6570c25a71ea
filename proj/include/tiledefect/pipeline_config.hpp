#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tiledefect/core_data.hpp"
#include "tiledefect/detect.hpp"
#include "tiledefect/enhance.hpp"
#include "tiledefect/model.hpp"
#include "tiledefect/preprocess.hpp"
#include "tiledefect/synthgen.hpp"

namespace tiledefect {

enum class ConfigType { integer, unsigned_integer, real, boolean, string };

struct ConfigKey {
    std::string name;  // dotted, e.g. "model.lr"
    ConfigType type;
    nlohmann::json default_value;
    std::string help;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_schema();

/// Flat dotted-key configuration. Files may nest groups ({"grid": {"m": 10}})
/// or spell keys out ("grid.m": 10); both flatten to the same key. Unknown
/// keys and mistyped values are rejected with ValidationError.
class PipelineConfig {
public:
    PipelineConfig();  // all defaults

    static PipelineConfig from_file(const fs::path& path);
    static PipelineConfig from_json(const nlohmann::json& doc);

    /// Sets a key from its command-line text form.
    void set_from_string(const std::string& key, const std::string& text);
    void set(const std::string& key, const nlohmann::json& value);

    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;

    /// Fully resolved configuration, nested by group, defaults included.
    nlohmann::ordered_json resolved() const;

    GridSpec grid() const;
    CannyParams canny() const;
    SplitSpec split() const;
    ClassifierConfig classifier() const;
    DetectionConfig detection() const;
    SceneSpec scene(bool target) const;

    // Resolved paths; empty path keys fall back to <paths.work_dir>/<stage>.
    fs::path work_dir() const;
    fs::path source_manifest() const;
    fs::path target_manifest() const;
    fs::path tiles_dir() const;
    fs::path balanced_dir() const;
    fs::path model_dir() const;
    fs::path eval_dir() const;
    fs::path detect_dir() const;

private:
    const ConfigKey& key_info(const std::string& key) const;
    fs::path path_or(const std::string& key, const std::string& fallback) const;

    std::map<std::string, nlohmann::json> values_;
};

/// Parses "MxN" (e.g. "10x10").
GridSpec parse_grid(const std::string& text);

}  // namespace tiledefect
