#include "tiledefect/core_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>

namespace tiledefect {

using ojson = nlohmann::ordered_json;

PixelRect PixelRect::intersect(const PixelRect& o) const {
    PixelRect r{std::max(x_min, o.x_min), std::max(y_min, o.y_min), std::min(x_max, o.x_max),
                std::min(y_max, o.y_max)};
    if (r.empty()) return {};
    return r;
}

void GridSpec::validate() const {
    if (columns < 1 || rows < 1) {
        throw ValidationError("grid must have at least one column and one row, got " +
                              std::to_string(columns) + "x" + std::to_string(rows));
    }
}

ClassCounts DatasetManifest::counts() const {
    ClassCounts c;
    for (const auto& e : entries) {
        if (e.label == 1) ++c.positive;
        else ++c.negative;
    }
    return c;
}

// ---------------------------------------------------------------------------

void validate_image_id(const std::string& image_id) {
    if (image_id.empty()) throw ValidationError("image id must not be empty");
    for (char ch : image_id) {
        if (ch == '/' || ch == '\\' || ch == '\0') {
            throw ValidationError("image id '" + image_id + "' contains a path separator");
        }
    }
    if (image_id == "." || image_id == "..") {
        throw ValidationError("image id '" + image_id + "' is not a valid file name component");
    }
}

std::string tile_filename(int label, const std::string& image_id, int col, int row) {
    if (label != 0 && label != 1) throw ValidationError("tile label must be 0 or 1");
    if (col < 0 || row < 0) throw ValidationError("tile column and row must be nonnegative");
    validate_image_id(image_id);
    std::ostringstream os;
    os << label << '_' << image_id << '_' << col << '_' << row << ".png";
    return os.str();
}

std::string balanced_tile_filename(int label, const std::string& image_id, int col, int row,
                                   std::int64_t draw) {
    std::string base = tile_filename(label, image_id, col, row);
    base.resize(base.size() - 4);
    return base + "_" + std::to_string(draw) + ".png";
}

namespace {

std::optional<int> parse_nonneg(std::string_view s) {
    if (s.empty() || (s.size() > 1 && s.front() == '0')) return std::nullopt;
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || value < 0) return std::nullopt;
    return value;
}

}  // namespace

std::optional<ParsedTileName> parse_tile_filename(const std::string& name) {
    // label is one character, col and row are the last two fields, the
    // image id is whatever lies between; parsing from the right makes the
    // format unambiguous even when the id itself contains underscores.
    constexpr std::string_view ext = ".png";
    if (name.size() < 2 + ext.size() || !name.ends_with(ext)) return std::nullopt;
    std::string_view s(name.data(), name.size() - ext.size());
    if ((s[0] != '0' && s[0] != '1') || s[1] != '_') return std::nullopt;
    const auto last = s.rfind('_');
    if (last == std::string_view::npos || last < 2) return std::nullopt;
    const auto mid = s.rfind('_', last - 1);
    if (mid == std::string_view::npos || mid < 2) return std::nullopt;
    auto row = parse_nonneg(s.substr(last + 1));
    auto col = parse_nonneg(s.substr(mid + 1, last - mid - 1));
    if (!row || !col) return std::nullopt;
    std::string id(s.substr(2, mid - 2));
    if (id.empty()) return std::nullopt;
    return ParsedTileName{s[0] - '0', std::move(id), *col, *row};
}

// ---------------------------------------------------------------------------

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open file: " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string relative_path(const fs::path& target, const fs::path& from_dir) {
    std::error_code ec;
    const fs::path rel = fs::relative(target, from_dir, ec);
    return ec || rel.empty() ? target.generic_string() : rel.generic_string();
}

void write_text_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + path.string());
        out << text;
        if (!out) throw std::runtime_error("write failed: " + path.string());
    }
    fs::rename(tmp, path);
}

cv::Mat read_gray_png(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("image not found: " + path.string());
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (img.empty()) throw ValidationError("cannot decode image: " + path.string());
    if (img.depth() != CV_8U) throw ValidationError("image is not 8-bit: " + path.string());
    if (img.channels() != 1) {
        throw ValidationError("image is not single-channel: " + path.string());
    }
    return img;
}

void write_png(const fs::path& path, const cv::Mat& image) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    // Fixed compression level keeps output bytes stable between runs.
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
    if (!cv::imwrite(path.string(), image, params)) {
        throw std::runtime_error("cannot write image: " + path.string());
    }
}

namespace {

ojson parse_json_file(const fs::path& path, const std::string& what) {
    if (!fs::exists(path)) throw ValidationError(what + " not found: " + path.string());
    try {
        return ojson::parse(read_text_file(path));
    } catch (const ojson::parse_error& e) {
        throw ValidationError(what + " is not valid JSON (" + path.string() + "): " + e.what());
    }
}

int require_int(const ojson& obj, const char* key, const std::string& context) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_number_integer()) {
        throw ValidationError(context + ": missing or non-integer field '" + key + "'");
    }
    return obj[key].get<int>();
}

std::string require_string(const ojson& obj, const char* key, const std::string& context) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) {
        throw ValidationError(context + ": missing or non-string field '" + key + "'");
    }
    return obj[key].get<std::string>();
}

ojson rect_to_json(const PixelRect& r) { return ojson::array({r.x_min, r.y_min, r.x_max, r.y_max}); }

PixelRect rect_from_json(const ojson& j, const std::string& context) {
    if (!j.is_array() || j.size() != 4) throw ValidationError(context + ": rect must be [x0,y0,x1,y1]");
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw ValidationError(context + ": rect values must be integers");
    }
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

}  // namespace

std::vector<AnnotatedImage> load_source_manifest(const fs::path& path, bool load_pixels) {
    const ojson doc = parse_json_file(path, "source manifest");
    if (!doc.is_object() || !doc.contains("images") || !doc["images"].is_array()) {
        throw ValidationError("source manifest " + path.string() + ": top-level 'images' list missing");
    }
    const fs::path base = path.parent_path();
    std::vector<AnnotatedImage> images;
    std::set<std::string> seen;
    std::size_t index = 0;
    for (const auto& item : doc["images"]) {
        const std::string where = "image #" + std::to_string(index++);
        AnnotatedImage img;
        img.image_id = require_string(item, "id", where);
        const std::string ctx = "image '" + img.image_id + "'";
        validate_image_id(img.image_id);
        if (!seen.insert(img.image_id).second) {
            throw ValidationError("duplicate image id '" + img.image_id + "' in " + path.string());
        }
        img.path = require_string(item, "path", ctx);
        img.width = require_int(item, "width", ctx);
        img.height = require_int(item, "height", ctx);
        if (img.width < 1 || img.height < 1) throw ValidationError(ctx + ": width and height must be positive");
        if (!item.contains("defects") || !item["defects"].is_array()) {
            throw ValidationError(ctx + ": 'defects' list missing");
        }
        for (const auto& d : item["defects"]) {
            DefectBox box;
            box.rect = {require_int(d, "x_min", ctx), require_int(d, "y_min", ctx), require_int(d, "x_max", ctx),
                        require_int(d, "y_max", ctx)};
            if (d.contains("kind")) {
                if (!d["kind"].is_string()) throw ValidationError(ctx + ": defect 'kind' must be a string");
                box.kind = d["kind"].get<std::string>();
            }
            const auto& r = box.rect;
            if (r.x_min < 0 || r.y_min < 0 || r.x_min >= r.x_max || r.y_min >= r.y_max) {
                throw ValidationError(ctx + ": defect box is empty or has negative coordinates");
            }
            if (!r.inside(img.width, img.height)) {
                std::ostringstream os;
                os << ctx << ": defect box (" << r.x_min << "," << r.y_min << "," << r.x_max << "," << r.y_max
                   << ") exceeds image bounds " << img.width << "x" << img.height;
                throw ValidationError(os.str());
            }
            img.defects.push_back(std::move(box));
        }
        if (load_pixels) {
            const fs::path p = fs::path(img.path).is_absolute() ? fs::path(img.path) : base / img.path;
            img.pixels = read_gray_png(p);
            if (img.pixels.cols != img.width || img.pixels.rows != img.height) {
                throw ValidationError(ctx + ": declared size does not match " + p.string());
            }
        }
        images.push_back(std::move(img));
    }
    return images;
}

void save_source_manifest(const std::vector<AnnotatedImage>& images, const fs::path& path) {
    ojson list = ojson::array();
    for (const auto& img : images) {
        ojson defects = ojson::array();
        for (const auto& d : img.defects) {
            ojson jd{{"x_min", d.rect.x_min}, {"y_min", d.rect.y_min}, {"x_max", d.rect.x_max}, {"y_max", d.rect.y_max}};
            if (!d.kind.empty()) jd["kind"] = d.kind;
            defects.push_back(std::move(jd));
        }
        list.push_back(ojson{{"id", img.image_id},
                             {"path", img.path},
                             {"width", img.width},
                             {"height", img.height},
                             {"defects", std::move(defects)}});
    }
    write_text_file(path, ojson{{"images", std::move(list)}}.dump(2) + "\n");
}

void save_dataset_manifest(const DatasetManifest& m, const fs::path& path) {
    ojson doc;
    doc["kind"] = m.kind;
    doc["grid"] = m.grid ? ojson{{"m", m.grid->columns}, {"n", m.grid->rows}} : ojson(nullptr);
    doc["seed"] = m.seed ? ojson(*m.seed) : ojson(nullptr);
    doc["source_manifest"] = m.source_manifest;
    doc["parameters"] = m.parameters;
    const ClassCounts c = m.counts();
    doc["counts"] = ojson{{"0", c.negative}, {"1", c.positive}, {"total", c.total()}};
    ojson entries = ojson::array();
    for (const auto& e : m.entries) {
        ojson je{{"file", e.file},         {"label", e.label}, {"image_id", e.image_id},
                 {"col", e.col},           {"row", e.row},     {"rect", rect_to_json(e.rect)}};
        if (e.source) je["source"] = *e.source;
        if (e.transform) je["transform"] = *e.transform;
        if (e.draw) je["draw"] = *e.draw;
        entries.push_back(std::move(je));
    }
    doc["entries"] = std::move(entries);
    write_text_file(path, doc.dump(1) + "\n");
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
    const ojson doc = parse_json_file(path, "dataset manifest");
    const std::string ctx = "dataset manifest " + path.string();
    if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array()) {
        throw ValidationError(ctx + ": 'entries' list missing");
    }
    DatasetManifest m;
    m.base_dir = path.parent_path();
    m.kind = doc.value("kind", std::string("tiles"));
    if (doc.contains("grid") && doc["grid"].is_object()) {
        m.grid = GridSpec{require_int(doc["grid"], "m", ctx), require_int(doc["grid"], "n", ctx)};
        m.grid->validate();
    }
    if (doc.contains("seed") && doc["seed"].is_number_unsigned()) m.seed = doc["seed"].get<std::uint64_t>();
    m.source_manifest = doc.value("source_manifest", std::string());
    if (doc.contains("parameters")) m.parameters = doc["parameters"];
    std::size_t index = 0;
    for (const auto& je : doc["entries"]) {
        const std::string ectx = ctx + ", entry #" + std::to_string(index++);
        ManifestEntry e;
        e.file = require_string(je, "file", ectx);
        e.label = require_int(je, "label", ectx);
        if (e.label != 0 && e.label != 1) throw ValidationError(ectx + ": label must be 0 or 1");
        e.image_id = require_string(je, "image_id", ectx);
        e.col = require_int(je, "col", ectx);
        e.row = require_int(je, "row", ectx);
        e.rect = rect_from_json(je.at("rect"), ectx);
        if (je.contains("source")) e.source = je["source"].get<std::string>();
        if (je.contains("transform")) e.transform = je["transform"].get<int>();
        if (je.contains("draw")) e.draw = je["draw"].get<std::int64_t>();
        m.entries.push_back(std::move(e));
    }
    if (doc.contains("counts")) {
        const auto& jc = doc["counts"];
        const ClassCounts declared{jc.value("0", std::int64_t{-1}), jc.value("1", std::int64_t{-1})};
        if (declared != m.counts()) throw ValidationError(ctx + ": class counts do not match the entry list");
    }
    return m;
}

}  // namespace tiledefect
