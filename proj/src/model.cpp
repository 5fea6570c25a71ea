#include "tiledefect/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <opencv2/imgproc.hpp>

namespace tiledefect {

using ojson = nlohmann::ordered_json;

const std::vector<BackboneSpec>& backbone_registry() {
    static const std::vector<BackboneSpec> registry = [] {
        std::vector<BackboneSpec> r;
        r.push_back({"xception-class", "~100", 299, 3, true, {}});
        r.push_back({"resnet101v2-class", "~200", 224, 3, true, {}});
        r.push_back({"inceptionresnetv2-class", "~400", 299, 3, true, {}});
        BackboneSpec tiny{"tiny", "desk-scale", 32, 1, false, {}};
        tiny.architecture = nn::Architecture{32, 1, {{8, true}, {16, true}, {32, false}}};
        r.push_back(std::move(tiny));
        return r;
    }();
    return registry;
}

const BackboneSpec& resolve_backbone(const std::string& name) {
    for (const auto& b : backbone_registry()) {
        if (b.name == name) return b;
    }
    std::string known;
    for (const auto& b : backbone_registry()) known += (known.empty() ? "" : ", ") + b.name;
    throw ValidationError("unknown backbone '" + name + "' (known: " + known + ")");
}

bool pretrained_weights_available(const BackboneSpec& spec) { return !spec.pretrained; }

void ClassifierConfig::validate() const {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("model.dropout must be in [0, 1)");
    if (epochs < 1) throw ValidationError("model.epochs must be a positive integer");
    if (batch_size < 1) throw ValidationError("model.batch_size must be a positive integer");
    if (!(learning_rate > 0.0)) throw ValidationError("model.lr must be positive");
    if (freeze_epochs < 0) throw ValidationError("model.freeze_epochs must be nonnegative");
}

ojson config_to_json(const ClassifierConfig& c) {
    return ojson{{"dropout", c.dropout_rate}, {"epochs", c.epochs},  {"batch_size", c.batch_size},
                 {"lr", c.learning_rate},     {"seed", c.seed},      {"freeze_epochs", c.freeze_epochs}};
}

std::vector<double> rescale_pixels(const cv::Mat& raster) {
    if (raster.depth() != CV_8U) throw ValidationError("rescale_pixels expects an 8-bit raster");
    const int ch = raster.channels();
    std::vector<double> out(static_cast<std::size_t>(raster.total()) * ch);
    const std::size_t plane = raster.total();
    for (int y = 0; y < raster.rows; ++y) {
        const std::uint8_t* row = raster.ptr<std::uint8_t>(y);
        for (int x = 0; x < raster.cols; ++x) {
            for (int c = 0; c < ch; ++c) {
                out[c * plane + static_cast<std::size_t>(y) * raster.cols + x] = rescale_value(row[x * ch + c]);
            }
        }
    }
    return out;
}

ClassifierModel::ClassifierModel(BackboneSpec backbone, ClassifierConfig config, nn::Network network)
    : backbone_(std::move(backbone)), config_(config), network_(std::move(network)) {}

std::vector<double> ClassifierModel::prepare_input(const cv::Mat& tile) const {
    if (tile.empty()) throw ValidationError("cannot classify an empty tile");
    cv::Mat gray = tile;
    if (tile.channels() != 1) throw ValidationError("tiles must be single-channel");
    const int s = backbone_.input_size;
    cv::Mat resized;
    if (gray.cols == s && gray.rows == s) resized = gray;
    else cv::resize(gray, resized, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
    std::vector<double> one = rescale_pixels(resized);
    if (backbone_.channels == 1) return one;
    std::vector<double> out;
    out.reserve(one.size() * backbone_.channels);
    for (int c = 0; c < backbone_.channels; ++c) out.insert(out.end(), one.begin(), one.end());
    return out;
}

double ClassifierModel::predict_tile(const cv::Mat& tile) const { return network_.predict(prepare_input(tile)); }

std::vector<double> ClassifierModel::predict_batch(const std::vector<cv::Mat>& tiles) const {
    std::vector<double> out;
    out.reserve(tiles.size());
    for (const auto& t : tiles) out.push_back(predict_tile(t));
    return out;
}

std::string ClassifierModel::describe() const {
    return backbone_.name + " (" + std::to_string(network_.parameter_count()) + " parameters)";
}

ClassifierModel build_classifier(const BackboneSpec& backbone, const ClassifierConfig& config) {
    config.validate();
    const BackboneSpec& registered = resolve_backbone(backbone.name);
    if (!pretrained_weights_available(registered)) {
        throw ValidationError("backbone '" + registered.name +
                              "' needs pretrained ImageNet weights and no weights provider is configured; "
                              "use 'tiny' for a fully local run");
    }
    nn::Network net(registered.architecture);
    Rng rng(mix_seed(config.seed, 0x1417));
    net.initialize(rng);
    return ClassifierModel(registered, config, std::move(net));
}

TileSet load_tile_set(const DatasetManifest& manifest) {
    TileSet set;
    set.tiles.reserve(manifest.entries.size());
    set.labels.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        set.tiles.push_back(read_gray_png(manifest.file_path(e)));
        set.labels.push_back(e.label);
    }
    return set;
}

namespace {

struct Prepared {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
};

Prepared prepare(const ClassifierModel& model, const TileSet& set) {
    Prepared p;
    p.inputs.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const int y = set.labels.at(i);
        if (y != 0 && y != 1) throw ValidationError("training labels must be 0 or 1");
        p.inputs.push_back(model.prepare_input(set.tiles[i]));
        p.labels.push_back(y);
    }
    return p;
}

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

Evaluation evaluate(const nn::Network& net, const Prepared& data) {
    std::vector<const double*> ptrs;
    for (const auto& v : data.inputs) ptrs.push_back(v.data());
    const auto stats = net.loss(ptrs, data.labels);
    int correct = 0;
    for (std::size_t i = 0; i < stats.probs.size(); ++i) correct += (stats.probs[i] > 0.5 ? 1 : 0) == data.labels[i];
    return {stats.loss, data.inputs.empty() ? 0.0 : static_cast<double>(correct) / data.inputs.size()};
}

class Adam {
public:
    Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::span<double> params, std::span<const double> grad, std::size_t first) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
        const double step = lr_ * std::sqrt(c2) / c1;
        for (std::size_t i = first; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] -= step * m_[i] / (std::sqrt(v_[i]) + kEps);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-7;
    double lr_;
    std::vector<double> m_, v_;
    long long t_ = 0;
};

}  // namespace

ClassifierModel train(ClassifierModel model, const TileSet& train_set, const TileSet& val_set,
                      const ClassifierConfig& config, std::ostream* progress) {
    config.validate();
    if (train_set.size() == 0) throw ValidationError("training set is empty");
    if (val_set.size() == 0) throw ValidationError("validation set is empty");
    const Prepared train_data = prepare(model, train_set);
    const Prepared val_data = prepare(model, val_set);

    nn::Network& net = model.network();
    const std::size_t n_params = net.parameter_count();
    const std::size_t feat_c = static_cast<std::size_t>(net.architecture().feature_channels());
    Adam adam(n_params, config.learning_rate);
    Rng rng(mix_seed(config.seed, 0x7a11));
    std::vector<double> grad(n_params);
    std::vector<std::size_t> order(train_data.inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<EpochMetrics> history;
    const double keep_scale = 1.0 / (1.0 - config.dropout_rate);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        const bool head_only = epoch < config.freeze_epochs;
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<const double*> inputs;
            std::vector<int> labels;
            std::vector<nn::DropoutMask> masks;
            for (std::size_t k = start; k < end; ++k) {
                inputs.push_back(train_data.inputs[order[k]].data());
                labels.push_back(train_data.labels[order[k]]);
                if (config.dropout_rate > 0.0) {
                    nn::DropoutMask mask(feat_c);
                    for (auto& m : mask) m = rng.bernoulli(config.dropout_rate) ? 0.0 : keep_scale;
                    masks.push_back(std::move(mask));
                }
            }
            const auto stats =
                net.loss_and_gradient(inputs, labels, config.dropout_rate > 0.0 ? &masks : nullptr, grad);
            if (!std::isfinite(stats.loss)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch + 1 << ", batch starting at "
                   << start << "; try a smaller learning rate";
                throw std::runtime_error(os.str());
            }
            loss_sum += stats.loss * static_cast<double>(end - start);
            for (std::size_t k = 0; k < stats.probs.size(); ++k) {
                correct += (stats.probs[k] > 0.5 ? 1 : 0) == labels[k];
            }
            adam.step(net.parameters(), grad, head_only ? net.head_offset() : 0);
        }
        EpochMetrics em;
        em.epoch = epoch + 1;
        em.train_loss = loss_sum / static_cast<double>(order.size());
        em.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        const Evaluation val = evaluate(net, val_data);
        em.val_loss = val.loss;
        em.val_accuracy = val.accuracy;
        history.push_back(em);
        if (progress) {
            *progress << "[INFO] epoch " << em.epoch << "/" << config.epochs << std::fixed << std::setprecision(4)
                      << " loss " << em.train_loss << " acc " << em.train_accuracy << " val_loss " << em.val_loss
                      << " val_acc " << em.val_accuracy << std::defaultfloat << std::endl;
        }
    }
    model.set_config(config);
    model.set_history(std::move(history));
    return model;
}

ClassifierModel train(ClassifierModel model, const DatasetManifest& train_manifest,
                      const DatasetManifest& val_manifest, const ClassifierConfig& config, std::ostream* progress) {
    if (train_manifest.entries.empty()) throw ValidationError("training manifest is empty");
    if (val_manifest.entries.empty()) throw ValidationError("validation manifest is empty");
    return train(std::move(model), load_tile_set(train_manifest), load_tile_set(val_manifest), config, progress);
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr char kMagic[8] = {'T', 'D', 'P', 'A', 'R', 'A', 'M', '1'};

std::uint64_t fnv1a(const void* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

ojson architecture_to_json(const nn::Architecture& a) {
    ojson convs = ojson::array();
    for (const auto& c : a.convs) convs.push_back({{"out_channels", c.out_channels}, {"pool", c.pool}});
    return {{"input_size", a.input_size}, {"in_channels", a.in_channels}, {"convs", convs}};
}

}  // namespace

void save_model(const ClassifierModel& model, const fs::path& dir) {
    fs::create_directories(dir);
    const auto params = model.network().parameters();
    const std::size_t bytes = params.size() * sizeof(double);
    {
        std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
        const std::uint64_t count = params.size();
        out.write(kMagic, sizeof(kMagic));
        out.write(reinterpret_cast<const char*>(&count), sizeof(count));
        out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(bytes));
        if (!out) throw std::runtime_error("write failed: " + (dir / "params.bin").string());
    }
    const auto& b = model.backbone();
    ojson history = ojson::array();
    for (const auto& h : model.history()) {
        history.push_back({{"epoch", h.epoch},
                           {"train_loss", h.train_loss},
                           {"train_accuracy", h.train_accuracy},
                           {"val_loss", h.val_loss},
                           {"val_accuracy", h.val_accuracy}});
    }
    ojson doc{{"format", "tiledefect-model"},
              {"version", 1},
              {"backbone",
               {{"name", b.name},
                {"depth_class", b.depth_class},
                {"input_size", b.input_size},
                {"channels", b.channels},
                {"pretrained", b.pretrained}}},
              {"architecture", architecture_to_json(model.network().architecture())},
              {"config", config_to_json(model.config())},
              {"history", history},
              {"parameters",
               {{"file", "params.bin"}, {"count", params.size()}, {"fnv1a64", hex64(fnv1a(params.data(), bytes))}}}};
    write_text_file(dir / "model.json", doc.dump(2) + "\n");
}

ClassifierModel load_model(const fs::path& dir) {
    const fs::path desc_path = dir / "model.json";
    const fs::path blob_path = dir / "params.bin";
    if (!fs::exists(desc_path)) throw ValidationError("model descriptor not found: " + desc_path.string());
    if (!fs::exists(blob_path)) throw ValidationError("model parameters not found: " + blob_path.string());

    ojson doc;
    try {
        doc = ojson::parse(read_text_file(desc_path));
        if (doc.at("format") != "tiledefect-model") throw ValidationError("not a tiledefect model descriptor");
    } catch (const ojson::exception& e) {
        throw ValidationError("corrupt model descriptor " + desc_path.string() + ": " + e.what());
    }

    try {
        const BackboneSpec& backbone = resolve_backbone(doc.at("backbone").at("name").get<std::string>());
        const auto& jc = doc.at("config");
        ClassifierConfig config;
        config.dropout_rate = jc.at("dropout").get<double>();
        config.epochs = jc.at("epochs").get<int>();
        config.batch_size = jc.at("batch_size").get<int>();
        config.learning_rate = jc.at("lr").get<double>();
        config.seed = jc.at("seed").get<std::uint64_t>();
        config.freeze_epochs = jc.value("freeze_epochs", 0);

        const auto& ja = doc.at("architecture");
        nn::Architecture arch;
        arch.input_size = ja.at("input_size").get<int>();
        arch.in_channels = ja.at("in_channels").get<int>();
        for (const auto& c : ja.at("convs")) arch.convs.push_back({c.at("out_channels").get<int>(), c.at("pool").get<bool>()});
        nn::Network net(arch);

        std::ifstream in(blob_path, std::ios::binary);
        char magic[8];
        std::uint64_t count = 0;
        in.read(magic, sizeof(magic));
        in.read(reinterpret_cast<char*>(&count), sizeof(count));
        if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
            throw ValidationError("corrupt parameter blob (bad header): " + blob_path.string());
        }
        if (count != net.parameter_count() || count != doc.at("parameters").at("count").get<std::uint64_t>()) {
            throw ValidationError("parameter count mismatch in " + blob_path.string());
        }
        auto params = net.parameters();
        in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(double)));
        if (!in || in.peek() != std::char_traits<char>::eof()) {
            throw ValidationError("corrupt parameter blob (bad length): " + blob_path.string());
        }
        if (hex64(fnv1a(params.data(), count * sizeof(double))) != doc.at("parameters").at("fnv1a64").get<std::string>()) {
            throw ValidationError("parameter checksum mismatch: " + blob_path.string());
        }

        std::vector<EpochMetrics> history;
        for (const auto& h : doc.at("history")) {
            history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                               h.at("train_accuracy").get<double>(), h.at("val_loss").get<double>(),
                               h.at("val_accuracy").get<double>()});
        }
        ClassifierModel model(backbone, config, std::move(net));
        model.set_history(std::move(history));
        return model;
    } catch (const ojson::exception& e) {
        throw ValidationError("corrupt model descriptor " + desc_path.string() + ": " + e.what());
    }
}

}  // namespace tiledefect
