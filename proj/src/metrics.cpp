#include "tiledefect/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace tiledefect {

namespace {

Ratio ratio(double num, double den) {
    if (den == 0.0) return {0.0, true};
    return {num / den, false};
}

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw ValidationError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                              std::to_string(labels.size()) + ")");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1, got " + std::to_string(y));
    }
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
    check_inputs(scores, labels);
    if (scores.empty()) throw ValidationError("confusion needs at least one sample");
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] > threshold;
        if (predicted) (labels[i] == 1 ? c.tp : c.fp)++;
        else (labels[i] == 1 ? c.fn : c.tn)++;
    }
    return c;
}

Ratio accuracy(const ConfusionCounts& c) { return ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total())); }
Ratio precision(const ConfusionCounts& c) { return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp)); }
Ratio recall(const ConfusionCounts& c) { return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn)); }

Ratio f1_from(double p, double r) { return ratio(2.0 * p * r, p + r); }

Ratio f1_score(const ConfusionCounts& c) {
    const Ratio p = precision(c);
    const Ratio r = recall(c);
    Ratio f = f1_from(p.value, r.value);
    f.degenerate = f.degenerate || p.degenerate || r.degenerate;
    return f;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (1-based, tie-averaged) ranks of the positives.
    double pos_rank_sum = 0.0;
    std::int64_t n_pos = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == 1) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::int64_t n_neg = static_cast<std::int64_t>(scores.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("AUC is undefined when only one class is present");
    const double u = pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport make_report(std::span<const double> scores, std::span<const int> labels, double threshold) {
    MetricsReport r;
    r.threshold = threshold;
    r.counts = confusion(scores, labels, threshold);
    r.accuracy = accuracy(r.counts);
    r.precision = precision(r.counts);
    r.recall = recall(r.counts);
    r.f1 = f1_score(r.counts);
    const bool both = r.counts.tp + r.counts.fn > 0 && r.counts.tn + r.counts.fp > 0;
    r.auc = both ? Ratio{auc(scores, labels), false} : Ratio{0.0, true};
    return r;
}

MetricsReport evaluate_tiles(const TileScorer& model, const DatasetManifest& manifest, double threshold) {
    if (manifest.entries.empty()) throw ValidationError("cannot evaluate an empty manifest");
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        scores.push_back(model.score_tile(read_gray_png(manifest.file_path(e))));
        labels.push_back(e.label);
    }
    return make_report(scores, labels, threshold);
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
    auto metric = [](const Ratio& x) { return nlohmann::ordered_json{{"value", x.value}, {"degenerate", x.degenerate}}; };
    return {{"threshold", r.threshold},
            {"accuracy", metric(r.accuracy)},
            {"precision", metric(r.precision)},
            {"recall", metric(r.recall)},
            {"f1", metric(r.f1)},
            {"auc", metric(r.auc)},
            {"counts", {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}}},
            {"total", r.counts.total()}};
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::size_t name_w = 5;
    for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w)) << "Model";
    for (const char* h : {"Accuracy", "Precision", "Recall", "F1 Score", "AUC"}) os << "  " << std::setw(9) << h;
    os << "\n";
    for (const auto& [name, r] : rows) {
        os << std::left << std::setw(static_cast<int>(name_w)) << name << std::right << std::fixed
           << std::setprecision(4);
        for (const Ratio* m : {&r.accuracy, &r.precision, &r.recall, &r.f1, &r.auc}) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(4) << m->value << (m->degenerate ? "*" : "");
            os << "  " << std::left << std::setw(9) << cell.str();
        }
        os << "\n";
    }
    os << std::defaultfloat;
    return os.str();
}

}  // namespace tiledefect
