#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tiledefect/core_data.hpp"
#include "tiledefect/scorer.hpp"

namespace tiledefect {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    std::int64_t fn = 0;

    std::int64_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A ratio whose denominator may be zero. 0/0 reports value 0 with the
/// degenerate flag set.
struct Ratio {
    double value = 0.0;
    bool degenerate = false;
};

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

Ratio accuracy(const ConfusionCounts& c);
Ratio precision(const ConfusionCounts& c);
Ratio recall(const ConfusionCounts& c);
Ratio f1_score(const ConfusionCounts& c);

/// Harmonic mean of an already computed precision and recall.
Ratio f1_from(double precision, double recall);

/// Mann-Whitney statistic with half credit for ties, computed from
/// average ranks in O(n log n). Throws ValidationError when only one
/// class is present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct MetricsReport {
    Ratio accuracy;
    Ratio precision;
    Ratio recall;
    Ratio f1;
    Ratio auc;  // degenerate when the labels hold a single class
    ConfusionCounts counts;
    double threshold = 0.5;
};

MetricsReport make_report(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Scores every tile of a labeled manifest and reports all metrics.
MetricsReport evaluate_tiles(const TileScorer& model, const DatasetManifest& manifest, double threshold);

nlohmann::ordered_json report_to_json(const MetricsReport& report);

/// Aligned text table: one header line and one row per (name, report),
/// columns Accuracy, Precision, Recall, F1 Score, AUC.
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace tiledefect
