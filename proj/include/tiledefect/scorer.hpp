#pragma once

#include <string>

#include <opencv2/core.hpp>

namespace tiledefect {

/// Anything that maps a grayscale tile to a defect probability in [0, 1].
/// Implementations must be safe for concurrent const calls.
class TileScorer {
public:
    virtual ~TileScorer() = default;
    virtual double score_tile(const cv::Mat& tile) const = 0;
    virtual std::string describe() const = 0;
};

}  // namespace tiledefect
