#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tiledefect/core_data.hpp"

namespace tiledefect {

/// Elements of the dihedral group of the square.
enum class Dihedral : int {
    identity = 0,
    rot90 = 1,  // counter-clockwise
    rot180 = 2,
    rot270 = 3,
    flip_horizontal = 4,  // mirror left-right
    flip_vertical = 5,    // mirror top-bottom
    transpose = 6,
    anti_transpose = 7,
};

inline constexpr int kDihedralCount = 8;
inline constexpr std::array<Dihedral, 4> kShapePreserving{Dihedral::identity, Dihedral::rot180,
                                                          Dihedral::flip_horizontal, Dihedral::flip_vertical};

Dihedral dihedral_from_id(int id);
const char* dihedral_name(Dihedral t);
bool preserves_shape(Dihedral t);

/// Transforms a raster. Shape-changing transforms require a square input.
cv::Mat apply_dihedral(const cv::Mat& pixels, Dihedral t);

TileRecord augment_tile(const TileRecord& tile, Dihedral t);

struct BalanceDraw {
    std::int64_t index;         // position in the balancing loop
    std::size_t source_entry;   // index into the input manifest's entries
    Dihedral transform;
    int label;
};

/// The sampling plan of the even-odd loop: even indices draw a defective
/// tile, odd indices a non-defective one, both uniformly with replacement,
/// each with a uniform valid transform. One RNG stream, in index order.
std::vector<BalanceDraw> plan_balance(const DatasetManifest& enhanced, std::uint64_t seed);

/// Executes plan_balance: reads every drawn tile, transforms it and writes
/// it to output_dir together with manifest.json.
DatasetManifest balance_dataset(const DatasetManifest& enhanced, std::uint64_t seed, const fs::path& output_dir);

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SplitResult {
    DatasetManifest train;
    DatasetManifest val;
    DatasetManifest test;
};

/// Stratified split: per class, seeded shuffle then contiguous cuts. val and
/// test sizes round down; the remainder goes to train.
SplitResult split_dataset(const DatasetManifest& balanced, const SplitSpec& spec);

}  // namespace tiledefect
