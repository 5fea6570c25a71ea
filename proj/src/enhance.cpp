#include "tiledefect/enhance.hpp"

#include <algorithm>
#include <cmath>

#include "tiledefect/rng.hpp"

namespace tiledefect {

Dihedral dihedral_from_id(int id) {
    if (id < 0 || id >= kDihedralCount) throw ValidationError("transform id out of range: " + std::to_string(id));
    return static_cast<Dihedral>(id);
}

const char* dihedral_name(Dihedral t) {
    switch (t) {
        case Dihedral::identity: return "identity";
        case Dihedral::rot90: return "rot90";
        case Dihedral::rot180: return "rot180";
        case Dihedral::rot270: return "rot270";
        case Dihedral::flip_horizontal: return "flip-horizontal";
        case Dihedral::flip_vertical: return "flip-vertical";
        case Dihedral::transpose: return "transpose";
        case Dihedral::anti_transpose: return "anti-transpose";
    }
    return "unknown";
}

bool preserves_shape(Dihedral t) {
    return std::find(kShapePreserving.begin(), kShapePreserving.end(), t) != kShapePreserving.end();
}

cv::Mat apply_dihedral(const cv::Mat& pixels, Dihedral t) {
    if (!preserves_shape(t) && pixels.rows != pixels.cols) {
        throw ValidationError(std::string("transform ") + dihedral_name(t) + " requires a square tile, got " +
                              std::to_string(pixels.cols) + "x" + std::to_string(pixels.rows));
    }
    cv::Mat out;
    switch (t) {
        case Dihedral::identity: out = pixels.clone(); break;
        case Dihedral::rot90: cv::rotate(pixels, out, cv::ROTATE_90_COUNTERCLOCKWISE); break;
        case Dihedral::rot180: cv::rotate(pixels, out, cv::ROTATE_180); break;
        case Dihedral::rot270: cv::rotate(pixels, out, cv::ROTATE_90_CLOCKWISE); break;
        case Dihedral::flip_horizontal: cv::flip(pixels, out, 1); break;
        case Dihedral::flip_vertical: cv::flip(pixels, out, 0); break;
        case Dihedral::transpose: cv::transpose(pixels, out); break;
        case Dihedral::anti_transpose: {
            cv::Mat tmp;
            cv::transpose(pixels, tmp);
            cv::flip(tmp, out, -1);
            break;
        }
    }
    return out;
}

TileRecord augment_tile(const TileRecord& tile, Dihedral t) {
    TileRecord out = tile;
    out.pixels = apply_dihedral(tile.pixels, t);
    out.transform = static_cast<int>(t);
    return out;
}

std::vector<BalanceDraw> plan_balance(const DatasetManifest& enhanced, std::uint64_t seed) {
    if (enhanced.entries.empty()) throw ValidationError("cannot balance an empty dataset");
    std::vector<std::size_t> defective;
    std::vector<std::size_t> clean;
    for (std::size_t i = 0; i < enhanced.entries.size(); ++i) {
        (enhanced.entries[i].label == 1 ? defective : clean).push_back(i);
    }
    if (defective.empty()) throw ValidationError("cannot balance: class 1 (defective) has no tiles");
    if (clean.empty()) throw ValidationError("cannot balance: class 0 (non-defective) has no tiles");

    Rng rng(seed);
    std::vector<BalanceDraw> plan;
    plan.reserve(enhanced.entries.size());
    for (std::int64_t index = 0; index < static_cast<std::int64_t>(enhanced.entries.size()); ++index) {
        const bool even = index % 2 == 0;
        const auto& pool = even ? defective : clean;
        const std::size_t src = pool[rng.uniform_index(pool.size())];
        const auto& rect = enhanced.entries[src].rect;
        const bool square = rect.width() == rect.height();
        const Dihedral t = square ? static_cast<Dihedral>(rng.uniform_index(kDihedralCount))
                                  : kShapePreserving[rng.uniform_index(kShapePreserving.size())];
        plan.push_back({index, src, t, even ? 1 : 0});
    }
    return plan;
}

DatasetManifest balance_dataset(const DatasetManifest& enhanced, std::uint64_t seed, const fs::path& output_dir) {
    const auto plan = plan_balance(enhanced, seed);
    fs::create_directories(output_dir);

    DatasetManifest out;
    out.kind = "balanced";
    out.base_dir = output_dir;
    out.grid = enhanced.grid;
    out.seed = seed;
    out.source_manifest = relative_path(enhanced.base_dir / "manifest.json", output_dir);
    out.entries.reserve(plan.size());
    for (const auto& d : plan) {
        const ManifestEntry& src = enhanced.entries[d.source_entry];
        const cv::Mat pixels = read_gray_png(enhanced.file_path(src));
        ManifestEntry e = src;
        e.file = balanced_tile_filename(src.label, src.image_id, src.col, src.row, d.index);
        e.source = src.file;
        e.transform = static_cast<int>(d.transform);
        e.draw = d.index;
        write_png(output_dir / e.file, apply_dihedral(pixels, d.transform));
        out.entries.push_back(std::move(e));
    }
    save_dataset_manifest(out, output_dir / "manifest.json");
    return out;
}

void SplitSpec::validate() const {
    if (train < 0 || val < 0 || test < 0) throw ValidationError("split ratios must be nonnegative");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
}

SplitResult split_dataset(const DatasetManifest& balanced, const SplitSpec& spec) {
    spec.validate();
    if (balanced.entries.size() < 10) throw ValidationError("split needs at least 10 entries");

    // A tiny epsilon absorbs representation error such as 11350 * 0.1.
    auto cut = [](std::size_t n, double ratio) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
    };

    Rng rng(spec.seed);
    std::vector<int> assignment(balanced.entries.size(), 0);  // 0 train, 1 val, 2 test
    for (int label : {0, 1}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < balanced.entries.size(); ++i) {
            if (balanced.entries[i].label == label) members.push_back(i);
        }
        rng.shuffle(members);
        const std::size_t n_val = cut(members.size(), spec.val);
        const std::size_t n_test = cut(members.size(), spec.test);
        for (std::size_t k = 0; k < members.size(); ++k) {
            assignment[members[k]] = k < n_val ? 1 : (k < n_val + n_test ? 2 : 0);
        }
    }

    SplitResult out;
    DatasetManifest* parts[3] = {&out.train, &out.val, &out.test};
    const char* names[3] = {"train", "val", "test"};
    for (int p = 0; p < 3; ++p) {
        parts[p]->kind = "split";
        parts[p]->base_dir = balanced.base_dir;
        parts[p]->grid = balanced.grid;
        parts[p]->seed = spec.seed;
        parts[p]->source_manifest = "manifest.json";
        parts[p]->parameters = {{"split", names[p]},
                                {"ratios", {spec.train, spec.val, spec.test}}};
    }
    for (std::size_t i = 0; i < balanced.entries.size(); ++i) {
        parts[assignment[i]]->entries.push_back(balanced.entries[i]);
    }
    for (int p = 0; p < 3; ++p) {
        if (parts[p]->entries.empty()) {
            throw ValidationError(std::string("split '") + names[p] + "' is empty after rounding");
        }
    }
    return out;
}

}  // namespace tiledefect
