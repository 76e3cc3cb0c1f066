#pragma once

#include <optional>
#include <vector>

#include "lvn/dataset.hpp"
#include "lvn/patch_attack.hpp"

namespace lvn {

struct HeatmapCell {
    PatchLocation location;
    double source_probability = 0;
    double target_probability = 0;
    std::size_t argmax = 0;
};

/// Per-location response to a patch, row-major over the strided grid.
struct HeatmapReport {
    std::size_t rows = 0, cols = 0;
    std::size_t stride = 0, patch_size = 0;
    std::size_t source = 0, target = 0;
    std::vector<HeatmapCell> cells;

    const HeatmapCell& at(std::size_t r, std::size_t c) const { return cells[r * cols + c]; }

    std::vector<double> source_map() const;
    std::vector<double> target_map() const;
    std::vector<bool> argmax_is_target() const;
    std::vector<bool> argmax_is_source() const;
    std::vector<bool> argmax_is_neither() const;
};

/// Grid dimension for one axis: (extent - size) / stride + 1.
std::size_t sweep_extent(std::size_t extent, std::size_t size, std::size_t stride);

/// Places the patch at every stride-th location and records source/target
/// probabilities and the argmax. `source` is the clean prediction.
HeatmapReport location_sweep(const Network& net, const Image& image, const Patch& patch, std::size_t target,
                             std::size_t stride = 2, std::size_t threads = 0);

struct LocationRobustness {
    double frac_target_confident = 0;  // target probability >= threshold
    double frac_not_source = 0;        // argmax != source
};

LocationRobustness location_robustness(const HeatmapReport& report, double threshold = 0.9);

struct TransferRecord {
    std::size_t index = 0;
    std::size_t source = 0;  // clean prediction
    std::size_t label = 0;   // prediction with the patch
    double source_probability = 0;
    double target_probability = 0;
    bool excluded = false;   // clean prediction already equals the target
    bool confident = false;
    bool argmax_target = false;
    bool not_source = false;
};

struct TransferReport {
    std::size_t target = 0;
    PatchLocation location;
    double threshold = 0.9;
    std::vector<TransferRecord> records;
    std::size_t evaluated = 0, excluded = 0;
    std::size_t n_confident = 0, n_argmax_target = 0, n_not_source = 0;
    double rate_confident = 0, rate_argmax_target = 0, rate_not_source = 0;
};

/// Recomputes counts and rates from the per-image records.
void tally(TransferReport& report);

/// Patch placed at `loc` (bottom-right corner when unset) on every held-out image.
TransferReport transfer_eval(const Network& net, const HeldoutSet& heldout, const Patch& patch, std::size_t target,
                             std::optional<PatchLocation> loc = std::nullopt, double threshold = 0.9,
                             std::size_t threads = 0);

/// cells[i][j]: mean target-j probability over source-class-i images patched
/// with target j's patch. Missing images or patches leave the cell empty.
struct ClassMatrix {
    std::size_t num_classes = 0;
    std::vector<std::optional<double>> cells;

    const std::optional<double>& at(std::size_t source, std::size_t target) const {
        return cells[source * num_classes + target];
    }
};

ClassMatrix class_matrix(const Network& net, const std::vector<std::vector<Image>>& images_by_class,
                         const std::vector<std::optional<Patch>>& patches_by_target, PatchLocation loc,
                         std::size_t threads = 0);

/// Groups images by the network's clean prediction.
std::vector<std::vector<Image>> group_by_prediction(const Network& net, const std::vector<Image>& images);

}  // namespace lvn
