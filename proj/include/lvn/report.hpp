#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lvn/eval.hpp"
#include "lvn/saliency.hpp"
#include "lvn/train.hpp"
#include "lvn/transfer_attack.hpp"

namespace lvn {

using Json = nlohmann::ordered_json;

// CSV writers. Every file starts with a header row; numbers use %.9g
// (float-derived) or %.17g (double accumulations) so values round-trip.

/// epoch,train_loss,train_accuracy,heldout_accuracy
std::string metrics_csv(const std::vector<EpochMetrics>& epochs);

/// row,col,y,x,source_probability,target_probability,argmax
/// row/col index the grid, y/x the patch's top-left pixel.
std::string heatmap_csv(const HeatmapReport& report);

/// index,source,label,source_probability,target_probability,excluded,confident,argmax_target,not_source
std::string transfer_csv(const TransferReport& report);

/// source,target,mean_target_probability (empty when the cell has no data)
std::string class_matrix_csv(const ClassMatrix& m);

/// y,x,value
std::string fixmap_csv(const FixMap& map);

/// patch_index,image_index,domain,mode,source,target,excluded,fixed,iterations,overlap_max,overlap_sum
std::string saliency_records_csv(const SaliencyStats& stats);

/// The six heatmap panels as named PGM files: source probability, target
/// probability, argmax == target, argmax == source, neither, and the argmax
/// class index scaled by 255 / (num_classes - 1).
std::vector<std::pair<std::string, std::string>> heatmap_pgms(const HeatmapReport& report, std::size_t num_classes);

/// Map divided by its maximum then scaled to bytes. An all-zero map stays zero.
std::string fixmap_pgm(const FixMap& map);
Json fixmap_sidecar(const FixMap& map);

Json to_json(const AttackResult& r);
Json to_json(const TransferResult& r);
Json to_json(const TransferReport& r);
Json to_json(const LocationRobustness& r);
Json to_json(const SaliencyStats& s);

}  // namespace lvn
