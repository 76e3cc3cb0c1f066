#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lvn/dataset.hpp"
#include "lvn/patch_attack.hpp"

namespace lvn {

/// towards_source: ascend logit[source] until argmax == source.
/// away_from_target: descend logit[target] until argmax != target.
enum class FixMode : std::uint8_t { towards_source = 0, away_from_target = 1 };

std::string to_string(FixMode m);
FixMode parse_fix_mode(std::string_view s);

struct FixConfig {
    double step_size = 0.01;
    std::size_t max_iterations = 2000;
    bool clip = false;  // clamp the image to [0, 1] after every step

    void validate() const;
};

/// Accumulated |step * gradient| per pixel (the realized |dx| when clipping),
/// summed over channels. Row-major [height, width].
struct FixMap {
    std::size_t height = 0, width = 0;
    std::vector<double> values;
    FixMode mode = FixMode::towards_source;
    std::size_t iterations = 0;
    bool fixed = false;
    std::size_t label = 0;  // argmax after the last step

    double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    double max_value() const;
};

/// Full-image gradient steps on `noised`, which must currently be classified
/// as `target`. Unfixed maps at the iteration cap come back with fixed=false.
FixMap gradient_fix(const Network& net, const Tensor& noised, FixMode mode, std::size_t source, std::size_t target,
                    const FixConfig& cfg = {});

/// MAX and SUM over every s x s window at stride 1, row-major.
struct WindowScores {
    std::size_t rows = 0, cols = 0, size = 0;
    std::vector<double> max;
    std::vector<double> sum;
};

WindowScores window_scores(const FixMap& map, std::size_t s);

struct WindowOverlap {
    PatchLocation top_max, top_sum;
    bool overlap_max = false;
    bool overlap_sum = false;
};

/// Top window under each score (ties to the lowest row-major index) and
/// whether it shares at least one pixel with the s x s region at `loc`.
WindowOverlap top_window_overlap(const FixMap& map, PatchLocation loc, std::size_t s);

/// Half-open [a0, a0+s) x [b0, b0+s) intersection test for two squares.
bool squares_overlap(PatchLocation a, PatchLocation b, std::size_t s);

struct TargetPatch {
    Patch patch;
    std::size_t target = 0;
};

struct SaliencyRecord {
    std::size_t patch_index = 0;
    std::size_t image_index = 0;
    NoiseDomain domain = NoiseDomain::network;
    FixMode mode = FixMode::towards_source;
    std::size_t source = 0, target = 0;
    bool excluded = false;  // patch does not flip the argmax to the target
    bool fixed = false;
    std::size_t iterations = 0;
    bool overlap_max = false;
    bool overlap_sum = false;
};

struct SaliencyCell {
    NoiseDomain domain = NoiseDomain::network;
    FixMode mode = FixMode::towards_source;
    std::size_t evaluated = 0, excluded = 0, unfixed = 0;
    std::size_t n_overlap_max = 0, n_overlap_sum = 0;
    double frac_overlap_max = 0, frac_overlap_sum = 0;
};

/// Reference percentages from the original ImageNet study, for side-by-side
/// display only.
struct ReferenceRow {
    NoiseDomain domain;
    FixMode mode;
    double max_percent;
    double sum_percent;
};
inline constexpr std::array<ReferenceRow, 4> kReferenceRows{{
    {NoiseDomain::network, FixMode::towards_source, 0.4, 0.15},
    {NoiseDomain::network, FixMode::away_from_target, 0.5, 0.13},
    {NoiseDomain::image, FixMode::towards_source, 0.6, 5.4},
    {NoiseDomain::image, FixMode::away_from_target, 0.7, 5.2},
}};

struct SaliencyStats {
    std::vector<SaliencyCell> cells;  // domain-major, then mode, only domains present
    std::vector<SaliencyRecord> records;
    /// Pairs where away_from_target needed more steps than towards_source.
    std::size_t away_later = 0;
    std::size_t paired = 0;
};

/// Recomputes cells and pairing counts from the records.
void tally(SaliencyStats& stats);

struct SaliencyConfig {
    FixConfig fix;
    std::size_t threads = 0;
};

/// Every patch at `loc` on every image, both fix modes. Pairs whose clean
/// prediction is the target, or where the patch does not produce the target,
/// are excluded and counted.
SaliencyStats saliency_stats(const Network& net, const std::vector<TargetPatch>& patches, const HeldoutSet& images,
                             PatchLocation loc, const SaliencyConfig& cfg = {});

/// Table layout: Domain | Fix method | MAX | SUM, with reference values alongside.
std::string format_saliency_table(const SaliencyStats& stats);

}  // namespace lvn
