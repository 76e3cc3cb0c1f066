#pragma once

#include <cstdint>
#include <optional>

#include "lvn/dataset.hpp"
#include "lvn/patch_attack.hpp"
#include "lvn/rng.hpp"

namespace lvn {

struct TransferConfig {
    AttackConfig attack;  // step size, patch size, success confidence, seed, reference mode, init
    std::size_t image_count = 100;
    std::size_t consecutive = 30;
    std::size_t max_total_iterations = 100000;
    std::size_t inner_steps = 1;

    static TransferConfig for_domain(NoiseDomain domain);
    void validate() const;
};

struct TransferResult {
    Patch patch;
    std::size_t target = 0;
    bool converged = false;
    std::size_t iterations = 0;    // sampled (image, location) pairs
    std::size_t images_used = 0;   // training images after filtering
    std::size_t filtered_out = 0;  // images already predicted as the target
};

/// Uniform over the (h - s + 1) * (w - s + 1) valid top-left positions.
PatchLocation sample_location(std::size_t height, std::size_t width, std::size_t size, Rng& rng);

/// Trains one patch across images and locations. Each iteration samples an
/// image and a location uniformly, takes inner_steps ascent steps on the
/// margin objective, then checks the target probability on that pair.
/// Stops after `consecutive` successes in a row or at the iteration cap.
TransferResult train_transfer_patch(const Network& net, const TrainSet& train, std::size_t target, NoiseDomain domain,
                                    const TransferConfig& cfg, const std::optional<Patch>& initial = std::nullopt);

}  // namespace lvn
