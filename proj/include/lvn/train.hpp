#pragma once

#include <cstdint>
#include <vector>

#include "lvn/dataset.hpp"
#include "lvn/network.hpp"

namespace lvn {

struct TrainConfig {
    std::size_t epochs = 8;
    std::size_t batch_size = 16;
    double learning_rate = 0.02;
    std::uint64_t seed = 42;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch;
    double train_loss;       // mean cross-entropy over the epoch's batches
    double train_accuracy;   // measured after the epoch
    double heldout_accuracy; // NaN when no held-out set was supplied
};

struct TrainResult {
    Network network;
    std::vector<EpochMetrics> epochs;
};

/// Mean cross-entropy of the network over the set.
double cross_entropy(const Network& net, const std::vector<Image>& images, const std::vector<std::size_t>& labels);

double accuracy(const Network& net, const std::vector<Image>& images, const std::vector<std::size_t>& labels);

/// Minibatch SGD on softmax cross-entropy, starting from the given
/// parameters. Batch order derives from cfg.seed.
TrainResult train(Network net, const TrainSet& data, const TrainConfig& cfg, const HeldoutSet* heldout = nullptr);

/// Default victim architecture, initialized from cfg.seed, then trained.
TrainResult train_victim(const TrainSet& data, const TrainConfig& cfg, const HeldoutSet* heldout = nullptr);

}  // namespace lvn
