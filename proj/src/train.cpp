#include "lvn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lvn/rng.hpp"

namespace lvn {

void TrainConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("train: epochs must be positive");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("train: learning_rate must be finite and non-negative");
}

double cross_entropy(const Network& net, const std::vector<Image>& images, const std::vector<std::size_t>& labels) {
    if (images.empty()) throw std::invalid_argument("cross_entropy: empty set");
    double total = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor logits = net.forward(images[i].tensor());
        const std::vector<double> l64(logits.data().begin(), logits.data().end());
        const std::vector<double> p = softmax(std::span<const double>(l64));
        total -= std::log(std::max(p[labels[i]], 1e-300));
    }
    return total / static_cast<double>(images.size());
}

double accuracy(const Network& net, const std::vector<Image>& images, const std::vector<std::size_t>& labels) {
    if (images.empty()) throw std::invalid_argument("accuracy: empty set");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (predict(net, images[i]).label == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(images.size());
}

TrainResult train(Network net, const TrainSet& data, const TrainConfig& cfg, const HeldoutSet* heldout) {
    cfg.validate();
    data.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    if (data.num_classes > net.num_classes())
        throw std::invalid_argument("train: dataset has " + std::to_string(data.num_classes) +
                                    " classes, network only " + std::to_string(net.num_classes()));

    Rng rng(cfg.seed, "shuffle");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const float lr = static_cast<float>(cfg.learning_rate);

    TrainResult result{net, {}};
    Network& model = result.network;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double loss_sum = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            auto grads = model.zero_grads();
            double batch_loss = 0;
            for (std::size_t j = start; j < end; ++j) {
                const std::size_t idx = order[j];
                const ForwardTrace<float> tr = model.trace(data.images[idx].tensor());
                std::vector<float> g = softmax(tr.logits());
                batch_loss -= std::log(std::max(static_cast<double>(g[data.labels[idx]]), 1e-30));
                g[data.labels[idx]] -= 1.0f;  // d(CE)/d(logits) = p - onehot
                model.backward(tr, g, &grads);
            }
            const float scale = lr / static_cast<float>(end - start);
            for (std::size_t li = 0; li < grads.size(); ++li) {
                if (grads[li].empty()) continue;
                auto& p = model.params()[li];
                for (std::size_t k = 0; k < p.weight.size(); ++k) p.weight[k] -= scale * grads[li].weight[k];
                for (std::size_t k = 0; k < p.bias.size(); ++k) p.bias[k] -= scale * grads[li].bias[k];
            }
            loss_sum += batch_loss / static_cast<double>(end - start);
            ++batches;
        }

        EpochMetrics m{epoch + 1, loss_sum / static_cast<double>(batches), accuracy(model, data.images, data.labels),
                       std::numeric_limits<double>::quiet_NaN()};
        if (heldout) m.heldout_accuracy = accuracy(model, heldout->images, heldout->labels);
        result.epochs.push_back(m);
    }
    return result;
}

TrainResult train_victim(const TrainSet& data, const TrainConfig& cfg, const HeldoutSet* heldout) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    Network net = Network::victim(data.num_classes, data.images.front().height());
    net.init_glorot(cfg.seed);
    return train(std::move(net), data, cfg, heldout);
}

}  // namespace lvn
