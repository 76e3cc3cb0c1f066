#include "lvn/transfer_attack.hpp"

#include <stdexcept>

namespace lvn {

TransferConfig TransferConfig::for_domain(NoiseDomain domain) {
    TransferConfig cfg;
    cfg.attack = AttackConfig::for_domain(domain);
    return cfg;
}

void TransferConfig::validate() const {
    attack.validate();
    if (image_count == 0) throw std::invalid_argument("transfer: image_count must be >= 1");
    if (consecutive == 0) throw std::invalid_argument("transfer: consecutive must be >= 1");
    if (inner_steps == 0) throw std::invalid_argument("transfer: inner_steps must be >= 1");
}

PatchLocation sample_location(std::size_t height, std::size_t width, std::size_t size, Rng& rng) {
    if (size == 0 || size > height || size > width)
        throw std::invalid_argument("sample_location: patch size " + std::to_string(size) + " does not fit " +
                                    std::to_string(height) + "x" + std::to_string(width));
    const std::size_t row = rng.below(height - size + 1);
    const std::size_t col = rng.below(width - size + 1);
    return {row, col};
}

namespace {

struct TrainingImage {
    const Image* image;
    std::size_t source;
    ForwardTrace<float> clean;
};

}  // namespace

TransferResult train_transfer_patch(const Network& net, const TrainSet& train, std::size_t target, NoiseDomain domain,
                                    const TransferConfig& cfg, const std::optional<Patch>& initial) {
    cfg.validate();
    train.validate();
    if (train.empty()) throw std::invalid_argument("transfer: empty training set");
    if (target >= net.num_classes()) throw std::out_of_range("transfer: target out of range");

    TransferResult result;
    result.target = target;
    std::vector<TrainingImage> pool;
    const std::size_t n = std::min(cfg.image_count, train.size());
    for (std::size_t i = 0; i < n; ++i) {
        ForwardTrace<float> clean = net.trace(train.images[i].tensor());
        const std::size_t source = prediction_from_logits(clean.logits()).label;
        if (source == target) {
            ++result.filtered_out;
            continue;
        }
        pool.push_back({&train.images[i], source, std::move(clean)});
    }
    result.images_used = pool.size();
    if (pool.empty()) throw std::invalid_argument("transfer: every training image is already classified as the target");

    const Image& first = *pool.front().image;
    Patch patch = initial ? *initial
                          : init_patch(domain, cfg.attack.patch_size, first.channels(), cfg.attack.init, cfg.attack.seed);
    patch.validate();
    if (patch.domain != domain) throw std::invalid_argument("transfer: initial patch domain mismatch");
    const std::size_t s = patch.size();

    Rng rng(cfg.attack.seed, "transfer-sampling");
    std::size_t streak = 0;
    while (result.iterations < cfg.max_total_iterations) {
        const TrainingImage& pick = pool[rng.below(pool.size())];
        const PatchLocation loc = sample_location(pick.image->height(), pick.image->width(), s, rng);
        const Region window{loc.row, loc.row + s, loc.col, loc.col + s};
        ++result.iterations;

        for (std::size_t step = 0; step < cfg.inner_steps; ++step) {
            const ForwardTrace<float> tr = net.trace(apply_patch(*pick.image, patch, loc), pick.clean, window);
            const std::vector<float> probs = softmax(tr.logits());
            const std::size_t reference = cfg.attack.reference == ReferenceMode::source
                                              ? pick.source
                                              : select_reference(probs, target);
            ascend_patch(net, tr, patch, loc, target, reference, cfg.attack.step_size);
        }
        if (cfg.attack.on_step) cfg.attack.on_step(result.iterations, patch);

        // Success is judged on the updated patch.
        const ForwardTrace<float> after = net.trace(apply_patch(*pick.image, patch, loc), pick.clean, window);
        const std::vector<float> probs = softmax(after.logits());
        streak = static_cast<double>(probs[target]) >= cfg.attack.target_confidence ? streak + 1 : 0;
        if (streak >= cfg.consecutive) {
            result.converged = true;
            break;
        }
    }
    result.patch = std::move(patch);
    return result;
}

}  // namespace lvn
