#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lvn/tensor.hpp"

namespace lvn {

enum class Split : std::uint8_t { train, heldout };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "heldout"; }

/// Labeled images tagged with their split at the type level, so code that
/// trains on images cannot be handed the held-out set by accident.
template <Split S>
struct LabeledImages {
    static constexpr Split split = S;

    std::vector<Image> images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    void validate() const {
        if (images.size() != labels.size())
            throw std::invalid_argument("dataset: " + std::to_string(images.size()) + " images but " +
                                        std::to_string(labels.size()) + " labels");
        for (std::size_t label : labels)
            if (label >= num_classes)
                throw std::invalid_argument("dataset: label " + std::to_string(label) + " >= num_classes " +
                                            std::to_string(num_classes));
    }
};

using TrainSet = LabeledImages<Split::train>;
using HeldoutSet = LabeledImages<Split::heldout>;

enum class ShapeKind : std::uint8_t { disk, square, triangle, plus, ring, diamond, saltire, stripes };

inline constexpr std::size_t kShapeKinds = 8;
inline constexpr std::size_t kMaxSynthClasses = 16;

/// Everything the generator decided for one image.
struct ShapeParams {
    std::size_t label = 0;
    ShapeKind kind = ShapeKind::disk;
    double center_y = 0, center_x = 0;
    double radius = 0;
    std::array<float, 3> color{};
    std::uint64_t noise_seed = 0;
};

struct SynthConfig {
    std::uint64_t seed = 42;
    std::size_t n_per_class = 200;
    std::size_t num_classes = 8;
    std::size_t image_size = 32;

    void validate() const;
};

/// Parameters of image `index` of the split. Images cycle through classes in
/// order, so label == index % num_classes.
ShapeParams synth_shape_params(const SynthConfig& cfg, Split split, std::size_t index);

/// Whether pixel (y, x), sampled at its center, lies inside the shape.
bool shape_contains(const ShapeParams& shape, std::size_t y, std::size_t x);

Image render_shape(const ShapeParams& shape, std::size_t image_size);

template <Split S>
LabeledImages<S> synth_dataset(const SynthConfig& cfg) {
    cfg.validate();
    LabeledImages<S> out;
    out.num_classes = cfg.num_classes;
    const std::size_t n = cfg.n_per_class * cfg.num_classes;
    out.images.reserve(n);
    out.labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ShapeParams p = synth_shape_params(cfg, S, i);
        out.images.push_back(render_shape(p, cfg.image_size));
        out.labels.push_back(p.label);
    }
    return out;
}

}  // namespace lvn
