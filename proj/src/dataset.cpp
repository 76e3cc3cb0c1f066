#include "lvn/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "lvn/rng.hpp"

namespace lvn {

namespace {

// Saturated colors, far from the mid-gray background.
constexpr std::array<std::array<float, 3>, kMaxSynthClasses> kPalette{{
    {0.95f, 0.15f, 0.10f},
    {0.10f, 0.80f, 0.20f},
    {0.15f, 0.25f, 0.95f},
    {0.95f, 0.85f, 0.10f},
    {0.85f, 0.15f, 0.85f},
    {0.10f, 0.85f, 0.90f},
    {0.98f, 0.55f, 0.05f},
    {0.05f, 0.05f, 0.05f},
    {0.55f, 0.05f, 0.20f},
    {0.05f, 0.40f, 0.10f},
    {0.05f, 0.10f, 0.45f},
    {0.98f, 0.98f, 0.98f},
    {0.60f, 0.35f, 0.95f},
    {0.55f, 0.95f, 0.45f},
    {0.95f, 0.55f, 0.70f},
    {0.45f, 0.30f, 0.10f},
}};

constexpr double kBackgroundAmplitude = 0.06;

}  // namespace

void SynthConfig::validate() const {
    if (num_classes < 2 || num_classes > kMaxSynthClasses)
        throw std::invalid_argument("synth_dataset: num_classes must be in [2, 16], got " +
                                    std::to_string(num_classes));
    if (image_size < 16)
        throw std::invalid_argument("synth_dataset: image_size must be >= 16, got " + std::to_string(image_size));
    if (n_per_class == 0) throw std::invalid_argument("synth_dataset: n_per_class must be positive");
}

ShapeParams synth_shape_params(const SynthConfig& cfg, Split split, std::size_t index) {
    cfg.validate();
    const std::uint64_t stream = substream_seed(cfg.seed, split == Split::train ? "dataset/train" : "dataset/heldout");
    Rng rng(mix64(stream + index));

    ShapeParams p;
    p.label = index % cfg.num_classes;
    p.kind = static_cast<ShapeKind>(p.label % kShapeKinds);
    const double size = static_cast<double>(cfg.image_size);
    // The whole shape stays inside the middle 60% of the image.
    p.radius = size * rng.uniform(0.13, 0.2);
    const double lo = 0.2 * size + p.radius;
    const double hi = 0.8 * size - p.radius;
    p.center_y = rng.uniform(lo, hi);
    p.center_x = rng.uniform(lo, hi);
    for (std::size_t c = 0; c < 3; ++c) {
        const double jitter = rng.uniform(-0.05, 0.05);
        p.color[c] = static_cast<float>(std::clamp(kPalette[p.label][c] + jitter, 0.0, 1.0));
    }
    p.noise_seed = rng.next();
    return p;
}

bool shape_contains(const ShapeParams& s, std::size_t y, std::size_t x) {
    const double dy = static_cast<double>(y) + 0.5 - s.center_y;
    const double dx = static_cast<double>(x) + 0.5 - s.center_x;
    const double r = s.radius;
    const double ay = std::abs(dy), ax = std::abs(dx);
    switch (s.kind) {
        case ShapeKind::disk:
            return dy * dy + dx * dx <= r * r;
        case ShapeKind::square:
            return ay <= 0.8 * r && ax <= 0.8 * r;
        case ShapeKind::triangle:
            return dy >= -r && dy <= r && ax <= 0.5 * (dy + r);
        case ShapeKind::plus:
            return (ax <= 0.3 * r && ay <= r) || (ay <= 0.3 * r && ax <= r);
        case ShapeKind::ring: {
            const double d2 = dy * dy + dx * dx;
            return d2 <= r * r && d2 >= 0.3 * r * r;
        }
        case ShapeKind::diamond:
            return ax + ay <= r;
        case ShapeKind::saltire:
            return ax <= 0.85 * r && ay <= 0.85 * r && (std::abs(dx - dy) <= 0.4 * r || std::abs(dx + dy) <= 0.4 * r);
        case ShapeKind::stripes:
            return ax <= r && ay <= r && static_cast<long>(std::floor((dy + r) / (0.5 * r))) % 2 == 0;
    }
    return false;
}

Image render_shape(const ShapeParams& shape, std::size_t image_size) {
    Rng rng(shape.noise_seed);
    Tensor t({image_size, image_size, 3});
    std::array<double, 3> base{};
    for (double& b : base) b = rng.uniform(0.2, 0.8);
    for (std::size_t y = 0; y < image_size; ++y)
        for (std::size_t x = 0; x < image_size; ++x) {
            const bool inside = shape_contains(shape, y, x);
            for (std::size_t c = 0; c < 3; ++c) {
                const double noise = rng.uniform(-kBackgroundAmplitude, kBackgroundAmplitude);
                t.at(y, x, c) = inside ? shape.color[c] : static_cast<float>(base[c] + noise);
            }
        }
    return Image(std::move(t));
}

}  // namespace lvn
