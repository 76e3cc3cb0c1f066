#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lvn/tensor.hpp"

namespace lvn {

enum class LayerKind : std::uint8_t { conv2d = 1, relu = 2, maxpool2d = 3, flatten = 4, dense = 5 };

/// One entry of the fixed layer vocabulary. Unused fields stay zero.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::uint32_t kernel = 0;
    std::uint32_t out_channels = 0;
    std::uint32_t padding = 0;
    std::uint32_t window = 0;
    std::uint32_t out_features = 0;

    static LayerSpec conv2d(std::uint32_t kernel, std::uint32_t out_channels, std::uint32_t padding) {
        return {LayerKind::conv2d, kernel, out_channels, padding, 0, 0};
    }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec maxpool2d(std::uint32_t window) { return {LayerKind::maxpool2d, 0, 0, 0, window, 0}; }
    static LayerSpec flatten() { return {LayerKind::flatten}; }
    static LayerSpec dense(std::uint32_t out_features) { return {LayerKind::dense, 0, 0, 0, 0, out_features}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// [height, width, channels]; flattened activations are [1, 1, n].
using Shape3 = std::array<std::size_t, 3>;

std::string shape_string(const Shape3& s);

template <typename T>
struct LayerParams {
    BasicTensor<T> weight;  // conv: [out, k, k, in]; dense: [out, in]
    BasicTensor<T> bias;    // [out]

    bool empty() const { return weight.empty(); }
    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Half-open spatial window [y0, y1) x [x0, x1).
struct Region {
    std::size_t y0 = 0, y1 = 0, x0 = 0, x1 = 0;
    bool contains(std::size_t y, std::size_t x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
    friend bool operator==(const Region&, const Region&) = default;
};

/// Activations recorded by a forward pass, consumed by backward().
template <typename T>
struct ForwardTrace {
    std::vector<std::vector<T>> activations;            // [0] is the input, back() the logits
    std::vector<std::vector<std::uint32_t>> pool_argmax;  // per layer, empty unless maxpool

    std::span<const T> logits() const { return activations.back(); }
};

/// Sequential classifier over a fixed layer vocabulary with reverse-mode
/// gradients for both parameters and input pixels. Immutable after training,
/// so forward and gradient queries are safe to run concurrently.
template <typename T>
class BasicNetwork {
public:
    /// Throws std::invalid_argument if layer shapes do not compose or the
    /// final layer does not produce num_classes outputs.
    BasicNetwork(Shape3 input_shape, std::vector<LayerSpec> layers, std::size_t num_classes);

    /// conv3x3(8) relu pool2 conv3x3(16) relu global-maxpool flatten dense(num_classes).
    /// The second pool spans the whole feature map, so the read-out is
    /// translation invariant.
    static BasicNetwork victim(std::size_t num_classes, std::size_t image_size = 32);

    const Shape3& input_shape() const { return input_shape_; }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const Shape3& output_shape(std::size_t layer) const { return shapes_[layer + 1]; }

    std::vector<LayerParams<T>>& params() { return params_; }
    const std::vector<LayerParams<T>>& params() const { return params_; }
    std::size_t parameter_count() const;

    /// Uniform(-limit, limit) weights with limit = sqrt(6 / (fan_in + fan_out)); zero biases.
    void init_glorot(std::uint64_t seed);

    /// Pre-softmax logits, shape [num_classes].
    BasicTensor<T> forward(const BasicTensor<T>& input) const;

    ForwardTrace<T> trace(const BasicTensor<T>& input) const;

    /// Trace of an input that differs from base's input only inside
    /// `changed`. Only the affected part of each activation is recomputed;
    /// the result is bit-identical to trace(input).
    ForwardTrace<T> trace(const BasicTensor<T>& input, const ForwardTrace<T>& base, Region changed) const;

    /// Propagates grad_logits back to the input. Parameter gradients are
    /// accumulated (added) into param_grads when it is non-null.
    BasicTensor<T> backward(const ForwardTrace<T>& trace, std::span<const T> grad_logits,
                            std::vector<LayerParams<T>>* param_grads = nullptr) const;

    /// Input gradient inside `region` only (zero elsewhere), bit-identical
    /// there to the full backward pass. Skips parameter gradients.
    BasicTensor<T> backward(const ForwardTrace<T>& trace, std::span<const T> grad_logits, Region region) const;

    /// d(class_weights . logits) / d(input).
    BasicTensor<T> input_gradient(const BasicTensor<T>& input, std::span<const T> class_weights) const;

    /// Zero-valued gradient buffers matching params().
    std::vector<LayerParams<T>> zero_grads() const;

    template <typename U>
    BasicNetwork<U> cast() const {
        BasicNetwork<U> out(input_shape_, layers_, num_classes_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (params_[i].empty()) continue;
            out.params()[i].weight = params_[i].weight.template cast<U>();
            out.params()[i].bias = params_[i].bias.template cast<U>();
        }
        return out;
    }

    friend bool operator==(const BasicNetwork&, const BasicNetwork&) = default;

private:
    void check_input(const BasicTensor<T>& input) const;
    void run_layer(std::size_t i, ForwardTrace<T>& tr, const Region* out_region) const;
    /// affected[i] is the part of layer i's input influenced by `changed`.
    std::vector<Region> affected_regions(Region changed) const;

    Shape3 input_shape_;
    std::vector<LayerSpec> layers_;
    std::size_t num_classes_;
    std::vector<Shape3> shapes_;  // shapes_[i] is the input of layer i
    std::vector<LayerParams<T>> params_;
};

extern template class BasicNetwork<float>;
extern template class BasicNetwork<double>;

using Network = BasicNetwork<float>;
using Network64 = BasicNetwork<double>;

struct Prediction {
    std::size_t label;
    double probability;
};

/// Max-shifted softmax. Throws on empty input.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

template <typename T>
std::vector<T> softmax(const BasicTensor<T>& logits) {
    return softmax(std::span<const T>(logits.storage()));
}

/// Index of the largest value; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

template <typename T>
Prediction predict(const BasicNetwork<T>& net, const BasicTensor<T>& input);

inline Prediction predict(const Network& net, const Image& image) { return predict(net, image.tensor()); }

/// Argmax and probability of already-computed logits.
template <typename T>
Prediction prediction_from_logits(std::span<const T> logits);

}  // namespace lvn
