#include "lvn/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "lvn/rng.hpp"

namespace lvn {

std::string shape_string(const Shape3& s) {
    return shape_string(Shape{s[0], s[1], s[2]});
}

namespace {

std::string layer_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "unknown";
}

Shape3 compose(const LayerSpec& spec, const Shape3& in, std::size_t index) {
    auto fail = [&](const std::string& why) {
        throw std::invalid_argument("network: layer " + std::to_string(index) + " (" + layer_name(spec.kind) +
                                    ") cannot take input " + shape_string(in) + ": " + why);
    };
    switch (spec.kind) {
        case LayerKind::conv2d: {
            if (spec.kernel == 0 || spec.out_channels == 0) fail("kernel and out_channels must be positive");
            const long h = static_cast<long>(in[0]) + 2L * spec.padding - spec.kernel + 1;
            const long w = static_cast<long>(in[1]) + 2L * spec.padding - spec.kernel + 1;
            if (h < 1 || w < 1) fail("kernel larger than padded input");
            return {static_cast<std::size_t>(h), static_cast<std::size_t>(w), spec.out_channels};
        }
        case LayerKind::relu:
            return in;
        case LayerKind::maxpool2d:
            if (spec.window == 0) fail("window must be positive");
            if (spec.window > in[0] || spec.window > in[1]) fail("window larger than input");
            return {in[0] / spec.window, in[1] / spec.window, in[2]};
        case LayerKind::flatten:
            return {1, 1, in[0] * in[1] * in[2]};
        case LayerKind::dense:
            if (spec.out_features == 0) fail("out_features must be positive");
            if (in[0] != 1 || in[1] != 1) fail("dense requires a flattened input");
            return {1, 1, spec.out_features};
    }
    fail("unknown layer kind");
    return in;
}

Region full_region(const Shape3& s) { return {0, s[0], 0, s[1]}; }

// Output positions whose receptive field touches `in` (in input coordinates).
Region forward_region(const LayerSpec& spec, const Region& in, const Shape3& os) {
    switch (spec.kind) {
        case LayerKind::conv2d: {
            const long reach = static_cast<long>(spec.kernel) - 1 - static_cast<long>(spec.padding);
            auto lo = [&](std::size_t v) { return static_cast<std::size_t>(std::max(0L, static_cast<long>(v) - reach)); };
            auto hi = [&](std::size_t v, std::size_t n) {
                return std::min(n, static_cast<std::size_t>(static_cast<long>(v) + static_cast<long>(spec.padding)));
            };
            return {lo(in.y0), hi(in.y1, os[0]), lo(in.x0), hi(in.x1, os[1])};
        }
        case LayerKind::relu:
            return in;
        case LayerKind::maxpool2d: {
            const std::size_t w = spec.window;
            return {in.y0 / w, std::min(os[0], (in.y1 + w - 1) / w), in.x0 / w, std::min(os[1], (in.x1 + w - 1) / w)};
        }
        case LayerKind::flatten:
        case LayerKind::dense:
            return full_region(os);
    }
    return full_region(os);
}

template <typename T>
void conv_forward(const T* in, const Shape3& is, const LayerSpec& spec, const LayerParams<T>& p, T* out,
                  const Shape3& os, const Region& r) {
    const std::size_t k = spec.kernel, pad = spec.padding, C = is[2], O = os[2];
    const T* w = p.weight.data().data();
    const T* b = p.bias.data().data();
    for (std::size_t oy = r.y0; oy < r.y1; ++oy) {
        for (std::size_t ox = r.x0; ox < r.x1; ++ox) {
            T* o_ptr = out + (oy * os[1] + ox) * O;
            for (std::size_t o = 0; o < O; ++o) o_ptr[o] = b[o];
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(is[0])) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(is[1])) continue;
                    const T* i_ptr = in + (static_cast<std::size_t>(iy) * is[1] + static_cast<std::size_t>(ix)) * C;
                    for (std::size_t o = 0; o < O; ++o) {
                        const T* w_ptr = w + ((o * k + ky) * k + kx) * C;
                        T acc = 0;
                        for (std::size_t c = 0; c < C; ++c) acc += i_ptr[c] * w_ptr[c];
                        o_ptr[o] += acc;
                    }
                }
            }
        }
    }
}

// Accumulates input gradients over output positions in `r`. Input positions
// outside `need` are skipped when gp is null.
template <typename T>
void conv_backward(const T* in, const Shape3& is, const LayerSpec& spec, const LayerParams<T>& p, const T* gout,
                   const Shape3& os, T* gin, LayerParams<T>* gp, const Region& r, const Region& need) {
    const std::size_t k = spec.kernel, pad = spec.padding, C = is[2], O = os[2];
    const T* w = p.weight.data().data();
    T* gw = gp ? gp->weight.data().data() : nullptr;
    T* gb = gp ? gp->bias.data().data() : nullptr;
    for (std::size_t oy = r.y0; oy < r.y1; ++oy) {
        for (std::size_t ox = r.x0; ox < r.x1; ++ox) {
            const T* g = gout + (oy * os[1] + ox) * O;
            if (gb)
                for (std::size_t o = 0; o < O; ++o) gb[o] += g[o];
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(is[0])) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
                    if (ix < 0 || ix >= static_cast<long>(is[1])) continue;
                    const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
                    const bool want_gin = gp || need.contains(uy, ux);
                    if (!want_gin) continue;
                    const std::size_t off = (uy * is[1] + ux) * C;
                    const T* i_ptr = in + off;
                    T* gi_ptr = gin + off;
                    for (std::size_t o = 0; o < O; ++o) {
                        const T go = g[o];
                        if (go == T{0}) continue;
                        const std::size_t w_off = ((o * k + ky) * k + kx) * C;
                        const T* w_ptr = w + w_off;
                        for (std::size_t c = 0; c < C; ++c) gi_ptr[c] += go * w_ptr[c];
                        if (gw) {
                            T* gw_ptr = gw + w_off;
                            for (std::size_t c = 0; c < C; ++c) gw_ptr[c] += go * i_ptr[c];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
BasicNetwork<T>::BasicNetwork(Shape3 input_shape, std::vector<LayerSpec> layers, std::size_t num_classes)
    : input_shape_(input_shape), layers_(std::move(layers)), num_classes_(num_classes) {
    if (input_shape_[0] == 0 || input_shape_[1] == 0 || input_shape_[2] == 0)
        throw std::invalid_argument("network: input shape " + shape_string(input_shape_) + " has a zero dimension");
    if (num_classes_ == 0) throw std::invalid_argument("network: num_classes must be positive");
    if (layers_.empty()) throw std::invalid_argument("network: no layers");
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) shapes_.push_back(compose(layers_[i], shapes_.back(), i));
    const Shape3& out = shapes_.back();
    if (out[0] != 1 || out[1] != 1 || out[2] != num_classes_)
        throw std::invalid_argument("network: final output " + shape_string(out) + " does not match " +
                                    std::to_string(num_classes_) + " classes");

    params_.resize(layers_.size());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& spec = layers_[i];
        const Shape3& in = shapes_[i];
        if (spec.kind == LayerKind::conv2d) {
            params_[i].weight = BasicTensor<T>({spec.out_channels, spec.kernel, spec.kernel, in[2]});
            params_[i].bias = BasicTensor<T>({spec.out_channels});
        } else if (spec.kind == LayerKind::dense) {
            params_[i].weight = BasicTensor<T>({spec.out_features, in[2]});
            params_[i].bias = BasicTensor<T>({spec.out_features});
        }
    }
}

template <typename T>
BasicNetwork<T> BasicNetwork<T>::victim(std::size_t num_classes, std::size_t image_size) {
    return BasicNetwork({image_size, image_size, 3},
                        {LayerSpec::conv2d(3, 8, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2),
                         LayerSpec::conv2d(3, 16, 1), LayerSpec::relu(),
                         LayerSpec::maxpool2d(static_cast<std::uint32_t>(image_size / 2)),
                         LayerSpec::flatten(), LayerSpec::dense(static_cast<std::uint32_t>(num_classes))},
                        num_classes);
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.weight.size() + p.bias.size();
    return n;
}

template <typename T>
void BasicNetwork<T>::init_glorot(std::uint64_t seed) {
    Rng rng(seed, "init");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (params_[i].empty()) continue;
        const LayerSpec& spec = layers_[i];
        double fan_in, fan_out;
        if (spec.kind == LayerKind::conv2d) {
            const double area = static_cast<double>(spec.kernel) * spec.kernel;
            fan_in = area * static_cast<double>(shapes_[i][2]);
            fan_out = area * spec.out_channels;
        } else {
            fan_in = static_cast<double>(shapes_[i][2]);
            fan_out = spec.out_features;
        }
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& v : params_[i].weight.data()) v = static_cast<T>(rng.uniform(-limit, limit));
        for (T& v : params_[i].bias.data()) v = T{0};
    }
}

template <typename T>
void BasicNetwork<T>::check_input(const BasicTensor<T>& input) const {
    const Shape expected{input_shape_[0], input_shape_[1], input_shape_[2]};
    if (input.shape() != expected)
        throw std::invalid_argument("network: input shape " + shape_string(input.shape()) +
                                    " does not match network input " + shape_string(expected));
}

template <typename T>
std::vector<Region> BasicNetwork<T>::affected_regions(Region changed) const {
    std::vector<Region> regions{changed};
    for (std::size_t i = 0; i < layers_.size(); ++i)
        regions.push_back(forward_region(layers_[i], regions.back(), shapes_[i + 1]));
    return regions;
}

// Computes activations[i + 1] from activations[i]; with out_region set, only
// that part of the (already populated) output is overwritten.
template <typename T>
void BasicNetwork<T>::run_layer(std::size_t i, ForwardTrace<T>& tr, const Region* out_region) const {
    const LayerSpec& spec = layers_[i];
    const Shape3& is = shapes_[i];
    const Shape3& os = shapes_[i + 1];
    const std::vector<T>& in = tr.activations[i];
    std::vector<T>& out = tr.activations[i + 1];
    const Region r = out_region ? *out_region : full_region(os);
    switch (spec.kind) {
        case LayerKind::conv2d:
            conv_forward(in.data(), is, spec, params_[i], out.data(), os, r);
            break;
        case LayerKind::relu:
            for (std::size_t y = r.y0; y < r.y1; ++y)
                for (std::size_t j = (y * os[1] + r.x0) * os[2]; j < (y * os[1] + r.x1) * os[2]; ++j)
                    out[j] = in[j] > T{0} ? in[j] : T{0};
            break;
        case LayerKind::maxpool2d: {
            auto& idx = tr.pool_argmax[i];
            idx.resize(out.size());
            const std::size_t win = spec.window, C = is[2];
            for (std::size_t oy = r.y0; oy < r.y1; ++oy)
                for (std::size_t ox = r.x0; ox < r.x1; ++ox)
                    for (std::size_t c = 0; c < C; ++c) {
                        std::size_t best = ((oy * win) * is[1] + ox * win) * C + c;
                        for (std::size_t dy = 0; dy < win; ++dy)
                            for (std::size_t dx = 0; dx < win; ++dx) {
                                const std::size_t j = ((oy * win + dy) * is[1] + ox * win + dx) * C + c;
                                if (in[j] > in[best]) best = j;
                            }
                        const std::size_t o = (oy * os[1] + ox) * C + c;
                        out[o] = in[best];
                        idx[o] = static_cast<std::uint32_t>(best);
                    }
            break;
        }
        case LayerKind::flatten:
            std::copy(in.begin(), in.end(), out.begin());
            break;
        case LayerKind::dense: {
            const std::size_t n_in = is[2];
            const T* w = params_[i].weight.data().data();
            const T* b = params_[i].bias.data().data();
            for (std::size_t o = 0; o < os[2]; ++o) {
                T acc = 0;
                const T* w_row = w + o * n_in;
                for (std::size_t j = 0; j < n_in; ++j) acc += w_row[j] * in[j];
                out[o] = b[o] + acc;
            }
            break;
        }
    }
}

template <typename T>
ForwardTrace<T> BasicNetwork<T>::trace(const BasicTensor<T>& input) const {
    check_input(input);
    ForwardTrace<T> tr;
    tr.activations.reserve(layers_.size() + 1);
    tr.pool_argmax.resize(layers_.size());
    tr.activations.push_back(input.storage());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Shape3& os = shapes_[i + 1];
        tr.activations.emplace_back(os[0] * os[1] * os[2]);
        run_layer(i, tr, nullptr);
    }
    return tr;
}

template <typename T>
ForwardTrace<T> BasicNetwork<T>::trace(const BasicTensor<T>& input, const ForwardTrace<T>& base,
                                       Region changed) const {
    check_input(input);
    if (base.activations.size() != layers_.size() + 1) throw std::invalid_argument("network: incomplete base trace");
    if (changed.y1 > input_shape_[0] || changed.x1 > input_shape_[1] || changed.y0 >= changed.y1 ||
        changed.x0 >= changed.x1)
        throw std::invalid_argument("network: changed region outside input");
    const std::vector<Region> regions = affected_regions(changed);
    ForwardTrace<T> tr = base;
    tr.activations[0] = input.storage();
    for (std::size_t i = 0; i < layers_.size(); ++i) run_layer(i, tr, &regions[i + 1]);
    return tr;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward(const BasicTensor<T>& input) const {
    ForwardTrace<T> tr = trace(input);
    return BasicTensor<T>({num_classes_}, std::move(tr.activations.back()));
}

namespace {

template <typename T>
void check_backward_args(std::size_t num_classes, std::size_t num_layers, const ForwardTrace<T>& tr,
                         std::span<const T> grad_logits) {
    if (grad_logits.size() != num_classes)
        throw std::invalid_argument("network: gradient has " + std::to_string(grad_logits.size()) +
                                    " entries, expected " + std::to_string(num_classes));
    if (tr.activations.size() != num_layers + 1) throw std::invalid_argument("network: incomplete trace");
}

}  // namespace

template <typename T>
BasicTensor<T> BasicNetwork<T>::backward(const ForwardTrace<T>& tr, std::span<const T> grad_logits,
                                         std::vector<LayerParams<T>>* param_grads) const {
    check_backward_args(num_classes_, layers_.size(), tr, grad_logits);
    std::vector<T> gout(grad_logits.begin(), grad_logits.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const LayerSpec& spec = layers_[li];
        const Shape3& is = shapes_[li];
        const Shape3& os = shapes_[li + 1];
        const std::vector<T>& in = tr.activations[li];
        std::vector<T> gin(in.size(), T{0});
        LayerParams<T>* gp = param_grads ? &(*param_grads)[li] : nullptr;
        switch (spec.kind) {
            case LayerKind::conv2d:
                conv_backward(in.data(), is, spec, params_[li], gout.data(), os, gin.data(), gp, full_region(os),
                              full_region(is));
                break;
            case LayerKind::relu:
                for (std::size_t j = 0; j < in.size(); ++j) gin[j] = in[j] > T{0} ? gout[j] : T{0};
                break;
            case LayerKind::maxpool2d: {
                const auto& idx = tr.pool_argmax[li];
                for (std::size_t o = 0; o < gout.size(); ++o) gin[idx[o]] += gout[o];
                break;
            }
            case LayerKind::flatten:
                gin = gout;
                break;
            case LayerKind::dense: {
                const std::size_t n_in = is[2];
                const T* w = params_[li].weight.data().data();
                T* gw = gp ? gp->weight.data().data() : nullptr;
                for (std::size_t o = 0; o < os[2]; ++o) {
                    const T go = gout[o];
                    const T* w_row = w + o * n_in;
                    for (std::size_t j = 0; j < n_in; ++j) gin[j] += go * w_row[j];
                    if (gp) {
                        T* gw_row = gw + o * n_in;
                        for (std::size_t j = 0; j < n_in; ++j) gw_row[j] += go * in[j];
                        gp->bias[o] += go;
                    }
                }
                break;
            }
        }
        gout = std::move(gin);
    }
    return BasicTensor<T>({input_shape_[0], input_shape_[1], input_shape_[2]}, std::move(gout));
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::backward(const ForwardTrace<T>& tr, std::span<const T> grad_logits,
                                         Region region) const {
    check_backward_args(num_classes_, layers_.size(), tr, grad_logits);
    if (region.y1 > input_shape_[0] || region.x1 > input_shape_[1] || region.y0 >= region.y1 ||
        region.x0 >= region.x1)
        throw std::invalid_argument("network: gradient region outside input");
    // need[i]: where layer i's input gradient must be exact.
    const std::vector<Region> need = affected_regions(region);
    std::vector<T> gout(grad_logits.begin(), grad_logits.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const LayerSpec& spec = layers_[li];
        const Shape3& is = shapes_[li];
        const Shape3& os = shapes_[li + 1];
        const std::vector<T>& in = tr.activations[li];
        const Region& r_in = need[li];
        const Region& r_out = need[li + 1];
        std::vector<T> gin(in.size(), T{0});
        switch (spec.kind) {
            case LayerKind::conv2d:
                conv_backward(in.data(), is, spec, params_[li], gout.data(), os, gin.data(),
                              static_cast<LayerParams<T>*>(nullptr), r_out, r_in);
                break;
            case LayerKind::relu:
                for (std::size_t y = r_in.y0; y < r_in.y1; ++y)
                    for (std::size_t j = (y * is[1] + r_in.x0) * is[2]; j < (y * is[1] + r_in.x1) * is[2]; ++j)
                        gin[j] = in[j] > T{0} ? gout[j] : T{0};
                break;
            case LayerKind::maxpool2d: {
                const auto& idx = tr.pool_argmax[li];
                const std::size_t C = os[2];
                for (std::size_t oy = r_out.y0; oy < r_out.y1; ++oy)
                    for (std::size_t o = (oy * os[1] + r_out.x0) * C; o < (oy * os[1] + r_out.x1) * C; ++o)
                        gin[idx[o]] += gout[o];
                break;
            }
            case LayerKind::flatten:
                gin = gout;
                break;
            case LayerKind::dense: {
                const std::size_t n_in = is[2];
                const T* w = params_[li].weight.data().data();
                for (std::size_t o = 0; o < os[2]; ++o) {
                    const T go = gout[o];
                    const T* w_row = w + o * n_in;
                    for (std::size_t j = 0; j < n_in; ++j) gin[j] += go * w_row[j];
                }
                break;
            }
        }
        gout = std::move(gin);
    }
    const std::size_t C = input_shape_[2];
    for (std::size_t y = 0; y < input_shape_[0]; ++y)
        for (std::size_t x = 0; x < input_shape_[1]; ++x)
            if (!region.contains(y, x))
                for (std::size_t c = 0; c < C; ++c) gout[(y * input_shape_[1] + x) * C + c] = T{0};
    return BasicTensor<T>({input_shape_[0], input_shape_[1], input_shape_[2]}, std::move(gout));
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::input_gradient(const BasicTensor<T>& input, std::span<const T> class_weights) const {
    if (class_weights.size() != num_classes_)
        throw std::invalid_argument("network: class_weights has " + std::to_string(class_weights.size()) +
                                    " entries, expected " + std::to_string(num_classes_));
    return backward(trace(input), class_weights);
}

template <typename T>
std::vector<LayerParams<T>> BasicNetwork<T>::zero_grads() const {
    std::vector<LayerParams<T>> g(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].empty()) continue;
        g[i].weight = BasicTensor<T>(params_[i].weight.shape());
        g[i].bias = BasicTensor<T>(params_[i].bias.shape());
    }
    return g;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty input");
    const T shift = *std::max_element(logits.begin(), logits.end());
    std::vector<T> p(logits.size());
    double total = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(static_cast<double>(logits[i]) - static_cast<double>(shift));
        p[i] = static_cast<T>(e);
        total += e;
    }
    for (T& v : p) v = static_cast<T>(static_cast<double>(v) / total);
    return p;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
    if (values.empty()) throw std::invalid_argument("argmax: empty input");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

template <typename T>
Prediction prediction_from_logits(std::span<const T> logits) {
    const std::vector<T> p = softmax(logits);
    const std::size_t label = argmax(std::span<const T>(p));
    return {label, static_cast<double>(p[label])};
}

template <typename T>
Prediction predict(const BasicNetwork<T>& net, const BasicTensor<T>& input) {
    const BasicTensor<T> logits = net.forward(input);
    return prediction_from_logits(logits.data());
}

template std::vector<float> softmax(std::span<const float>);
template std::vector<double> softmax(std::span<const double>);
template std::size_t argmax(std::span<const float>);
template std::size_t argmax(std::span<const double>);
template Prediction prediction_from_logits(std::span<const float>);
template Prediction prediction_from_logits(std::span<const double>);
template Prediction predict(const BasicNetwork<float>&, const BasicTensor<float>&);
template Prediction predict(const BasicNetwork<double>&, const BasicTensor<double>&);

}  // namespace lvn
