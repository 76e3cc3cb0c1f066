#include "lvn/patch_attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lvn/io.hpp"
#include "lvn/rng.hpp"

namespace lvn {

std::string to_string(NoiseDomain d) { return d == NoiseDomain::network ? "network" : "image"; }

NoiseDomain parse_domain(std::string_view s) {
    if (s == "network") return NoiseDomain::network;
    if (s == "image") return NoiseDomain::image;
    throw std::invalid_argument("unknown noise domain '" + std::string(s) + "' (expected network or image)");
}

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::failed: return "failed";
        case Outcome::misclassified: return "misclassified";
        case Outcome::argmax: return "argmax";
        case Outcome::confident: return "confident";
    }
    return "unknown";
}

void Patch::validate() const {
    if (values.rank() != 3 || values.shape()[0] != values.shape()[1])
        throw std::invalid_argument("patch: expected shape [s, s, c], got " + shape_string(values.shape()));
    if (!values.all_finite()) throw std::invalid_argument("patch: non-finite value");
    if (domain == NoiseDomain::image)
        for (float v : values.data())
            if (v < 0.0f || v > 1.0f) throw std::invalid_argument("patch: image-domain value outside [0, 1]");
}

Patch init_patch(NoiseDomain domain, std::size_t size, std::size_t channels, PatchInit init, std::uint64_t seed) {
    if (size == 0 || channels == 0) throw std::invalid_argument("patch: size and channels must be positive");
    Patch p{Tensor({size, size, channels}), domain};
    if (init == PatchInit::uniform) {
        Rng rng(seed, "patch-init");
        for (float& v : p.values.data()) v = static_cast<float>(rng.uniform());
    }
    return p;
}

void check_location(std::size_t height, std::size_t width, std::size_t size, PatchLocation loc) {
    if (size > height || size > width || loc.row > height - size || loc.col > width - size)
        throw std::out_of_range("patch location (" + std::to_string(loc.row) + ", " + std::to_string(loc.col) +
                                ") with size " + std::to_string(size) + " does not fit a " + std::to_string(height) +
                                "x" + std::to_string(width) + " image");
}

std::vector<PatchLocation> corner_locations(std::size_t height, std::size_t width, std::size_t size) {
    check_location(height, width, size, {0, 0});
    return {{0, 0}, {0, width - size}, {height - size, 0}, {height - size, width - size}};
}

Tensor apply_patch(const Tensor& image, const Patch& patch, PatchLocation loc) {
    if (image.rank() != 3 || image.shape()[2] != patch.channels())
        throw std::invalid_argument("apply_patch: image shape " + shape_string(image.shape()) +
                                    " incompatible with patch " + shape_string(patch.values.shape()));
    const std::size_t s = patch.size();
    check_location(image.shape()[0], image.shape()[1], s, loc);
    Tensor out = image;
    const std::size_t row_len = s * patch.channels();
    for (std::size_t y = 0; y < s; ++y) {
        const float* src = &patch.values.at(y, 0, 0);
        std::copy(src, src + row_len, &out.at(loc.row + y, loc.col, 0));
    }
    return out;
}

double logit_margin(std::span<const float> logits, std::size_t target, std::size_t reference) {
    if (target >= logits.size() || reference >= logits.size())
        throw std::out_of_range("class index out of range for " + std::to_string(logits.size()) + " classes");
    return static_cast<double>(logits[target]) - static_cast<double>(logits[reference]);
}

double objective(const Network& net, const Tensor& noised, std::size_t target, std::size_t reference) {
    if (target == reference) throw std::invalid_argument("objective: target equals reference");
    const Tensor logits = net.forward(noised);
    return logit_margin(logits.data(), target, reference);
}

std::size_t select_reference(std::span<const float> probs, std::size_t target) {
    if (probs.size() < 2) throw std::invalid_argument("select_reference: needs at least two classes");
    if (target >= probs.size()) throw std::out_of_range("select_reference: target out of range");
    std::size_t best = target == 0 ? 1 : 0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (i != target && probs[i] > probs[best]) best = i;
    return best;
}

Outcome classify_outcome(std::span<const float> probs, std::size_t source, std::size_t target, double threshold) {
    if (static_cast<double>(probs[target]) >= threshold) return Outcome::confident;
    const std::size_t top = argmax(probs);
    if (top == target) return Outcome::argmax;
    if (top != source) return Outcome::misclassified;
    return Outcome::failed;
}

AttackConfig AttackConfig::for_domain(NoiseDomain domain) {
    AttackConfig cfg;
    cfg.step_size = domain == NoiseDomain::network ? 3.0 : 0.01;
    return cfg;
}

void AttackConfig::validate() const {
    if (!(step_size >= 0.0) || !std::isfinite(step_size))
        throw std::invalid_argument("attack: step_size must be finite and non-negative");
    if (patch_size == 0) throw std::invalid_argument("attack: patch_size must be positive");
    if (!(target_confidence > 0.0 && target_confidence <= 1.0))
        throw std::invalid_argument("attack: target_confidence must be in (0, 1]");
}

namespace {

// Moves the patch along the gradient window of d(margin)/d(input).
void step_patch(Patch& patch, const Tensor& grad, PatchLocation loc, double step_size) {
    const std::size_t s = patch.size(), c = patch.channels();
    const float eps = static_cast<float>(step_size);
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x)
            for (std::size_t k = 0; k < c; ++k) {
                const float g = grad.at(loc.row + y, loc.col + x, k);
                if (!std::isfinite(g))
                    throw std::runtime_error("attack: non-finite gradient");
                float& v = patch.values.at(y, x, k);
                v += eps * g;
                if (patch.domain == NoiseDomain::image) v = std::clamp(v, 0.0f, 1.0f);
            }
}

std::vector<float> margin_weights(std::size_t num_classes, std::size_t target, std::size_t reference) {
    std::vector<float> w(num_classes, 0.0f);
    w[target] = 1.0f;
    w[reference] = -1.0f;
    return w;
}

}  // namespace

void ascend_patch(const Network& net, const ForwardTrace<float>& trace, Patch& patch, PatchLocation loc,
                  std::size_t target, std::size_t reference, double step_size) {
    if (target == reference) throw std::invalid_argument("ascend_patch: target equals reference");
    const Region window{loc.row, loc.row + patch.size(), loc.col, loc.col + patch.size()};
    step_patch(patch, net.backward(trace, margin_weights(net.num_classes(), target, reference), window), loc,
               step_size);
}

Patch ascend_patch(const Network& net, const Tensor& image, const Patch& patch, PatchLocation loc, std::size_t target,
                   std::size_t reference, double step_size) {
    Patch out = patch;
    ascend_patch(net, net.trace(apply_patch(image, patch, loc)), out, loc, target, reference, step_size);
    return out;
}

AttackResult attack_single(const Network& net, const Image& image, std::size_t target, PatchLocation loc,
                           NoiseDomain domain, const AttackConfig& cfg) {
    cfg.validate();
    if (target >= net.num_classes())
        throw std::out_of_range("attack: target " + std::to_string(target) + " out of range");
    const std::size_t source = predict(net, image).label;
    if (target == source)
        throw std::invalid_argument("attack: target " + std::to_string(target) + " equals the source prediction");

    check_location(image.height(), image.width(), cfg.patch_size, loc);

    Patch patch = init_patch(domain, cfg.patch_size, image.channels(), cfg.init, cfg.seed);
    const ForwardTrace<float> clean = net.trace(image.tensor());
    const Region window{loc.row, loc.row + cfg.patch_size, loc.col, loc.col + cfg.patch_size};
    AttackResult best;
    bool have_best = false;
    std::size_t iteration = 0;
    for (;;) {
        Tensor noised = apply_patch(image, patch, loc);
        const ForwardTrace<float> tr = net.trace(noised, clean, window);
        const std::vector<float> probs = softmax(tr.logits());
        const Outcome tier = classify_outcome(probs, source, target, cfg.target_confidence);
        if (!have_best || tier >= best.outcome) {
            best.patch = patch;
            best.noised = std::move(noised);
            best.label = argmax(std::span<const float>(probs));
            best.target_probability = probs[target];
            best.source_probability = probs[source];
            best.outcome = tier;
            have_best = true;
        }
        if (tier == Outcome::confident || iteration >= cfg.max_iterations || cfg.step_size == 0.0) break;

        const std::size_t reference =
            cfg.reference == ReferenceMode::source ? source : select_reference(probs, target);
        ++iteration;
        try {
            ascend_patch(net, tr, patch, loc, target, reference, cfg.step_size);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(std::string(e.what()) + " at iteration " + std::to_string(iteration));
        }
        if (cfg.on_step) cfg.on_step(iteration, patch);
    }
    best.location = loc;
    best.source = source;
    best.target = target;
    best.iterations = iteration;
    return best;
}

std::string encode_patch(const Patch& patch) {
    patch.validate();
    ByteWriter w;
    w.bytes("LVPN");
    w.u16(kPatchVersion);
    w.u32(static_cast<std::uint32_t>(patch.size()));
    w.u32(static_cast<std::uint32_t>(patch.channels()));
    w.u8(static_cast<std::uint8_t>(patch.domain));
    for (float v : patch.values.data()) w.f32(v);
    return w.take();
}

Patch decode_patch(std::string_view bytes) {
    ByteReader r(bytes, "patch");
    if (r.bytes(4) != "LVPN") r.fail("bad magic (expected LVPN)");
    const std::uint16_t version = r.u16();
    if (version != kPatchVersion) r.fail("unsupported version " + std::to_string(version));
    const std::uint32_t s = r.u32();
    const std::uint32_t c = r.u32();
    if (s == 0 || c == 0 || s > 4096 || c > 64) r.fail("implausible shape");
    const std::uint8_t tag = r.u8();
    if (tag > 1) r.fail("unknown domain tag " + std::to_string(tag));
    Patch p{Tensor({s, s, c}), static_cast<NoiseDomain>(tag)};
    for (float& v : p.values.data()) v = r.f32();
    r.expect_end();
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return p;
}

void save_patch(const std::filesystem::path& path, const Patch& patch) { write_file_atomic(path, encode_patch(patch)); }

Patch load_patch(const std::filesystem::path& path) { return decode_patch(read_file(path)); }

}  // namespace lvn
