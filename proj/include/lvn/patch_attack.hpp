#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lvn/network.hpp"

namespace lvn {

/// network: values unrestricted. image: values clipped to [0, 1] after every step.
enum class NoiseDomain : std::uint8_t { network = 0, image = 1 };

std::string to_string(NoiseDomain d);
NoiseDomain parse_domain(std::string_view s);

/// Top-left corner of the patch window.
struct PatchLocation {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const PatchLocation&, const PatchLocation&) = default;
};

/// Square noise block of shape [size, size, channels].
struct Patch {
    Tensor values;
    NoiseDomain domain = NoiseDomain::network;

    std::size_t size() const { return values.shape()[0]; }
    std::size_t channels() const { return values.shape()[2]; }

    /// Throws if the shape is not square or the values break the domain bounds.
    void validate() const;

    friend bool operator==(const Patch&, const Patch&) = default;
};

enum class PatchInit : std::uint8_t { zeros, uniform };

Patch init_patch(NoiseDomain domain, std::size_t size, std::size_t channels = 3, PatchInit init = PatchInit::zeros,
                 std::uint64_t seed = 0);

void check_location(std::size_t height, std::size_t width, std::size_t size, PatchLocation loc);

/// The four corners, in order top-left, top-right, bottom-left, bottom-right.
std::vector<PatchLocation> corner_locations(std::size_t height, std::size_t width, std::size_t size);

inline PatchLocation bottom_right(std::size_t height, std::size_t width, std::size_t size) {
    return {height - size, width - size};
}

/// Replaces the window at `loc` with the patch values. No clipping.
Tensor apply_patch(const Tensor& image, const Patch& patch, PatchLocation loc);
inline Tensor apply_patch(const Image& image, const Patch& patch, PatchLocation loc) {
    return apply_patch(image.tensor(), patch, loc);
}

/// logit[target] - logit[reference].
double logit_margin(std::span<const float> logits, std::size_t target, std::size_t reference);

/// Pre-softmax margin of target over reference on the composed image.
double objective(const Network& net, const Tensor& noised, std::size_t target, std::size_t reference);

/// The current argmax, or the runner-up when the argmax is the target.
/// Ties resolve to the lowest index.
std::size_t select_reference(std::span<const float> probs, std::size_t target);

/// Nested success tiers, weakest first.
enum class Outcome : std::uint8_t { failed = 0, misclassified = 1, argmax = 2, confident = 3 };

std::string to_string(Outcome o);

Outcome classify_outcome(std::span<const float> probs, std::size_t source, std::size_t target, double threshold);

/// argmax: reference recomputed every iteration. source: pinned to the clean prediction.
enum class ReferenceMode : std::uint8_t { argmax, source };

struct AttackConfig {
    std::size_t patch_size = 5;
    double step_size = 3.0;
    double target_confidence = 0.9;
    std::size_t max_iterations = 10000;
    std::uint64_t seed = 42;
    ReferenceMode reference = ReferenceMode::argmax;
    PatchInit init = PatchInit::zeros;
    /// Called after every update with the iteration number (1-based) and the patch.
    std::function<void(std::size_t, const Patch&)> on_step;

    /// Defaults tuned per domain: step 3.0 for network, 0.01 for image.
    static AttackConfig for_domain(NoiseDomain domain);
    void validate() const;
};

struct AttackResult {
    Patch patch;
    Tensor noised;
    PatchLocation location;
    std::size_t source = 0;
    std::size_t target = 0;
    std::size_t iterations = 0;  // gradient steps taken
    std::size_t label = 0;       // prediction on `noised`
    double target_probability = 0;
    double source_probability = 0;
    Outcome outcome = Outcome::failed;
};

/// One ascent step on the margin objective, restricted to the patch window,
/// followed by clipping in the image domain.
Patch ascend_patch(const Network& net, const Tensor& image, const Patch& patch, PatchLocation loc, std::size_t target,
                   std::size_t reference, double step_size);

/// In-place variant of ascend_patch reusing a forward trace of the composed image.
void ascend_patch(const Network& net, const ForwardTrace<float>& trace, Patch& patch, PatchLocation loc,
                  std::size_t target, std::size_t reference, double step_size);

/// Localized noising of a single image at a fixed location. Runs until the
/// target reaches cfg.target_confidence or the iteration cap. The returned
/// patch is from the last iterate that reached the best tier seen.
AttackResult attack_single(const Network& net, const Image& image, std::size_t target, PatchLocation loc,
                           NoiseDomain domain, const AttackConfig& cfg);

// Patch file: "LVPN", u16 version, u32 size, u32 channels, u8 domain, then
// little-endian f32 values row-major.
inline constexpr std::uint16_t kPatchVersion = 1;

std::string encode_patch(const Patch& patch);
Patch decode_patch(std::string_view bytes);
void save_patch(const std::filesystem::path& path, const Patch& patch);
Patch load_patch(const std::filesystem::path& path);

}  // namespace lvn
