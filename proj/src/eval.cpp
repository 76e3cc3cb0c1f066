#include "lvn/eval.hpp"

#include <stdexcept>

#include "lvn/parallel.hpp"

namespace lvn {

std::vector<double> HeatmapReport::source_map() const {
    std::vector<double> out;
    out.reserve(cells.size());
    for (const auto& c : cells) out.push_back(c.source_probability);
    return out;
}

std::vector<double> HeatmapReport::target_map() const {
    std::vector<double> out;
    out.reserve(cells.size());
    for (const auto& c : cells) out.push_back(c.target_probability);
    return out;
}

std::vector<bool> HeatmapReport::argmax_is_target() const {
    std::vector<bool> out;
    for (const auto& c : cells) out.push_back(c.argmax == target);
    return out;
}

std::vector<bool> HeatmapReport::argmax_is_source() const {
    std::vector<bool> out;
    for (const auto& c : cells) out.push_back(c.argmax == source);
    return out;
}

std::vector<bool> HeatmapReport::argmax_is_neither() const {
    std::vector<bool> out;
    for (const auto& c : cells) out.push_back(c.argmax != source && c.argmax != target);
    return out;
}

std::size_t sweep_extent(std::size_t extent, std::size_t size, std::size_t stride) {
    if (stride < 1) throw std::invalid_argument("sweep: stride must be >= 1");
    if (size > extent) throw std::invalid_argument("sweep: patch larger than image");
    return (extent - size) / stride + 1;
}

HeatmapReport location_sweep(const Network& net, const Image& image, const Patch& patch, std::size_t target,
                             std::size_t stride, std::size_t threads) {
    if (target >= net.num_classes()) throw std::out_of_range("sweep: target out of range");
    HeatmapReport r;
    r.stride = stride;
    r.patch_size = patch.size();
    r.rows = sweep_extent(image.height(), patch.size(), stride);
    r.cols = sweep_extent(image.width(), patch.size(), stride);
    r.target = target;
    const ForwardTrace<float> clean = net.trace(image.tensor());
    r.source = prediction_from_logits(clean.logits()).label;
    r.cells.resize(r.rows * r.cols);
    const std::size_t s = patch.size();
    parallel_for(
        r.cells.size(),
        [&](std::size_t i) {
            const PatchLocation loc{(i / r.cols) * stride, (i % r.cols) * stride};
            const ForwardTrace<float> tr =
                net.trace(apply_patch(image, patch, loc), clean, {loc.row, loc.row + s, loc.col, loc.col + s});
            const std::vector<float> p = softmax(tr.logits());
            r.cells[i] = {loc, p[r.source], p[target], argmax(std::span<const float>(p))};
        },
        threads);
    return r;
}

LocationRobustness location_robustness(const HeatmapReport& report, double threshold) {
    if (report.cells.empty()) throw std::invalid_argument("location_robustness: empty report");
    std::size_t confident = 0, not_source = 0;
    for (const auto& c : report.cells) {
        if (c.target_probability >= threshold) ++confident;
        if (c.argmax != report.source) ++not_source;
    }
    const double n = static_cast<double>(report.cells.size());
    return {static_cast<double>(confident) / n, static_cast<double>(not_source) / n};
}

void tally(TransferReport& report) {
    report.evaluated = report.excluded = 0;
    report.n_confident = report.n_argmax_target = report.n_not_source = 0;
    for (const auto& rec : report.records) {
        if (rec.excluded) {
            ++report.excluded;
            continue;
        }
        ++report.evaluated;
        report.n_confident += rec.confident;
        report.n_argmax_target += rec.argmax_target;
        report.n_not_source += rec.not_source;
    }
    const double n = static_cast<double>(report.evaluated);
    report.rate_confident = report.evaluated ? static_cast<double>(report.n_confident) / n : 0.0;
    report.rate_argmax_target = report.evaluated ? static_cast<double>(report.n_argmax_target) / n : 0.0;
    report.rate_not_source = report.evaluated ? static_cast<double>(report.n_not_source) / n : 0.0;
}

TransferReport transfer_eval(const Network& net, const HeldoutSet& heldout, const Patch& patch, std::size_t target,
                             std::optional<PatchLocation> loc, double threshold, std::size_t threads) {
    heldout.validate();
    if (heldout.empty()) throw std::invalid_argument("transfer_eval: empty held-out set");
    if (target >= net.num_classes()) throw std::out_of_range("transfer_eval: target out of range");
    TransferReport report;
    report.target = target;
    report.threshold = threshold;
    const Image& first = heldout.images.front();
    report.location = loc ? *loc : bottom_right(first.height(), first.width(), patch.size());
    report.records.resize(heldout.size());
    parallel_for(
        heldout.size(),
        [&](std::size_t i) {
            const Image& img = heldout.images[i];
            TransferRecord rec;
            rec.index = i;
            rec.source = predict(net, img).label;
            const Tensor logits = net.forward(apply_patch(img, patch, report.location));
            const std::vector<float> p = softmax(logits.data());
            rec.label = argmax(std::span<const float>(p));
            rec.source_probability = p[rec.source];
            rec.target_probability = p[target];
            rec.excluded = rec.source == target;
            rec.confident = rec.target_probability >= threshold;
            rec.argmax_target = rec.label == target;
            rec.not_source = rec.label != rec.source;
            report.records[i] = rec;
        },
        threads);
    tally(report);
    return report;
}

ClassMatrix class_matrix(const Network& net, const std::vector<std::vector<Image>>& images_by_class,
                         const std::vector<std::optional<Patch>>& patches_by_target, PatchLocation loc,
                         std::size_t threads) {
    const std::size_t n = net.num_classes();
    if (images_by_class.size() != n || patches_by_target.size() != n)
        throw std::invalid_argument("class_matrix: expected one image group and one patch slot per class");
    ClassMatrix m{n, std::vector<std::optional<double>>(n * n)};
    parallel_for(
        n * n,
        [&](std::size_t cell) {
            const std::size_t source = cell / n, target = cell % n;
            const auto& images = images_by_class[source];
            const auto& patch = patches_by_target[target];
            if (images.empty() || !patch) return;
            double sum = 0;
            for (const Image& img : images) {
                const Tensor logits = net.forward(apply_patch(img, *patch, loc));
                sum += static_cast<double>(softmax(logits.data())[target]);
            }
            m.cells[cell] = sum / static_cast<double>(images.size());
        },
        threads);
    return m;
}

std::vector<std::vector<Image>> group_by_prediction(const Network& net, const std::vector<Image>& images) {
    std::vector<std::vector<Image>> groups(net.num_classes());
    for (const Image& img : images) groups[predict(net, img).label].push_back(img);
    return groups;
}

}  // namespace lvn
