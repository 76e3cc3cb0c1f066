#include "lvn/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lvn/parallel.hpp"

namespace lvn {

std::string to_string(FixMode m) {
    return m == FixMode::towards_source ? "towards_source" : "away_from_target";
}

FixMode parse_fix_mode(std::string_view s) {
    if (s == "towards_source") return FixMode::towards_source;
    if (s == "away_from_target") return FixMode::away_from_target;
    throw std::invalid_argument("unknown fix mode '" + std::string(s) + "' (expected towards_source|away_from_target)");
}

void FixConfig::validate() const {
    if (!(step_size >= 0.0) || !std::isfinite(step_size))
        throw std::invalid_argument("fix: step_size must be finite and non-negative");
}

double FixMap::max_value() const {
    return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

FixMap gradient_fix(const Network& net, const Tensor& noised, FixMode mode, std::size_t source, std::size_t target,
                    const FixConfig& cfg) {
    cfg.validate();
    const std::size_t n = net.num_classes();
    if (source >= n || target >= n) throw std::out_of_range("fix: class index out of range");
    if (source == target) throw std::invalid_argument("fix: source and target must differ");
    Tensor x = noised;
    ForwardTrace<float> tr = net.trace(x);
    std::size_t label = prediction_from_logits(tr.logits()).label;
    if (label != target)
        throw std::invalid_argument("fix: input is classified as " + std::to_string(label) + ", not the target " +
                                    std::to_string(target));

    FixMap map;
    map.height = x.shape()[0];
    map.width = x.shape()[1];
    map.values.assign(map.height * map.width, 0.0);
    map.mode = mode;
    map.label = label;
    if (cfg.step_size == 0.0) return map;

    std::vector<float> weights(n, 0.0f);
    if (mode == FixMode::towards_source)
        weights[source] = 1.0f;
    else
        weights[target] = -1.0f;
    const auto done = [&](std::size_t l) { return mode == FixMode::towards_source ? l == source : l != target; };

    const std::size_t c = x.shape()[2];
    const float eps = static_cast<float>(cfg.step_size);
    while (!done(label) && map.iterations < cfg.max_iterations) {
        const Tensor grad = net.backward(tr, std::span<const float>(weights));
        auto xs = x.data();
        const auto gs = grad.data();
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (!std::isfinite(gs[i])) throw std::runtime_error("fix: non-finite gradient");
            const float before = xs[i];
            if (cfg.clip) {
                xs[i] = std::clamp(before + eps * gs[i], 0.0f, 1.0f);
                map.values[i / c] += std::abs(static_cast<double>(xs[i]) - static_cast<double>(before));
            } else {
                xs[i] = before + eps * gs[i];
                map.values[i / c] += std::abs(cfg.step_size * static_cast<double>(gs[i]));
            }
        }
        ++map.iterations;
        tr = net.trace(x);
        label = prediction_from_logits(tr.logits()).label;
    }
    map.label = label;
    map.fixed = done(label);
    return map;
}

WindowScores window_scores(const FixMap& map, std::size_t s) {
    if (s == 0 || s > map.height || s > map.width)
        throw std::invalid_argument("window_scores: window " + std::to_string(s) + " does not fit " +
                                    std::to_string(map.height) + "x" + std::to_string(map.width));
    WindowScores w;
    w.size = s;
    w.rows = map.height - s + 1;
    w.cols = map.width - s + 1;
    w.max.resize(w.rows * w.cols);
    w.sum.resize(w.rows * w.cols);
    for (std::size_t r = 0; r < w.rows; ++r)
        for (std::size_t c = 0; c < w.cols; ++c) {
            double mx = map.at(r, c), sum = 0.0;
            for (std::size_t y = r; y < r + s; ++y)
                for (std::size_t x = c; x < c + s; ++x) {
                    mx = std::max(mx, map.at(y, x));
                    sum += map.at(y, x);
                }
            w.max[r * w.cols + c] = mx;
            w.sum[r * w.cols + c] = sum;
        }
    return w;
}

bool squares_overlap(PatchLocation a, PatchLocation b, std::size_t s) {
    return a.row < b.row + s && b.row < a.row + s && a.col < b.col + s && b.col < a.col + s;
}

namespace {

std::size_t first_max(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

WindowOverlap top_window_overlap(const FixMap& map, PatchLocation loc, std::size_t s) {
    const WindowScores w = window_scores(map, s);
    const std::size_t im = first_max(w.max), is = first_max(w.sum);
    WindowOverlap o;
    o.top_max = {im / w.cols, im % w.cols};
    o.top_sum = {is / w.cols, is % w.cols};
    o.overlap_max = squares_overlap(o.top_max, loc, s);
    o.overlap_sum = squares_overlap(o.top_sum, loc, s);
    return o;
}

void tally(SaliencyStats& stats) {
    stats.cells.clear();
    stats.away_later = stats.paired = 0;
    for (NoiseDomain d : {NoiseDomain::network, NoiseDomain::image}) {
        for (FixMode m : {FixMode::towards_source, FixMode::away_from_target}) {
            SaliencyCell cell{d, m};
            bool present = false;
            for (const auto& r : stats.records) {
                if (r.domain != d || r.mode != m) continue;
                present = true;
                if (r.excluded) {
                    ++cell.excluded;
                    continue;
                }
                ++cell.evaluated;
                cell.unfixed += !r.fixed;
                cell.n_overlap_max += r.overlap_max;
                cell.n_overlap_sum += r.overlap_sum;
            }
            if (!present) continue;
            if (cell.evaluated) {
                cell.frac_overlap_max = static_cast<double>(cell.n_overlap_max) / static_cast<double>(cell.evaluated);
                cell.frac_overlap_sum = static_cast<double>(cell.n_overlap_sum) / static_cast<double>(cell.evaluated);
            }
            stats.cells.push_back(cell);
        }
    }
    for (const auto& a : stats.records) {
        if (a.excluded || a.mode != FixMode::towards_source) continue;
        for (const auto& b : stats.records) {
            if (b.mode != FixMode::away_from_target || b.patch_index != a.patch_index ||
                b.image_index != a.image_index)
                continue;
            ++stats.paired;
            stats.away_later += b.iterations > a.iterations;
        }
    }
}

SaliencyStats saliency_stats(const Network& net, const std::vector<TargetPatch>& patches, const HeldoutSet& images,
                             PatchLocation loc, const SaliencyConfig& cfg) {
    cfg.fix.validate();
    images.validate();
    if (patches.empty() || images.empty()) throw std::invalid_argument("saliency: empty patch or image set");
    std::size_t s = patches.front().patch.size();
    for (const auto& tp : patches) {
        tp.patch.validate();
        if (tp.patch.size() != s) throw std::invalid_argument("saliency: patches must share one size");
        if (tp.target >= net.num_classes()) throw std::out_of_range("saliency: target out of range");
    }
    for (const Image& img : images.images) check_location(img.height(), img.width(), s, loc);

    const std::size_t n_img = images.size();
    SaliencyStats stats;
    stats.records.resize(patches.size() * n_img * 2);
    parallel_for(
        patches.size() * n_img,
        [&](std::size_t pair) {
            const std::size_t pi = pair / n_img, ii = pair % n_img;
            const TargetPatch& tp = patches[pi];
            const Image& img = images.images[ii];
            const Tensor noised = apply_patch(img, tp.patch, loc);
            const std::size_t source = predict(net, img).label;
            const bool misled = source != tp.target && predict(net, noised).label == tp.target;
            for (FixMode m : {FixMode::towards_source, FixMode::away_from_target}) {
                SaliencyRecord r;
                r.patch_index = pi;
                r.image_index = ii;
                r.domain = tp.patch.domain;
                r.mode = m;
                r.source = source;
                r.target = tp.target;
                r.excluded = !misled;
                if (misled) {
                    const FixMap map = gradient_fix(net, noised, m, source, tp.target, cfg.fix);
                    const WindowOverlap o = top_window_overlap(map, loc, s);
                    r.fixed = map.fixed;
                    r.iterations = map.iterations;
                    r.overlap_max = o.overlap_max;
                    r.overlap_sum = o.overlap_sum;
                }
                stats.records[pair * 2 + static_cast<std::size_t>(m)] = r;
            }
        },
        cfg.threads);
    tally(stats);
    bool any = false;
    for (const auto& c : stats.cells) any = any || c.evaluated > 0;
    if (!any) throw std::invalid_argument("saliency: no patch misleads any image, nothing to measure");
    return stats;
}

std::string format_saliency_table(const SaliencyStats& stats) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-8s| %-17s| %7s | %7s | %5s | %5s || %7s | %7s\n", "Domain", "Fix method", "MAX",
                  "SUM", "n", "excl", "ref MAX", "ref SUM");
    out += line;
    out += std::string(84, '-') + "\n";
    for (const auto& c : stats.cells) {
        double ref_max = 0, ref_sum = 0;
        for (const auto& r : kReferenceRows)
            if (r.domain == c.domain && r.mode == c.mode) ref_max = r.max_percent, ref_sum = r.sum_percent;
        const std::string domain = c.domain == NoiseDomain::network ? "Network" : "Image";
        const std::string mode = c.mode == FixMode::towards_source ? "Towards Source" : "Away from Target";
        std::snprintf(line, sizeof line, "%-8s| %-17s| %6.2f%% | %6.2f%% | %5zu | %5zu || %6.2f%% | %6.2f%%\n",
                      domain.c_str(), mode.c_str(), 100.0 * c.frac_overlap_max, 100.0 * c.frac_overlap_sum,
                      c.evaluated, c.excluded, ref_max, ref_sum);
        out += line;
    }
    return out;
}

}  // namespace lvn
