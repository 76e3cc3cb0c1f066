// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "lvn/eval.hpp"
#include "lvn/io.hpp"
#include "lvn/patch_attack.hpp"
#include "lvn/report.hpp"
#include "lvn/saliency.hpp"
#include "lvn/train.hpp"
#include "lvn/transfer_attack.hpp"

using namespace lvn;
namespace fs = std::filesystem;

namespace {

// Rates measured on the first verified run (seed 42). A later run may fall at
// most 5 points below these, and never below the stated floors.
constexpr double kFrozenConfident = 0.95, kFrozenArgmax = 0.95, kFrozenMisclassified = 0.95;
constexpr double kFrozenTransferArgmax = 1.00, kFrozenTransferNotSource = 1.00;
constexpr double kAllowance = 0.05;

double threshold(double floor, double frozen) { return std::max(floor, frozen - kAllowance); }

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    failures += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------

void gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0;
    double worst_kink = 0;
    std::size_t checked = 0, nonzero = 0, kinks = 0, resolved = 0;
    Rng rng(2024, "acceptance-gradient");
    for (std::uint64_t n = 0; n < 5; ++n) {
        Network64 net = Network64::victim(8, 32);
        net.init_glorot(100 + n);
        for (auto& p : net.params())
            if (!p.empty())
                for (double& b : p.bias.data()) b = rng.uniform(-0.1, 0.1);
        for (int i = 0; i < 4; ++i) {
            Tensor64 x({32, 32, 3});
            for (double& v : x.data()) v = rng.uniform();
            const std::size_t target = rng.below(8);
            const std::size_t reference = (target + 1 + rng.below(7)) % 8;
            std::vector<double> w(8, 0.0);
            w[target] = 1;
            w[reference] = -1;
            const Tensor64 g = net.input_gradient(x, w);
            const auto f = [&](const Tensor64& in) {
                const auto z = net.forward(in);
                return z[target] - z[reference];
            };
            const double h = 1e-3;
            for (int k = 0; k < 20; ++k) {
                const std::size_t j = rng.below(x.size());
                Tensor64 p = x, m = x;
                p[j] += h;
                m[j] -= h;
                const double f0 = f(x), fp = f(p), fm = f(m);
                const double fd = (fp - fm) / (2 * h);
                const auto rel = [&](double d) {
                    return std::abs(g[j] - d) / std::max({std::abs(g[j]), std::abs(d), 1e-12});
                };
                ++checked;
                nonzero += g[j] != 0.0;
                // The function is piecewise linear; unequal one-sided slopes mean a
                // ReLU or pool switch lies inside [x-h, x+h].
                const double up = (fp - f0) / h, down = (f0 - fm) / h;
                if (std::abs(up - down) <= 1e-7 * std::max({std::abs(up), std::abs(down), 1.0})) {
                    worst = std::max(worst, rel(fd));
                    continue;
                }
                ++kinks;
                worst_kink = std::max(worst_kink, rel(fd));
                resolved += std::min(rel(up), rel(down)) < 1e-4;
            }
        }
    }
    const double secs = seconds_since(t0);
    report(1, "gradient-correctness", worst < 1e-4 && resolved == kinks && secs < 10,
           fmt("max rel err %.2e over %zu coords (%zu nonzero); %zu straddle a kink (central err %.2e), %zu/%zu "
               "match a one-sided slope, %.1fs",
               worst, checked - kinks, nonzero, kinks, worst_kink, resolved, kinks, secs));
}

struct World {
    TrainSet train;
    HeldoutSet heldout;
    HeldoutSet heldout100;
    Network net = Network::victim(8, 32);
};

World victim_quality() {
    const auto t0 = std::chrono::steady_clock::now();
    const SynthConfig sc;
    World w;
    w.train = synth_dataset<Split::train>(sc);
    w.heldout = synth_dataset<Split::heldout>(sc);
    const TrainResult r = train_victim(w.train, TrainConfig{}, &w.heldout);
    w.net = r.network;
    w.heldout100 = w.heldout;
    w.heldout100.images.resize(100);
    w.heldout100.labels.resize(100);
    const double acc = r.epochs.back().heldout_accuracy;
    const double secs = seconds_since(t0);
    report(2, "victim-quality", acc >= 0.90 && secs < 60,
           fmt("held-out accuracy %.4f after %zu epochs, %.1fs", acc, r.epochs.size(), secs));
    return w;
}

struct Triple {
    std::size_t image, source, target;
    PatchLocation loc;
};

std::vector<Triple> triples(const World& w) {
    std::vector<Triple> out;
    for (std::size_t i = 0; i < 40; ++i) {
        const std::size_t src = predict(w.net, w.heldout.images[i]).label;
        out.push_back({i, src, (src + 1 + i % 7) % 8, corner_locations(32, 32, 5)[i % 4]});
    }
    return out;
}

struct TierCounts {
    std::size_t confident = 0, argmax = 0, misclassified = 0, n = 0;
    bool mask_ok = true;
    bool bounds_ok = true;
    std::size_t audited = 0;
    double rate(std::size_t k) const { return static_cast<double>(k) / static_cast<double>(n); }
};

TierCounts run_triples(const World& w, const std::vector<Triple>& ts, NoiseDomain domain) {
    TierCounts c;
    for (const Triple& t : ts) {
        AttackConfig cfg = AttackConfig::for_domain(domain);
        std::size_t seen = 0;
        cfg.on_step = [&](std::size_t, const Patch& p) {
            if (domain != NoiseDomain::image || seen++ >= 100) return;
            ++c.audited;
            for (float v : p.values.data()) c.bounds_ok = c.bounds_ok && v >= 0.0f && v <= 1.0f;
        };
        const Image& img = w.heldout.images[t.image];
        const AttackResult r = attack_single(w.net, img, t.target, t.loc, domain, cfg);
        ++c.n;
        c.confident += r.outcome >= Outcome::confident;
        c.argmax += r.outcome >= Outcome::argmax;
        c.misclassified += r.outcome >= Outcome::misclassified;
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x) {
                const bool inside = y >= t.loc.row && y < t.loc.row + 5 && x >= t.loc.col && x < t.loc.col + 5;
                if (inside) continue;
                for (std::size_t k = 0; k < 3; ++k)
                    c.mask_ok = c.mask_ok && std::bit_cast<std::uint32_t>(r.noised.at(y, x, k)) ==
                                                 std::bit_cast<std::uint32_t>(img.tensor().at(y, x, k));
            }
        if (r.iterations > cfg.max_iterations) c.mask_ok = false;
    }
    return c;
}

void single_image_and_domains(const World& w) {
    const auto ts = triples(w);
    auto t0 = std::chrono::steady_clock::now();
    const TierCounts net = run_triples(w, ts, NoiseDomain::network);
    const double secs = seconds_since(t0);
    const double tc = threshold(0.70, kFrozenConfident), ta = threshold(0.85, kFrozenArgmax),
                 tm = threshold(0.95, kFrozenMisclassified);
    report(3, "single-image-attack",
           net.rate(net.confident) >= tc && net.rate(net.argmax) >= ta && net.rate(net.misclassified) >= tm &&
               secs < 300,
           fmt("network: confident %.3f (>= %.2f) argmax %.3f (>= %.2f) misclassified %.3f (>= %.2f), %.1fs",
               net.rate(net.confident), tc, net.rate(net.argmax), ta, net.rate(net.misclassified), tm, secs));

    t0 = std::chrono::steady_clock::now();
    const TierCounts img = run_triples(w, ts, NoiseDomain::image);
    report(4, "domain-ordering",
           img.rate(img.confident) <= net.rate(net.confident) && img.misclassified > 0,
           fmt("image: confident %.3f <= network %.3f, misclassified %.3f > 0 (argmax %.3f), %.1fs",
               img.rate(img.confident), net.rate(net.confident), img.rate(img.misclassified), img.rate(img.argmax),
               seconds_since(t0)));

    report(5, "mask-invariant", net.mask_ok && img.mask_ok && img.bounds_ok && img.audited > 0,
           fmt("outside-window pixels bit-identical on %zu results; %zu image-domain steps audited in [0,1]",
               net.n + img.n, img.audited));
}

std::vector<TargetPatch> transfer_efficacy(const World& w) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<TargetPatch> patches;
    bool ok = true;
    double min_arg = 1, min_ns = 1, sum_conf = 0, sum_arg = 0, sum_ns = 0;
    std::size_t converged = 0;
    for (std::size_t target = 0; target < 8; ++target) {
        const TransferConfig cfg = TransferConfig::for_domain(NoiseDomain::network);
        const TransferResult tr = train_transfer_patch(w.net, w.train, target, NoiseDomain::network, cfg);
        converged += tr.converged;
        const TransferReport r = transfer_eval(w.net, w.heldout100, tr.patch, target);
        ok = ok && r.rate_confident <= r.rate_argmax_target && r.rate_argmax_target <= r.rate_not_source;
        min_arg = std::min(min_arg, r.rate_argmax_target);
        min_ns = std::min(min_ns, r.rate_not_source);
        sum_conf += r.rate_confident;
        sum_arg += r.rate_argmax_target;
        sum_ns += r.rate_not_source;
        patches.push_back({tr.patch, target});
    }
    const double secs = seconds_since(t0);
    const double tn = threshold(0.60, kFrozenTransferNotSource), ta = threshold(0.40, kFrozenTransferArgmax);
    ok = ok && min_ns >= tn && min_arg >= ta && secs < 600;
    report(6, "transfer-efficacy", ok,
           fmt("8 targets, %zu converged; mean conf/argmax/not-source %.3f/%.3f/%.3f; min not-source %.2f (>= %.2f) "
               "min argmax %.2f (>= %.2f), %.1fs",
               converged, sum_conf / 8, sum_arg / 8, sum_ns / 8, min_ns, tn, min_arg, ta, secs));
    return patches;
}

void sweep_oracle(const World& w, const Patch& patch, std::size_t target) {
    const Image& img = w.heldout.images[7];
    const HeatmapReport r = location_sweep(w.net, img, patch, target, 2);
    Rng rng(7, "acceptance-sweep");
    std::size_t match = 0;
    for (int k = 0; k < 50; ++k) {
        const std::size_t i = rng.below(r.cells.size());
        const PatchLocation loc{(i / r.cols) * 2, (i % r.cols) * 2};
        const auto p = softmax(w.net.forward(apply_patch(img, patch, loc)));
        const auto& c = r.cells[i];
        match += c.location == loc && c.source_probability == static_cast<double>(p[r.source]) &&
                 c.target_probability == static_cast<double>(p[target]) &&
                 c.argmax == argmax(std::span<const float>(p));
    }
    report(7, "sweep-oracle", match == 50, fmt("%zu/50 cells bit-identical (grid %zux%zu)", match, r.rows, r.cols));
}

void saliency_machinery(const World& w, const Patch& patch, std::size_t target) {
    Rng rng(8, "acceptance-saliency");
    std::size_t window_ok = 0;
    for (int t = 0; t < 20; ++t) {
        FixMap m;
        m.height = m.width = 12;
        for (int i = 0; i < 144; ++i) m.values.push_back(rng.uniform(0, 2));
        const std::size_t s = 1 + rng.below(6);
        const WindowScores ws = window_scores(m, s);
        bool ok = ws.rows == 13 - s && ws.cols == 13 - s;
        for (std::size_t r = 0; ok && r + s <= 12; ++r)
            for (std::size_t c = 0; c + s <= 12; ++c) {
                double mx = 0, sum = 0;
                for (std::size_t y = r; y < r + s; ++y)
                    for (std::size_t x = c; x < c + s; ++x) {
                        mx = std::max(mx, m.values[y * 12 + x]);
                        sum += m.values[y * 12 + x];
                    }
                ok = ok && ws.max[r * ws.cols + c] == mx && ws.sum[r * ws.cols + c] == sum;
            }
        window_ok += ok;
    }

    std::size_t overlap_ok = 0;
    for (int t = 0; t < 100; ++t) {
        FixMap m;
        m.height = m.width = 12;
        for (int i = 0; i < 144; ++i) m.values.push_back(rng.uniform(0, 2));
        const std::size_t s = 1 + rng.below(5);
        const PatchLocation loc{rng.below(13 - s), rng.below(13 - s)};
        const WindowOverlap o = top_window_overlap(m, loc, s);
        const WindowScores ws = window_scores(m, s);
        const auto first_best = [](const std::vector<double>& v) {
            return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
        };
        const auto hits = [&](std::size_t idx) {
            const std::size_t r = idx / ws.cols, c = idx % ws.cols;
            const std::size_t top = std::max(r, loc.row), bottom = std::min(r + s, loc.row + s);
            const std::size_t left = std::max(c, loc.col), right = std::min(c + s, loc.col + s);
            return top < bottom && left < right;
        };
        overlap_ok += o.overlap_max == hits(first_best(ws.max)) && o.overlap_sum == hits(first_best(ws.sum));
    }

    // One fix step against the raw input gradient.
    double worst = 0;
    std::size_t steps = 0;
    for (std::size_t i = 0; i < w.heldout100.size() && steps < 4; ++i) {
        const Image& img = w.heldout100.images[i];
        const std::size_t src = predict(w.net, img).label;
        const Tensor x = apply_patch(img, patch, bottom_right(32, 32, 5));
        if (src == target || predict(w.net, x).label != target) continue;
        FixConfig cfg;
        cfg.max_iterations = 1;
        for (FixMode mode : {FixMode::towards_source, FixMode::away_from_target}) {
            const FixMap map = gradient_fix(w.net, x, mode, src, target, cfg);
            std::vector<float> cw(8, 0.0f);
            cw[mode == FixMode::towards_source ? src : target] = mode == FixMode::towards_source ? 1.0f : -1.0f;
            const Tensor g = w.net.input_gradient(x, cw);
            for (std::size_t p = 0; p < 32 * 32; ++p) {
                double want = 0;
                for (std::size_t k = 0; k < 3; ++k) want += std::abs(cfg.step_size * g[p * 3 + k]);
                worst = std::max(worst, std::abs(map.values[p] - want));
            }
            ++steps;
        }
    }
    report(8, "saliency-machinery", window_ok == 20 && overlap_ok == 100 && steps > 0 && worst <= 1e-6,
           fmt("window scores %zu/20 exact; overlap %zu/100; single-step max abs err %.2e over %zu maps", window_ok,
               overlap_ok, worst, steps));
}

void saliency_statistic(const World& w, std::vector<TargetPatch> patches) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t target = 0; target < 8; ++target) {
        TransferConfig cfg = TransferConfig::for_domain(NoiseDomain::image);
        cfg.max_total_iterations = 5000;
        patches.push_back(
            {train_transfer_patch(w.net, w.train, target, NoiseDomain::image, cfg).patch, target});
    }
    HeldoutSet images = w.heldout;
    images.images.resize(30);
    images.labels.resize(30);
    const SaliencyStats st = saliency_stats(w.net, patches, images, bottom_right(32, 32, 5));
    SaliencyStats recount;
    recount.records = st.records;
    tally(recount);
    bool ok = recount.cells.size() == st.cells.size() && recount.away_later == st.away_later;
    std::size_t evaluated = 0;
    for (std::size_t i = 0; ok && i < st.cells.size(); ++i) {
        const auto &a = st.cells[i], &b = recount.cells[i];
        ok = a.n_overlap_max == b.n_overlap_max && a.n_overlap_sum == b.n_overlap_sum &&
             a.frac_overlap_max == b.frac_overlap_max && a.frac_overlap_sum == b.frac_overlap_sum &&
             a.evaluated == b.evaluated && a.frac_overlap_max >= 0 && a.frac_overlap_max <= 1 &&
             a.frac_overlap_sum >= 0 && a.frac_overlap_sum <= 1;
        evaluated += a.evaluated;
    }
    ok = ok && st.cells.size() == 4 && evaluated > 0;
    report(9, "saliency-statistic", ok,
           fmt("%zu evaluated pairs, recount exact; away-from-target slower on %zu/%zu pairs, %.1fs", evaluated,
               st.away_later, st.paired, seconds_since(t0)));
    std::printf("%s", format_saliency_table(st).c_str());
}

// ---------------------------------------------------------------------------

int run(const std::string& args, const fs::path& dir) {
    const std::string cmd = "cd '" + dir.string() + "' && '" LVNOISE_BIN "' " + args + " > /dev/null";
    return std::system(cmd.c_str());
}

void cli_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / "lvn_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::vector<std::pair<std::string, std::string>> steps{
        {"model", "train-model"},
        {"single", "attack-single --model model/model.lvnm --target 2 --image-index 3"},
        {"transfer", "attack-transfer --model model/model.lvnm --target 4"},
        {"transfer_img", "attack-transfer --model model/model.lvnm --target 1 --domain image "
                         "--max-total-iterations 5000"},
        {"sweep", "eval-sweep --model model/model.lvnm --patch transfer/patch.lvpn --target 4 --image-index 5"},
        {"evaltr", "eval-transfer --model model/model.lvnm --patch transfer/patch.lvpn --target 4"},
        {"matrix", "class-matrix --model model/model.lvnm --patches 4=transfer/patch.lvpn,2=single/patch.lvpn"},
        {"saliency", "saliency --model model/model.lvnm --patches 4=transfer/patch.lvpn,1=transfer_img/patch.lvpn "
                     "--heldout-count 20"},
    };
    bool ok = true;
    std::size_t files = 0;
    std::string detail;
    for (const auto& [out, args] : steps) {
        if (run(args + " --out " + out, dir) != 0) {
            ok = false;
            detail = "command failed: " + args;
            break;
        }
        const std::string command = args.substr(0, args.find(' '));
        if (run(command + " --config " + out + "/manifest.json --out rerun_" + out, dir) != 0) {
            ok = false;
            detail = "rerun failed: " + out;
            break;
        }
        for (const auto& e : fs::recursive_directory_iterator(dir / out)) {
            if (!e.is_regular_file()) continue;
            const fs::path rel = fs::relative(e.path(), dir / out);
            const fs::path twin = dir / ("rerun_" + out) / rel;
            ++files;
            if (!fs::exists(twin) || read_file(e.path()) != read_file(twin)) {
                ok = false;
                detail = "differs: " + out + "/" + rel.string();
            }
        }
    }
    if (ok) detail = fmt("%zu artifacts across %zu commands byte-identical on rerun, %.1fs", files, steps.size(),
                         seconds_since(t0));
    report(10, "cli-determinism", ok, detail);
    fs::remove_all(dir);
}

}  // namespace

int main() {
    gradient_correctness();
    const World w = victim_quality();
    single_image_and_domains(w);
    const std::vector<TargetPatch> patches = transfer_efficacy(w);
    sweep_oracle(w, patches[3].patch, patches[3].target);
    saliency_machinery(w, patches[3].patch, patches[3].target);
    saliency_statistic(w, patches);
    cli_determinism();
    std::printf("%s: %d failing\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
