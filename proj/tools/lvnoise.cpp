// lvnoise: train the victim, craft localized noise patches, evaluate them.

#include <algorithm>
#include <cstdio>
#include <functional>
#include <iostream>

#include "cli_support.hpp"
#include "lvn/eval.hpp"
#include "lvn/io.hpp"
#include "lvn/patch_attack.hpp"
#include "lvn/report.hpp"
#include "lvn/saliency.hpp"
#include "lvn/train.hpp"
#include "lvn/transfer_attack.hpp"

using namespace lvn;
using namespace lvn::cli;

namespace {

template <typename F>
auto field(const std::string& key, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError("parameter '" + key + "': " + e.what());
    }
}

void add_seed(ParamSet& p) { p.add("seed", Kind::uint, 42, "Global seed (dataset, init, sampling)"); }
void add_threads(ParamSet& p) { p.add("threads", Kind::uint, 0, "Worker threads, 0 = all cores"); }
void add_model(ParamSet& p) {
    p.add("model", Kind::text, nullptr, "Model file (LVNM)");
    p.add("n_per_class", Kind::uint, 200, "Synthetic images per class and split");
}

Network open_model(const ParamSet& p, Outputs& out) {
    const std::string path = p.text("model");
    return field("model", [&] {
        out.input(path);
        return load_model(path);
    });
}

SynthConfig synth_for(const ParamSet& p, const Network& net) {
    SynthConfig sc;
    sc.seed = p.uint("seed");
    sc.n_per_class = p.uint("n_per_class");
    sc.num_classes = net.num_classes();
    sc.image_size = net.input_shape()[0];
    field("n_per_class", [&] {
        sc.validate();
        return 0;
    });
    return sc;
}

template <Split S>
LabeledImages<S> first_n(LabeledImages<S> all, std::size_t n, const std::string& key) {
    if (n == 0 || n > all.size())
        throw UsageError("parameter '" + key + "': " + std::to_string(n) + " not in [1, " +
                         std::to_string(all.size()) + "]");
    all.images.resize(n);
    all.labels.resize(n);
    return all;
}

NoiseDomain domain_of(const ParamSet& p) {
    return field("domain", [&] { return parse_domain(p.text("domain")); });
}

std::size_t class_index(const ParamSet& p, const std::string& key, const Network& net) {
    const std::size_t v = p.uint(key);
    if (v >= net.num_classes())
        throw UsageError("parameter '" + key + "': " + std::to_string(v) + " >= num_classes " +
                         std::to_string(net.num_classes()));
    return v;
}

PatchLocation parse_location(const ParamSet& p, std::size_t h, std::size_t w, std::size_t s) {
    const std::string v = p.text("location");
    return field("location", [&] {
        const auto corners = corner_locations(h, w, s);
        if (v == "top_left") return corners[0];
        if (v == "top_right") return corners[1];
        if (v == "bottom_left") return corners[2];
        if (v == "bottom_right") return corners[3];
        const auto comma = v.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("expected top_left|top_right|bottom_left|bottom_right|ROW,COL, got '" + v +
                                        "'");
        const PatchLocation loc{std::stoul(v.substr(0, comma)), std::stoul(v.substr(comma + 1))};
        check_location(h, w, s, loc);
        return loc;
    });
}

ReferenceMode reference_of(const ParamSet& p) {
    const std::string v = p.text("reference");
    if (v == "argmax") return ReferenceMode::argmax;
    if (v == "source") return ReferenceMode::source;
    throw UsageError("parameter 'reference': expected argmax|source, got '" + v + "'");
}

PatchInit init_of(const ParamSet& p) {
    const std::string v = p.text("init");
    if (v == "zeros") return PatchInit::zeros;
    if (v == "uniform") return PatchInit::uniform;
    throw UsageError("parameter 'init': expected zeros|uniform, got '" + v + "'");
}

void add_attack(ParamSet& p) {
    p.add("domain", Kind::text, "network", "Noise domain: network|image");
    p.add("patch_size", Kind::uint, 5, "Patch side length in pixels");
    p.add("step_size", Kind::real, nullptr, "Ascent step (default: 3.0 network, 0.01 image)");
    p.add("target_confidence", Kind::real, 0.9, "Success threshold on the target probability");
    p.add("reference", Kind::text, "argmax", "Reference class: argmax|source");
    p.add("init", Kind::text, "zeros", "Patch init: zeros|uniform");
}

AttackConfig attack_config(ParamSet& p, NoiseDomain domain) {
    AttackConfig cfg = AttackConfig::for_domain(domain);
    if (p.has("step_size"))
        cfg.step_size = p.real("step_size");
    else
        p.set("step_size", cfg.step_size);
    cfg.patch_size = p.uint("patch_size");
    cfg.target_confidence = p.real("target_confidence");
    cfg.seed = p.uint("seed");
    cfg.reference = reference_of(p);
    cfg.init = init_of(p);
    field("step_size", [&] {
        cfg.validate();
        return 0;
    });
    return cfg;
}

// Clamped copy for viewing; network-domain noise may leave [0, 1].
Image displayable(const Tensor& t) {
    Tensor c = t;
    for (float& v : c.data()) v = std::clamp(v, 0.0f, 1.0f);
    return Image(std::move(c));
}

Image patch_image(const Patch& patch) { return displayable(patch.values); }

// "TARGET=PATH,TARGET=PATH"
std::vector<TargetPatch> parse_patch_list(const ParamSet& p, const Network& net, Outputs& out) {
    const std::string spec = p.text("patches");
    std::vector<TargetPatch> list;
    std::size_t start = 0;
    while (start <= spec.size()) {
        const std::size_t end = std::min(spec.find(',', start), spec.size());
        const std::string item = spec.substr(start, end - start);
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("parameter 'patches': expected TARGET=PATH entries, got '" + item + "'");
        TargetPatch tp;
        tp.target = field("patches", [&] { return static_cast<std::size_t>(std::stoul(item.substr(0, eq))); });
        if (tp.target >= net.num_classes())
            throw UsageError("parameter 'patches': target " + std::to_string(tp.target) + " out of range");
        const std::string path = item.substr(eq + 1);
        tp.patch = field("patches", [&] {
            out.input(path);
            return load_patch(path);
        });
        list.push_back(std::move(tp));
        start = end + 1;
    }
    return list;
}

using Command = std::function<void(ParamSet&, Outputs&)>;

void train_model(ParamSet& p, Outputs& out) {
    SynthConfig sc;
    sc.seed = p.uint("seed");
    sc.n_per_class = p.uint("n_per_class");
    sc.num_classes = p.uint("num_classes");
    sc.image_size = p.uint("image_size");
    field("num_classes", [&] {
        sc.validate();
        return 0;
    });
    TrainConfig tc;
    tc.epochs = p.uint("epochs");
    tc.batch_size = p.uint("batch_size");
    tc.learning_rate = p.real("learning_rate");
    tc.seed = sc.seed;
    const TrainSet train = synth_dataset<Split::train>(sc);
    const HeldoutSet heldout = synth_dataset<Split::heldout>(sc);
    const TrainResult r = field("epochs", [&] { return train_victim(train, tc, &heldout); });
    out.write("model.lvnm", encode_model(r.network));
    out.write("metrics.csv", metrics_csv(r.epochs));
    if (p.flag("export_dataset")) {
        char name[64];
        for (std::size_t i = 0; i < train.size(); ++i) {
            std::snprintf(name, sizeof name, "dataset/train/%05zu_c%zu.ppm", i, train.labels[i]);
            out.write(name, encode_ppm(train.images[i]));
        }
        for (std::size_t i = 0; i < heldout.size(); ++i) {
            std::snprintf(name, sizeof name, "dataset/heldout/%05zu_c%zu.ppm", i, heldout.labels[i]);
            out.write(name, encode_ppm(heldout.images[i]));
        }
    }
}

void attack_single_cmd(ParamSet& p, Outputs& out) {
    const Network net = open_model(p, out);
    const NoiseDomain domain = domain_of(p);
    AttackConfig cfg = attack_config(p, domain);
    cfg.max_iterations = p.uint("max_iterations");
    const std::size_t target = class_index(p, "target", net);

    Image image;
    if (p.has("image")) {
        const std::string path = p.text("image");
        image = field("image", [&] {
            out.input(path);
            return read_ppm(path);
        });
    } else {
        const HeldoutSet ho = synth_dataset<Split::heldout>(synth_for(p, net));
        const std::size_t idx = p.uint("image_index");
        if (idx >= ho.size())
            throw UsageError("parameter 'image_index': " + std::to_string(idx) + " >= " + std::to_string(ho.size()));
        image = ho.images[idx];
    }
    const PatchLocation loc = parse_location(p, image.height(), image.width(), cfg.patch_size);
    const std::size_t source = predict(net, image).label;
    if (source == target)
        throw UsageError("parameter 'target': the clean image is already classified as " + std::to_string(target));

    const AttackResult r = attack_single(net, image, target, loc, domain, cfg);
    out.write("patch.lvpn", encode_patch(r.patch));
    out.write("clean.ppm", encode_ppm(image));
    out.write("noised.ppm", encode_ppm(displayable(r.noised)));
    out.write("result.json", to_json(r).dump(2) + "\n");
}

void attack_transfer_cmd(ParamSet& p, Outputs& out) {
    const Network net = open_model(p, out);
    const NoiseDomain domain = domain_of(p);
    TransferConfig cfg;
    cfg.attack = attack_config(p, domain);
    cfg.image_count = p.uint("image_count");
    cfg.consecutive = p.uint("consecutive");
    cfg.max_total_iterations = p.uint("max_total_iterations");
    field("image_count", [&] {
        cfg.validate();
        return 0;
    });
    const std::size_t target = class_index(p, "target", net);
    const TrainSet train = synth_dataset<Split::train>(synth_for(p, net));
    const TransferResult r = train_transfer_patch(net, train, target, domain, cfg);
    out.write("patch.lvpn", encode_patch(r.patch));
    out.write("patch.ppm", encode_ppm(patch_image(r.patch)));
    out.write("patch.json", to_json(r).dump(2) + "\n");
}

Patch open_patch(const ParamSet& p, Outputs& out) {
    const std::string path = p.text("patch");
    return field("patch", [&] {
        out.input(path);
        return load_patch(path);
    });
}

void eval_sweep_cmd(ParamSet& p, Outputs& out) {
    const Network net = open_model(p, out);
    const Patch patch = open_patch(p, out);
    const std::size_t target = class_index(p, "target", net);
    const HeldoutSet ho = synth_dataset<Split::heldout>(synth_for(p, net));
    const std::size_t idx = p.uint("image_index");
    if (idx >= ho.size())
        throw UsageError("parameter 'image_index': " + std::to_string(idx) + " >= " + std::to_string(ho.size()));
    const std::size_t stride = p.uint("stride");
    const HeatmapReport r = field("stride", [&] {
        return location_sweep(net, ho.images[idx], patch, target, stride, p.uint("threads"));
    });
    out.write("heatmap.csv", heatmap_csv(r));
    for (const auto& [name, bytes] : heatmap_pgms(r, net.num_classes())) out.write(name, bytes);
    Json summary = {{"rows", r.rows},     {"cols", r.cols},     {"stride", r.stride}, {"patch_size", r.patch_size},
                    {"source", r.source}, {"target", r.target},
                    {"robustness", to_json(location_robustness(r, p.real("threshold")))}};
    out.write("sweep.json", summary.dump(2) + "\n");
}

void eval_transfer_cmd(ParamSet& p, Outputs& out) {
    const Network net = open_model(p, out);
    const Patch patch = open_patch(p, out);
    const std::size_t target = class_index(p, "target", net);
    const HeldoutSet ho =
        first_n(synth_dataset<Split::heldout>(synth_for(p, net)), p.uint("heldout_count"), "heldout_count");
    const std::size_t h = net.input_shape()[0], w = net.input_shape()[1];
    const PatchLocation loc = parse_location(p, h, w, patch.size());
    const TransferReport r = transfer_eval(net, ho, patch, target, loc, p.real("threshold"), p.uint("threads"));
    out.write("transfer.csv", transfer_csv(r));
    out.write("transfer.json", to_json(r).dump(2) + "\n");
}

void class_matrix_cmd(ParamSet& p, Outputs& out) {
    const Network net = open_model(p, out);
    const auto list = parse_patch_list(p, net, out);
    const HeldoutSet ho =
        first_n(synth_dataset<Split::heldout>(synth_for(p, net)), p.uint("heldout_count"), "heldout_count");
    std::vector<std::optional<Patch>> by_target(net.num_classes());
    for (const auto& tp : list) {
        if (by_target[tp.target]) throw UsageError("parameter 'patches': target " + std::to_string(tp.target) + " listed twice");
        by_target[tp.target] = tp.patch;
    }
    const std::size_t s = list.front().patch.size();
    for (const auto& tp : list)
        if (tp.patch.size() != s) throw UsageError("parameter 'patches': all patches must share one size");
    const PatchLocation loc = parse_location(p, net.input_shape()[0], net.input_shape()[1], s);
    const ClassMatrix m = class_matrix(net, group_by_prediction(net, ho.images), by_target, loc, p.uint("threads"));
    out.write("class_matrix.csv", class_matrix_csv(m));
}

void saliency_cmd(ParamSet& p, Outputs& out) {
    const Network net = open_model(p, out);
    const auto list = parse_patch_list(p, net, out);
    const HeldoutSet ho =
        first_n(synth_dataset<Split::heldout>(synth_for(p, net)), p.uint("heldout_count"), "heldout_count");
    const std::size_t s = list.front().patch.size();
    for (const auto& tp : list)
        if (tp.patch.size() != s) throw UsageError("parameter 'patches': all patches must share one size");
    const PatchLocation loc = parse_location(p, net.input_shape()[0], net.input_shape()[1], s);
    SaliencyConfig cfg;
    cfg.fix.step_size = p.real("fix_step");
    cfg.fix.max_iterations = p.uint("fix_max_iterations");
    cfg.fix.clip = p.flag("clip");
    cfg.threads = p.uint("threads");
    field("fix_step", [&] {
        cfg.fix.validate();
        return 0;
    });
    const SaliencyStats st = saliency_stats(net, list, ho, loc, cfg);
    out.write("saliency.json", to_json(st).dump(2) + "\n");
    out.write("saliency_table.txt", format_saliency_table(st));
    out.write("saliency_records.csv", saliency_records_csv(st));

    // Maps for the first few evaluated pairs.
    std::size_t exported = 0;
    const std::size_t limit = p.uint("export_maps");
    for (std::size_t i = 0; i < st.records.size() && exported < limit; i += 2) {
        const SaliencyRecord& r = st.records[i];
        if (r.excluded) continue;
        const Tensor noised = apply_patch(ho.images[r.image_index], list[r.patch_index].patch, loc);
        for (FixMode m : {FixMode::towards_source, FixMode::away_from_target}) {
            const FixMap map = gradient_fix(net, noised, m, r.source, r.target, cfg.fix);
            const std::string stem =
                "maps/p" + std::to_string(r.patch_index) + "_i" + std::to_string(r.image_index) + "_" + to_string(m);
            out.write(stem + ".csv", fixmap_csv(map));
            out.write(stem + ".pgm", fixmap_pgm(map));
            out.write(stem + ".json", fixmap_sidecar(map).dump(2) + "\n");
        }
        out.write("maps/p" + std::to_string(r.patch_index) + "_i" + std::to_string(r.image_index) + "_noised.ppm",
                  encode_ppm(displayable(noised)));
        ++exported;
    }
}

void print_error(const std::string& command, const std::string& message) {
    const Json e = {{"error", message}, {"command", command}};
    std::cerr << e.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Localized visible adversarial noise: victim training, patch attacks, evaluation"};
    app.require_subcommand(1);

    struct Entry {
        CLI::App* sub;
        std::unique_ptr<ParamSet> params;
        Command run;
    };
    std::vector<Entry> entries;
    const auto command = [&](const std::string& name, const std::string& help, Command run) -> ParamSet& {
        CLI::App* sub = app.add_subcommand(name, help);
        entries.push_back({sub, std::make_unique<ParamSet>(sub), std::move(run)});
        return *entries.back().params;
    };

    {
        ParamSet& p = command("train-model", "Train the victim on the synthetic dataset", train_model);
        add_seed(p);
        p.add("num_classes", Kind::uint, 8, "Number of shape classes");
        p.add("n_per_class", Kind::uint, 200, "Images per class and split");
        p.add("image_size", Kind::uint, 32, "Image side length");
        p.add("epochs", Kind::uint, 8, "Training epochs");
        p.add("batch_size", Kind::uint, 16, "Minibatch size");
        p.add("learning_rate", Kind::real, 0.02, "SGD learning rate");
        p.add("export_dataset", Kind::flag, false, "Also write every image as PPM");
    }
    {
        ParamSet& p = command("attack-single", "Noise one image at a fixed location", attack_single_cmd);
        add_model(p);
        add_seed(p);
        add_attack(p);
        p.add("target", Kind::uint, nullptr, "Target class");
        p.add("image_index", Kind::uint, 0, "Held-out image index (ignored with --image)");
        p.add("image", Kind::text, nullptr, "PPM image to attack instead of a held-out image");
        p.add("location", Kind::text, "bottom_right", "Corner name or ROW,COL");
        p.add("max_iterations", Kind::uint, 10000, "Iteration cap");
    }
    {
        ParamSet& p = command("attack-transfer", "Train a patch across images and locations", attack_transfer_cmd);
        add_model(p);
        add_seed(p);
        add_attack(p);
        p.add("target", Kind::uint, nullptr, "Target class");
        p.add("image_count", Kind::uint, 100, "Training images sampled from");
        p.add("consecutive", Kind::uint, 30, "Successes in a row needed to stop");
        p.add("max_total_iterations", Kind::uint, 100000, "Iteration cap");
    }
    {
        ParamSet& p = command("eval-sweep", "Place a patch at every strided location of one image", eval_sweep_cmd);
        add_model(p);
        add_seed(p);
        add_threads(p);
        p.add("patch", Kind::text, nullptr, "Patch file (LVPN)");
        p.add("target", Kind::uint, nullptr, "Target class");
        p.add("image_index", Kind::uint, 0, "Held-out image index");
        p.add("stride", Kind::uint, 2, "Location stride");
        p.add("threshold", Kind::real, 0.9, "Confidence threshold for the summary");
    }
    {
        ParamSet& p = command("eval-transfer", "Apply a patch to held-out images", eval_transfer_cmd);
        add_model(p);
        add_seed(p);
        add_threads(p);
        p.add("patch", Kind::text, nullptr, "Patch file (LVPN)");
        p.add("target", Kind::uint, nullptr, "Target class");
        p.add("heldout_count", Kind::uint, 100, "Held-out images evaluated");
        p.add("location", Kind::text, "bottom_right", "Corner name or ROW,COL");
        p.add("threshold", Kind::real, 0.9, "Confidence threshold");
    }
    {
        ParamSet& p = command("class-matrix", "Mean target probability per (source, target)", class_matrix_cmd);
        add_model(p);
        add_seed(p);
        add_threads(p);
        p.add("patches", Kind::text, nullptr, "TARGET=PATH[,TARGET=PATH...]");
        p.add("heldout_count", Kind::uint, 100, "Held-out images grouped by prediction");
        p.add("location", Kind::text, "bottom_right", "Corner name or ROW,COL");
    }
    {
        ParamSet& p = command("saliency", "Gradient-fix maps and window overlap statistics", saliency_cmd);
        add_model(p);
        add_seed(p);
        add_threads(p);
        p.add("patches", Kind::text, nullptr, "TARGET=PATH[,TARGET=PATH...]");
        p.add("heldout_count", Kind::uint, 100, "Held-out images");
        p.add("location", Kind::text, "bottom_right", "Corner name or ROW,COL");
        p.add("fix_step", Kind::real, 1.0, "Fix step size");
        p.add("fix_max_iterations", Kind::uint, 2000, "Fix iteration cap");
        p.add("clip", Kind::flag, false, "Clamp the image to [0, 1] while fixing");
        p.add("export_maps", Kind::uint, 4, "Pairs whose fix maps are written");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("", e.what());
        return 2;
    }

    for (auto& e : entries) {
        if (!e.sub->parsed()) continue;
        const std::string name = e.sub->get_name();
        Outputs out(e.params->out_dir());
        try {
            e.params->resolve(name);
            out.open();
            e.run(*e.params, out);
            out.manifest(name, e.params->resolved());
        } catch (const UsageError& ex) {
            out.rollback();
            print_error(name, ex.what());
            return 2;
        } catch (const std::exception& ex) {
            out.rollback();
            print_error(name, ex.what());
            return 1;
        }
        return 0;
    }
    return 1;
}
