#include "lvn/report.hpp"

#include <cstdio>

#include "lvn/io.hpp"

namespace lvn {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string num17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string row(std::initializer_list<std::string> cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ',';
        out += c;
    }
    return out + '\n';
}

std::string u(std::size_t v) { return std::to_string(v); }
std::string b(bool v) { return v ? "1" : "0"; }

}  // namespace

std::string metrics_csv(const std::vector<EpochMetrics>& epochs) {
    std::string out = "epoch,train_loss,train_accuracy,heldout_accuracy\n";
    for (const auto& e : epochs)
        out += row({u(e.epoch), num(e.train_loss), num(e.train_accuracy), num(e.heldout_accuracy)});
    return out;
}

std::string heatmap_csv(const HeatmapReport& r) {
    std::string out = "row,col,y,x,source_probability,target_probability,argmax\n";
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& c = r.cells[i];
        out += row({u(i / r.cols), u(i % r.cols), u(c.location.row), u(c.location.col), num(c.source_probability),
                    num(c.target_probability), u(c.argmax)});
    }
    return out;
}

std::string transfer_csv(const TransferReport& r) {
    std::string out =
        "index,source,label,source_probability,target_probability,excluded,confident,argmax_target,not_source\n";
    for (const auto& t : r.records)
        out += row({u(t.index), u(t.source), u(t.label), num(t.source_probability), num(t.target_probability),
                    b(t.excluded), b(t.confident), b(t.argmax_target), b(t.not_source)});
    return out;
}

std::string class_matrix_csv(const ClassMatrix& m) {
    std::string out = "source,target,mean_target_probability\n";
    for (std::size_t s = 0; s < m.num_classes; ++s)
        for (std::size_t t = 0; t < m.num_classes; ++t) {
            const auto& cell = m.at(s, t);
            out += row({u(s), u(t), cell ? num17(*cell) : ""});
        }
    return out;
}

std::string fixmap_csv(const FixMap& map) {
    std::string out = "y,x,value\n";
    for (std::size_t y = 0; y < map.height; ++y)
        for (std::size_t x = 0; x < map.width; ++x) out += row({u(y), u(x), num17(map.at(y, x))});
    return out;
}

std::string saliency_records_csv(const SaliencyStats& stats) {
    std::string out =
        "patch_index,image_index,domain,mode,source,target,excluded,fixed,iterations,overlap_max,overlap_sum\n";
    for (const auto& r : stats.records)
        out += row({u(r.patch_index), u(r.image_index), to_string(r.domain), to_string(r.mode), u(r.source),
                    u(r.target), b(r.excluded), b(r.fixed), u(r.iterations), b(r.overlap_max), b(r.overlap_sum)});
    return out;
}

std::vector<std::pair<std::string, std::string>> heatmap_pgms(const HeatmapReport& r, std::size_t num_classes) {
    const auto indicator = [](const std::vector<bool>& v) {
        std::vector<double> out;
        for (bool x : v) out.push_back(x ? 1.0 : 0.0);
        return out;
    };
    std::vector<double> label;
    const double scale = num_classes > 1 ? 1.0 / static_cast<double>(num_classes - 1) : 0.0;
    for (const auto& c : r.cells) label.push_back(static_cast<double>(c.argmax) * scale);
    return {
        {"source_probability.pgm", encode_pgm(r.rows, r.cols, r.source_map())},
        {"target_probability.pgm", encode_pgm(r.rows, r.cols, r.target_map())},
        {"argmax_target.pgm", encode_pgm(r.rows, r.cols, indicator(r.argmax_is_target()))},
        {"argmax_source.pgm", encode_pgm(r.rows, r.cols, indicator(r.argmax_is_source()))},
        {"argmax_neither.pgm", encode_pgm(r.rows, r.cols, indicator(r.argmax_is_neither()))},
        {"argmax_class.pgm", encode_pgm(r.rows, r.cols, label)},
    };
}

std::string fixmap_pgm(const FixMap& map) {
    const double mx = map.max_value();
    std::vector<double> scaled(map.values.size(), 0.0);
    if (mx > 0)
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = map.values[i] / mx;
    return encode_pgm(map.height, map.width, scaled);
}

Json fixmap_sidecar(const FixMap& map) {
    return {{"height", map.height},       {"width", map.width},
            {"mode", to_string(map.mode)}, {"iterations", map.iterations},
            {"fixed", map.fixed},          {"label", map.label},
            {"normalization_max", map.max_value()},
            {"note", "pixel value v maps back to v / 255 * normalization_max"}};
}

Json to_json(const AttackResult& r) {
    return {{"source", r.source},
            {"target", r.target},
            {"location", {{"row", r.location.row}, {"col", r.location.col}}},
            {"domain", to_string(r.patch.domain)},
            {"patch_size", r.patch.size()},
            {"outcome", to_string(r.outcome)},
            {"iterations", r.iterations},
            {"label", r.label},
            {"target_probability", r.target_probability},
            {"source_probability", r.source_probability}};
}

Json to_json(const TransferResult& r) {
    return {{"target", r.target},
            {"domain", to_string(r.patch.domain)},
            {"patch_size", r.patch.size()},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"images_used", r.images_used},
            {"filtered_out", r.filtered_out}};
}

Json to_json(const TransferReport& r) {
    return {{"target", r.target},
            {"location", {{"row", r.location.row}, {"col", r.location.col}}},
            {"threshold", r.threshold},
            {"evaluated", r.evaluated},
            {"excluded", r.excluded},
            {"n_confident", r.n_confident},
            {"n_argmax_target", r.n_argmax_target},
            {"n_not_source", r.n_not_source},
            {"rate_confident", r.rate_confident},
            {"rate_argmax_target", r.rate_argmax_target},
            {"rate_not_source", r.rate_not_source}};
}

Json to_json(const LocationRobustness& r) {
    return {{"frac_target_confident", r.frac_target_confident}, {"frac_not_source", r.frac_not_source}};
}

Json to_json(const SaliencyStats& s) {
    Json rows = Json::array();
    for (const auto& c : s.cells) {
        Json ref = nullptr;
        for (const auto& r : kReferenceRows)
            if (r.domain == c.domain && r.mode == c.mode)
                ref = {{"max_percent", r.max_percent}, {"sum_percent", r.sum_percent}};
        rows.push_back({{"domain", to_string(c.domain)},
                        {"fix_method", to_string(c.mode)},
                        {"max", c.frac_overlap_max},
                        {"sum", c.frac_overlap_sum},
                        {"n_overlap_max", c.n_overlap_max},
                        {"n_overlap_sum", c.n_overlap_sum},
                        {"evaluated", c.evaluated},
                        {"excluded", c.excluded},
                        {"unfixed", c.unfixed},
                        {"reference", ref}});
    }
    return {{"table", rows}, {"paired", s.paired}, {"away_later", s.away_later}};
}

}  // namespace lvn
