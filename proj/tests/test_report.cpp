#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "lvn/io.hpp"
#include "lvn/report.hpp"

using namespace lvn;

namespace {

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

HeatmapReport toy_report() {
    HeatmapReport r;
    r.rows = 2;
    r.cols = 3;
    r.stride = 2;
    r.patch_size = 5;
    r.source = 1;
    r.target = 2;
    const std::size_t labels[] = {1, 2, 0, 2, 2, 1};
    for (std::size_t i = 0; i < 6; ++i)
        r.cells.push_back({{(i / 3) * 2, (i % 3) * 2}, 0.1 * static_cast<double>(i), 0.2, labels[i]});
    return r;
}

}  // namespace

TEST_SUITE("report") {
    TEST_CASE("heatmap csv layout") {
        const auto l = lines(heatmap_csv(toy_report()));
        REQUIRE(l.size() == 7);
        CHECK(l[0] == "row,col,y,x,source_probability,target_probability,argmax");
        CHECK(l[5] == "1,1,2,2,0.4,0.2,2");
    }

    TEST_CASE("six heatmap panels") {
        const auto maps = heatmap_pgms(toy_report(), 3);
        REQUIRE(maps.size() == 6);
        const GrayImage tgt = decode_pgm(maps[2].second);
        CHECK(tgt.height == 2);
        CHECK(tgt.width == 3);
        CHECK(tgt.pixels == std::vector<std::uint8_t>{0, 255, 0, 255, 255, 0});
        CHECK(decode_pgm(maps[3].second).pixels == std::vector<std::uint8_t>{255, 0, 0, 0, 0, 255});
        CHECK(decode_pgm(maps[4].second).pixels == std::vector<std::uint8_t>{0, 0, 255, 0, 0, 0});
        CHECK(decode_pgm(maps[5].second).pixels == std::vector<std::uint8_t>{128, 255, 0, 255, 255, 128});
        CHECK(decode_pgm(maps[0].second).pixels[5] == 128);  // round(255 * 0.5)
    }

    TEST_CASE("fix map normalization is recorded") {
        FixMap m;
        m.height = 1;
        m.width = 4;
        m.values = {0.0, 1.0, 2.0, 4.0};
        CHECK(decode_pgm(fixmap_pgm(m)).pixels == std::vector<std::uint8_t>{0, 64, 128, 255});
        CHECK(fixmap_sidecar(m)["normalization_max"] == 4.0);
        m.values.assign(4, 0.0);
        CHECK(decode_pgm(fixmap_pgm(m)).pixels == std::vector<std::uint8_t>(4, 0));
        CHECK(lines(fixmap_csv(m)).size() == 5);
    }

    TEST_CASE("class matrix csv marks missing cells") {
        ClassMatrix m{2, {std::nullopt, 0.5, 0.25, std::nullopt}};
        const auto l = lines(class_matrix_csv(m));
        REQUIRE(l.size() == 5);
        CHECK(l[1] == "0,0,");
        CHECK(l[2] == "0,1,0.5");
    }

    TEST_CASE("metrics csv") {
        const auto l = lines(metrics_csv({{1, 2.0, 0.5, 0.25}}));
        CHECK(l[0] == "epoch,train_loss,train_accuracy,heldout_accuracy");
        CHECK(l[1] == "1,2,0.5,0.25");
    }
}
