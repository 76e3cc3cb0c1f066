#include "lvn/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lvn {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string encode_model(const Network& net) {
    ByteWriter w;
    w.bytes("LVNM");
    w.u16(kModelVersion);
    for (std::size_t d : net.input_shape()) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(net.num_classes()));
    w.u32(static_cast<std::uint32_t>(net.layers().size()));
    for (const LayerSpec& l : net.layers()) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.u32(l.kernel);
        w.u32(l.out_channels);
        w.u32(l.padding);
        w.u32(l.window);
        w.u32(l.out_features);
    }
    for (const auto& p : net.params()) {
        for (float v : p.weight.data()) w.f32(v);
        for (float v : p.bias.data()) w.f32(v);
    }
    return w.take();
}

Network decode_model(std::string_view bytes) {
    ByteReader r(bytes, "model");
    if (r.bytes(4) != "LVNM") r.fail("bad magic (expected LVNM)");
    const std::uint16_t version = r.u16();
    if (version != kModelVersion) r.fail("unsupported version " + std::to_string(version));
    Shape3 input{};
    for (auto& d : input) d = r.u32();
    const std::uint32_t num_classes = r.u32();
    const std::uint32_t n_layers = r.u32();
    if (n_layers == 0 || n_layers > 4096) r.fail("implausible layer count " + std::to_string(n_layers));
    std::vector<LayerSpec> layers;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        LayerSpec l;
        const std::uint8_t kind = r.u8();
        if (kind < 1 || kind > 5) r.fail("layer " + std::to_string(i) + " has unknown kind " + std::to_string(kind));
        l.kind = static_cast<LayerKind>(kind);
        l.kernel = r.u32();
        l.out_channels = r.u32();
        l.padding = r.u32();
        l.window = r.u32();
        l.out_features = r.u32();
        layers.push_back(l);
    }
    auto net = [&] {
        try {
            return Network(input, std::move(layers), num_classes);
        } catch (const std::invalid_argument& e) {
            r.fail(std::string("inconsistent header: ") + e.what());
        }
    }();
    for (auto& p : net.params()) {
        for (float& v : p.weight.data()) v = r.f32();
        for (float& v : p.bias.data()) v = r.f32();
    }
    r.expect_end();
    for (const auto& p : net.params())
        if (!p.weight.all_finite() || !p.bias.all_finite()) r.fail("non-finite parameter");
    return net;
}

void save_model(const std::filesystem::path& path, const Network& net) { write_file_atomic(path, encode_model(net)); }

Network load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

std::uint8_t to_byte(double v) {
    const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(scaled);
}

namespace {

std::string pnm_header(const char* magic, std::size_t h, std::size_t w) {
    return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

struct PnmHeader {
    std::size_t width, height;
    std::size_t data_offset;
};

PnmHeader parse_pnm_header(std::string_view bytes, std::string_view magic, const std::string& what) {
    if (bytes.substr(0, 2) != magic) throw FormatError(what + ": bad magic (expected " + std::string(magic) + ")");
    std::size_t pos = 2;
    auto next_token = [&]() -> std::size_t {
        for (;;) {
            while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
            if (pos < bytes.size() && bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (++digits > 9) throw FormatError(what + ": header number too large");
            ++pos;
        }
        if (digits == 0) throw FormatError(what + ": malformed header");
        return v;
    };
    PnmHeader h{};
    h.width = next_token();
    h.height = next_token();
    const std::size_t maxval = next_token();
    if (maxval != 255) throw FormatError(what + ": only maxval 255 is supported, got " + std::to_string(maxval));
    if (h.width == 0 || h.height == 0) throw FormatError(what + ": zero dimension");
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw FormatError(what + ": missing whitespace after header");
    h.data_offset = pos + 1;
    return h;
}

}  // namespace

std::string encode_ppm(const Image& image) {
    std::string out = pnm_header("P6", image.height(), image.width());
    out.reserve(out.size() + image.tensor().size());
    for (float v : image.tensor().data()) out.push_back(static_cast<char>(to_byte(v)));
    return out;
}

Image decode_ppm(std::string_view bytes) {
    const PnmHeader h = parse_pnm_header(bytes, "P6", "ppm");
    const std::size_t n = h.width * h.height * 3;
    if (bytes.size() - h.data_offset != n)
        throw FormatError("ppm: expected " + std::to_string(n) + " pixel bytes, got " +
                          std::to_string(bytes.size() - h.data_offset));
    Tensor t({h.height, h.width, 3});
    for (std::size_t i = 0; i < n; ++i)
        t[i] = static_cast<float>(static_cast<unsigned char>(bytes[h.data_offset + i])) / 255.0f;
    return Image(std::move(t));
}

void write_ppm(const std::filesystem::path& path, const Image& image) { write_file_atomic(path, encode_ppm(image)); }

Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }

std::string encode_pgm(std::size_t height, std::size_t width, std::span<const double> values) {
    if (values.size() != height * width)
        throw std::invalid_argument("pgm: " + std::to_string(values.size()) + " values for " + std::to_string(height) +
                                    "x" + std::to_string(width));
    std::string out = pnm_header("P5", height, width);
    for (double v : values) out.push_back(static_cast<char>(to_byte(v)));
    return out;
}

GrayImage decode_pgm(std::string_view bytes) {
    const PnmHeader h = parse_pnm_header(bytes, "P5", "pgm");
    const std::size_t n = h.width * h.height;
    if (bytes.size() - h.data_offset != n)
        throw FormatError("pgm: expected " + std::to_string(n) + " pixel bytes, got " +
                          std::to_string(bytes.size() - h.data_offset));
    GrayImage g{h.height, h.width, {}};
    g.pixels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) g.pixels.push_back(static_cast<std::uint8_t>(bytes[h.data_offset + i]));
    return g;
}

}  // namespace lvn
