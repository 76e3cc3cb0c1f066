#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "lvn/network.hpp"

using namespace lvn;
using lvn::test::random_input;
using lvn::test::small_net;

namespace {

// Direct loops over the documented layouts, independent of the library's
// kernels: conv weight [out, k, k, in], dense weight [out, in], HWC activations.
std::vector<double> reference_forward(const Network64& net, const Tensor64& input) {
    std::vector<double> a(input.data().begin(), input.data().end());
    Shape3 s = net.input_shape();
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        const LayerSpec& L = net.layers()[li];
        const auto& P = net.params()[li];
        if (L.kind == LayerKind::conv2d) {
            const long k = L.kernel, pad = L.padding;
            const std::size_t oh = s[0] + 2 * pad - k + 1, ow = s[1] + 2 * pad - k + 1, oc = L.out_channels;
            std::vector<double> o(oh * ow * oc);
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x)
                    for (std::size_t f = 0; f < oc; ++f) {
                        double acc = P.bias[f];
                        for (long dy = 0; dy < k; ++dy)
                            for (long dx = 0; dx < k; ++dx) {
                                const long iy = static_cast<long>(y) + dy - pad, ix = static_cast<long>(x) + dx - pad;
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(s[0]) || ix >= static_cast<long>(s[1]))
                                    continue;
                                for (std::size_t c = 0; c < s[2]; ++c)
                                    acc += P.weight[((f * k + dy) * k + dx) * s[2] + c] * a[(iy * s[1] + ix) * s[2] + c];
                            }
                        o[(y * ow + x) * oc + f] = acc;
                    }
            a = o;
            s = {oh, ow, oc};
        } else if (L.kind == LayerKind::relu) {
            for (double& v : a) v = std::max(v, 0.0);
        } else if (L.kind == LayerKind::maxpool2d) {
            const std::size_t w = L.window, oh = s[0] / w, ow = s[1] / w;
            std::vector<double> o(oh * ow * s[2], -std::numeric_limits<double>::infinity());
            for (std::size_t y = 0; y < oh * w; ++y)
                for (std::size_t x = 0; x < ow * w; ++x)
                    for (std::size_t c = 0; c < s[2]; ++c) {
                        double& m = o[((y / w) * ow + x / w) * s[2] + c];
                        m = std::max(m, a[(y * s[1] + x) * s[2] + c]);
                    }
            a = o;
            s = {oh, ow, s[2]};
        } else if (L.kind == LayerKind::flatten) {
            s = {1, 1, s[0] * s[1] * s[2]};
        } else {
            std::vector<double> o(L.out_features);
            for (std::size_t j = 0; j < o.size(); ++j) {
                o[j] = P.bias[j];
                for (std::size_t i = 0; i < a.size(); ++i) o[j] += P.weight[j * a.size() + i] * a[i];
            }
            a = o;
            s = {1, 1, L.out_features};
        }
    }
    return a;
}

}  // namespace

TEST_SUITE("network") {
    TEST_CASE("softmax known values and stability") {
        const std::vector<double> p = softmax(std::span<const double>(std::vector<double>{0.0, std::log(2.0)}));
        CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

        const std::vector<float> big{1000.0f, 1000.0f, -1000.0f};
        const auto q = softmax(std::span<const float>(big));
        CHECK(q[0] == doctest::Approx(0.5));
        CHECK(q[1] == doctest::Approx(0.5));
        CHECK(q[2] == 0.0f);

        Rng rng(7);
        for (int t = 0; t < 50; ++t) {
            std::vector<float> z(10);
            for (float& v : z) v = static_cast<float>(rng.uniform(-30, 30));
            const auto r = softmax(std::span<const float>(z));
            double sum = 0;
            for (float v : r) {
                CHECK(v >= 0.0f);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
        CHECK_THROWS_AS(softmax(std::span<const float>()), std::invalid_argument);
    }

    TEST_CASE("argmax ties go to the lowest index") {
        const std::vector<float> v{0.1f, 0.4f, 0.4f, 0.1f};
        CHECK(argmax(std::span<const float>(v)) == 1);
        const std::vector<float> flat(5, 0.2f);
        CHECK(argmax(std::span<const float>(flat)) == 0);
    }

    TEST_CASE("forward matches the reference loops") {
        Rng rng(11);
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const Network64 net = small_net<double>(seed);
            for (int i = 0; i < 3; ++i) {
                const Tensor64 x = random_input<double>(rng, 9, 9);
                const auto got = net.forward(x);
                const auto want = reference_forward(net, x);
                REQUIRE(got.size() == want.size());
                for (std::size_t j = 0; j < want.size(); ++j) CHECK(got[j] == doctest::Approx(want[j]).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("victim shape and logits") {
        const Network net = Network::victim(8, 32);
        CHECK(net.input_shape() == Shape3{32, 32, 3});
        CHECK(net.num_classes() == 8);
        Rng rng(3);
        CHECK(net.forward(random_input(rng, 32, 32)).size() == 8);
    }

    TEST_CASE("constructor rejects shapes that do not compose") {
        CHECK_THROWS_AS(Network({8, 8, 3}, {LayerSpec::flatten(), LayerSpec::dense(3)}, 4), std::invalid_argument);
        CHECK_THROWS_AS(Network({4, 4, 3}, {LayerSpec::conv2d(5, 2, 0), LayerSpec::flatten(), LayerSpec::dense(2)}, 2),
                        std::invalid_argument);
        CHECK_THROWS_AS(Network({4, 4, 3}, {LayerSpec::maxpool2d(8), LayerSpec::flatten(), LayerSpec::dense(2)}, 2),
                        std::invalid_argument);
        CHECK_THROWS_AS(Network({4, 4, 3}, {LayerSpec::dense(2)}, 2), std::invalid_argument);
        CHECK_THROWS_AS(Network({4, 4, 3}, {LayerSpec::conv2d(3, 0, 1), LayerSpec::flatten(), LayerSpec::dense(2)}, 2),
                        std::invalid_argument);
    }

    TEST_CASE("forward rejects a wrong input shape") {
        const Network net = small_net(1);
        CHECK_THROWS_AS(net.forward(Tensor({8, 9, 3})), std::invalid_argument);
    }

    TEST_CASE("glorot init is seeded and bounded") {
        Network a = small_net(5), b = small_net(5), c = small_net(6);
        CHECK(a == b);
        CHECK_FALSE(a == c);
        Network v = Network::victim(8);
        v.init_glorot(42);
        const auto& w = v.params()[0].weight;
        const double limit = std::sqrt(6.0 / (3 * 3 * 3 + 3 * 3 * 8));
        for (float x : w.data()) CHECK(std::abs(x) <= limit);
        for (float x : v.params()[0].bias.data()) CHECK(x == 0.0f);
    }

    TEST_CASE("input and parameter gradients match central differences in 64-bit") {
        Rng rng(21);
        const Network64 net = small_net<double>(9);
        const Tensor64 x = random_input<double>(rng, 9, 9);
        std::vector<double> w(4);
        for (double& v : w) v = rng.uniform(-1, 1);
        const auto f = [&](const Network64& n, const Tensor64& in) {
            const auto z = n.forward(in);
            double s = 0;
            for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * z[i];
            return s;
        };
        const Tensor64 g = net.input_gradient(x, w);
        const double h = 1e-6;
        for (int t = 0; t < 30; ++t) {
            const std::size_t i = rng.below(x.size());
            Tensor64 p = x, m = x;
            p[i] += h;
            m[i] -= h;
            const double fd = (f(net, p) - f(net, m)) / (2 * h);
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
        }

        auto grads = net.zero_grads();
        net.backward(net.trace(x), w, &grads);
        for (std::size_t li = 0; li < grads.size(); ++li) {
            if (grads[li].empty()) continue;
            for (int t = 0; t < 10; ++t) {
                const std::size_t i = rng.below(grads[li].weight.size());
                Network64 p = net, m = net;
                p.params()[li].weight[i] += h;
                m.params()[li].weight[i] -= h;
                CHECK(grads[li].weight[i] == doctest::Approx((f(p, x) - f(m, x)) / (2 * h)).epsilon(1e-6));
            }
            const std::size_t j = rng.below(grads[li].bias.size());
            Network64 p = net, m = net;
            p.params()[li].bias[j] += h;
            m.params()[li].bias[j] -= h;
            CHECK(grads[li].bias[j] == doctest::Approx((f(p, x) - f(m, x)) / (2 * h)).epsilon(1e-6));
        }
    }

    TEST_CASE("incremental trace is bit-identical to a full trace") {
        Rng rng(4);
        Network victim = Network::victim(8, 32);
        victim.init_glorot(17);
        const Network small = small_net(3, 8);
        for (const Network* net : {&small, static_cast<const Network*>(&victim)}) {
            const std::size_t n = net->input_shape()[0];
            const Tensor base_x = random_input(rng, n, n);
            const auto base = net->trace(base_x);
            for (int t = 0; t < 40; ++t) {
                const std::size_t s = 1 + rng.below(std::min<std::size_t>(8, n));
                const std::size_t r = rng.below(n - s + 1), c = rng.below(n - s + 1);
                Tensor x = base_x;
                for (std::size_t y = r; y < r + s; ++y)
                    for (std::size_t xx = c; xx < c + s; ++xx)
                        for (std::size_t k = 0; k < 3; ++k) x.at(y, xx, k) = static_cast<float>(rng.uniform(-2, 2));
                const Region region{r, r + s, c, c + s};
                const auto full = net->trace(x);
                const auto inc = net->trace(x, base, region);
                CHECK(inc.activations == full.activations);

                std::vector<float> gl(8);
                for (float& v : gl) v = static_cast<float>(rng.uniform(-1, 1));
                const Tensor g_full = net->backward(full, gl);
                const Tensor g_reg = net->backward(inc, gl, region);
                bool match = true;
                for (std::size_t y = 0; y < n; ++y)
                    for (std::size_t xx = 0; xx < n; ++xx)
                        for (std::size_t k = 0; k < 3; ++k) {
                            const float want = region.contains(y, xx) ? g_full.at(y, xx, k) : 0.0f;
                            match = match && g_reg.at(y, xx, k) == want;
                        }
                CHECK(match);
            }
        }
    }

    TEST_CASE("cast round trip preserves float parameters") {
        const Network a = small_net(8);
        CHECK(a.cast<double>().cast<float>() == a);
    }
}
