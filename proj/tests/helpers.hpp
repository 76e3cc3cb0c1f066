#pragma once

#include <cmath>
#include <vector>

#include "lvn/dataset.hpp"
#include "lvn/network.hpp"
#include "lvn/rng.hpp"
#include "lvn/train.hpp"

namespace lvn::test {

// Small net covering every layer kind, with an odd spatial size so pooling
// truncates.
template <typename T = float>
BasicNetwork<T> small_net(std::uint64_t seed, std::size_t classes = 4) {
    BasicNetwork<T> net({9, 9, 3},
                        {LayerSpec::conv2d(3, 4, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2),
                         LayerSpec::conv2d(2, 5, 0), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(classes)},
                        classes);
    net.init_glorot(seed);
    // Nonzero biases so the bias paths are exercised.
    Rng rng(seed, "test-bias");
    for (auto& p : net.params())
        if (!p.empty())
            for (T& b : p.bias.data()) b = static_cast<T>(rng.uniform(-0.1, 0.1));
    return net;
}

template <typename T = float>
BasicTensor<T> random_input(Rng& rng, std::size_t h, std::size_t w, std::size_t c = 3) {
    BasicTensor<T> t({h, w, c});
    for (T& v : t.data()) v = static_cast<T>(rng.uniform());
    return t;
}

inline Image random_image(Rng& rng, std::size_t h, std::size_t w) { return Image(random_input<float>(rng, h, w)); }

// Victim trained once on a reduced synthetic set and shared across tests.
struct SmallWorld {
    SynthConfig synth;
    TrainSet train;
    HeldoutSet heldout;
    Network net;
};

inline const SmallWorld& small_world() {
    static const SmallWorld world = [] {
        SynthConfig sc;
        sc.n_per_class = 40;
        TrainSet train = synth_dataset<Split::train>(sc);
        SynthConfig hc = sc;
        hc.n_per_class = 10;
        HeldoutSet heldout = synth_dataset<Split::heldout>(hc);
        TrainConfig tc;
        tc.epochs = 6;
        Network net = train_victim(train, tc).network;
        return SmallWorld{sc, std::move(train), std::move(heldout), std::move(net)};
    }();
    return world;
}

}  // namespace lvn::test
