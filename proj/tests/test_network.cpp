#include <gtest/gtest.h>

#include <cmath>

#include "nalign/model_io.hpp"
#include "nalign/network.hpp"

using namespace nalign;

namespace {

MatrixF batch_of(std::initializer_list<std::vector<float>> rows) {
    MatrixF m(rows.size(), rows.begin()->size());
    std::size_t r = 0;
    for (const auto& row : rows) std::ranges::copy(row, m.row(r++).begin());
    return m;
}

// Plain nested-loop forward pass kept apart from the engine.
std::vector<double> oracle_forward(const Network& net, std::vector<double> x) {
    for (const auto& layer : net.layers()) {
        std::vector<double> y(layer.out_dim());
        for (std::size_t o = 0; o < y.size(); ++o) {
            double s = layer.biases[o];
            for (std::size_t i = 0; i < x.size(); ++i) s += double(layer.weights(o, i)) * x[i];
            y[o] = s;
        }
        if (layer.activation == Activation::relu) {
            for (auto& v : y) v = std::max(v, 0.0);
        } else if (layer.activation == Activation::softmax) {
            double m = y[0];
            for (double v : y) m = std::max(m, v);
            double z = 0.0;
            for (auto& v : y) z += (v = std::exp(v - m));
            for (auto& v : y) v /= z;
        }
        x = y;
    }
    return x;
}

Network small_net(std::uint64_t seed, std::vector<std::size_t> hidden = {6, 5}, std::size_t in = 4) {
    return Network::create(in, hidden, 3, seed);
}

std::vector<double> random_input(std::size_t dim, Rng& rng) {
    std::vector<double> x(dim);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    return x;
}

}  // namespace

TEST(Forward, IdentityLayerPassesInputThrough) {
    DenseLayer l{MatrixF(3, 3), {0.f, 0.f, 0.f}, Activation::identity};
    for (std::size_t i = 0; i < 3; ++i) l.weights(i, i) = 1.f;
    Network net(3, {l});
    const auto trace = forward(net, batch_of({{1.5f, -2.f, 0.25f}}));
    EXPECT_EQ(trace.final()(0, 0), 1.5);
    EXPECT_EQ(trace.final()(0, 1), -2.0);
    EXPECT_EQ(trace.final()(0, 2), 0.25);
}

TEST(Forward, ReluClampsNegative) {
    DenseLayer l{MatrixF(1, 1, -1.f), {0.f}, Activation::relu};
    Network net(1, {l});
    EXPECT_EQ(forward(net, batch_of({{2.f}})).final()(0, 0), 0.0);
}

TEST(Forward, MatchesOracle) {
    const Network net = Network::create(5, std::vector<std::size_t>{7}, 3, 11);
    Rng rng(5);
    MatrixF batch(4, 5);
    for (auto& v : batch.data()) v = static_cast<float>(rng.uniform(-3, 3));
    const auto trace = forward(net, batch);
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        std::vector<double> x(batch.row(r).begin(), batch.row(r).end());
        const auto want = oracle_forward(net, x);
        for (std::size_t c = 0; c < want.size(); ++c) EXPECT_NEAR(trace.final()(r, c), want[c], 1e-6);
    }
}

TEST(Forward, WrongInputWidthNamesLayer) {
    const Network net = small_net(1);
    try {
        forward(net, MatrixF(1, 3));
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("hidden1"), std::string::npos);
    }
}

TEST(Network, LayerNamesArePositional) {
    const Network net = small_net(1);
    EXPECT_EQ(net.layer_name(0), "hidden1");
    EXPECT_EQ(net.layer_name(1), "hidden2");
    EXPECT_EQ(net.layer_name(2), "output");
    EXPECT_EQ(net.layer_index("hidden2"), 1u);
    EXPECT_THROW(net.layer_index("hidden9"), ValidationError);
}

TEST(Network, RejectsInconsistentShapes) {
    DenseLayer a{MatrixF(4, 3), std::vector<float>(4), Activation::relu};
    DenseLayer b{MatrixF(2, 5), std::vector<float>(2), Activation::softmax};
    EXPECT_THROW(Network(3, {a, b}), ShapeError);
    DenseLayer c{MatrixF(2, 4), std::vector<float>(3), Activation::softmax};
    EXPECT_THROW(Network(3, {a, c}), ShapeError);
}

TEST(Network, SameSeedSameWeights) {
    EXPECT_EQ(small_net(9), small_net(9));
    EXPECT_FALSE(small_net(9) == small_net(10));
}

TEST(InputGradient, MatchesCentralDifferences) {
    Rng rng(21);
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Network net = small_net(100 + seed);
        std::vector<Network> nets{net};
        TriggerObjective obj{"hidden2", std::vector<double>(5), {}};
        for (auto& t : obj.targets) t = rng.uniform(0.0, 2.0);
        const auto x = random_input(4, rng);
        const auto grad = input_gradient(nets, x, obj);
        const double h = 1e-4;
        for (std::size_t i = 0; i < x.size(); ++i) {
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double fd = (evaluate_objective(nets, xp, obj).loss - evaluate_objective(nets, xm, obj).loss) / (2 * h);
            // Skip coordinates where a relu kink sits inside the stencil.
            auto tp = forward_sample(net, xp, 2), tm = forward_sample(net, xm, 2);
            bool kink = false;
            for (std::size_t l = 0; l < 2; ++l) {
                for (std::size_t n = 0; n < tp.pre[l].size(); ++n) kink |= (tp.pre[l][n] > 0) != (tm.pre[l][n] > 0);
            }
            if (kink) continue;
            EXPECT_NEAR(grad[i], fd, 1e-3 * std::max(1.0, std::abs(fd)));
            ++checked;
        }
    }
    EXPECT_GT(checked, 60);
}

TEST(InputGradient, ZeroAtCurrentOutputs) {
    const Network net = small_net(3);
    std::vector<Network> nets{net};
    Rng rng(1);
    const auto x = random_input(4, rng);
    const auto trace = forward_sample(net, x, 2);
    TriggerObjective obj{"hidden2", trace.post[1], {}};
    for (double g : input_gradient(nets, x, obj)) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(InputGradient, EnsembleIsLinear) {
    const Network net = small_net(4);
    std::vector<Network> one{net}, two{net, net};
    Rng rng(2);
    const auto x = random_input(4, rng);
    TriggerObjective obj{"hidden1", std::vector<double>(6, 1.0), {}};
    const auto g1 = input_gradient(one, x, obj);
    const auto g2 = input_gradient(two, x, obj);
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g2[i], 2.0 * g1[i]);
}

TEST(InputGradient, SoftmaxLayerMatchesDifferences) {
    const Network net = small_net(5);
    std::vector<Network> nets{net};
    Rng rng(3);
    const auto x = random_input(4, rng);
    TriggerObjective obj{"output", {1.0, 0.0, 0.0}, {}};
    const auto grad = input_gradient(nets, x, obj);
    const double h = 1e-4;
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (evaluate_objective(nets, xp, obj).loss - evaluate_objective(nets, xm, obj).loss) / (2 * h);
        EXPECT_NEAR(grad[i], fd, 1e-3 * std::max(1e-3, std::abs(fd)));
    }
}

TEST(InputGradient, RejectsBadObjective) {
    std::vector<Network> nets{small_net(1)};
    std::vector<double> x(4, 0.0);
    EXPECT_THROW(input_gradient(nets, x, TriggerObjective{"hidden7", std::vector<double>(5), {}}), ValidationError);
    EXPECT_THROW(input_gradient(nets, x, TriggerObjective{"hidden2", std::vector<double>(3), {}}), ShapeError);
    std::vector<double> short_x(2, 0.0);
    EXPECT_THROW(input_gradient(nets, short_x, TriggerObjective{"hidden2", std::vector<double>(5), {}}), ShapeError);
}

TEST(ModelIo, RoundTripIsBitExact) {
    const Network net = small_net(12);
    const auto bytes = serialize_model(net);
    EXPECT_EQ(deserialize_model(bytes), net);
    EXPECT_EQ(serialize_model(deserialize_model(bytes)), bytes);
}

TEST(ModelIo, CorruptMagic) {
    auto bytes = serialize_model(small_net(12));
    bytes[1] = 'Z';
    EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelIo, TruncatedPayload) {
    const auto bytes = serialize_model(small_net(12));
    for (std::size_t keep : {std::size_t{0}, std::size_t{6}, bytes.size() / 2, bytes.size() - 1}) {
        std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(keep));
        EXPECT_THROW(deserialize_model(cut), FormatError);
    }
}

TEST(ModelIo, RecordFileIsNotAModel) {
    ByteWriter body;
    const auto bytes = frame_container(static_cast<std::uint16_t>(RecordTag::codebook), body);
    EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelIo, SaveLoadFile) {
    const Network net = small_net(13);
    const auto path = std::filesystem::temp_directory_path() / "nalign_test_model.naf";
    save_model(net, path);
    EXPECT_EQ(load_model(path), net);
    std::filesystem::remove(path);
}
