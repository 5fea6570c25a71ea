#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "tiledefect/network.hpp"

using namespace tiledefect;
using namespace tiledefect::nn;

namespace {

Architecture small_arch() { return {8, 2, {{3, true}, {4, false}}}; }

std::vector<std::vector<double>> random_inputs(Rng& rng, std::size_t count, std::size_t length) {
    std::vector<std::vector<double>> xs(count, std::vector<double>(length));
    for (auto& x : xs) {
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    }
    return xs;
}

std::vector<const double*> pointers(const std::vector<std::vector<double>>& xs) {
    std::vector<const double*> p;
    for (const auto& x : xs) p.push_back(x.data());
    return p;
}

// Central finite differences of the mean loss, one parameter at a time.
double numeric_derivative(Network& net, std::size_t i, std::span<const double* const> in, std::span<const int> y,
                          const std::vector<DropoutMask>* masks, double h) {
    auto params = net.parameters();
    const double saved = params[i];
    params[i] = saved + h;
    const double up = net.loss(in, y, masks).loss;
    params[i] = saved - h;
    const double down = net.loss(in, y, masks).loss;
    params[i] = saved;
    return (up - down) / (2 * h);
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST(Sigmoid, RangeAndSymmetry) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    for (double z : {-800.0, -30.0, -1.0, 1.0, 30.0, 800.0}) {
        const double p = sigmoid(z);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        EXPECT_NEAR(p + sigmoid(-z), 1.0, 1e-15);
    }
}

TEST(BinaryCrossEntropy, ClampedAndFinite) {
    EXPECT_NEAR(binary_cross_entropy(0.5, 1), std::log(2.0), 1e-15);
    EXPECT_NEAR(binary_cross_entropy(0.25, 0), -std::log(0.75), 1e-15);
    EXPECT_TRUE(std::isfinite(binary_cross_entropy(0.0, 1)));
    EXPECT_TRUE(std::isfinite(binary_cross_entropy(1.0, 0)));
    EXPECT_NEAR(binary_cross_entropy(0.0, 1), -std::log(kProbEpsilon), 1e-12);
}

TEST(Network, ParameterLayout) {
    Network net(small_arch());
    // conv1: 3*2*9 + 3, conv2: 4*3*9 + 4, head: 4 + 1
    EXPECT_EQ(net.parameter_count(), 57u + 112u + 5u);
    EXPECT_EQ(net.head_offset(), 169u);
    EXPECT_EQ(net.input_length(), 2u * 8 * 8);
}

TEST(Network, ZeroHeadPredictsOneHalf) {
    Network net(small_arch());
    Rng rng(1);
    net.initialize(rng);
    net.zero_head();
    for (const auto& x : random_inputs(rng, 5, net.input_length())) EXPECT_EQ(net.predict(x), 0.5);
}

// Analytic gradient of the mean BCE against central differences, with and
// without dropout masks, over every parameter.
TEST(Network, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed);
        Network net(small_arch());
        net.initialize(rng);
        for (std::size_t i = net.head_offset(); i < net.parameter_count(); ++i) {
            net.parameters()[i] += rng.uniform(-0.5, 0.5);
        }
        const auto xs = random_inputs(rng, 4, net.input_length());
        const auto in = pointers(xs);
        const std::vector<int> y{1, 0, 0, 1};
        std::vector<DropoutMask> masks(4, DropoutMask(4, 0.0));
        for (auto& m : masks) {
            for (auto& v : m) v = rng.bernoulli(0.8) ? 1.0 / 0.8 : 0.0;
        }
        const std::vector<DropoutMask>* const no_masks = nullptr;
        for (const std::vector<DropoutMask>* mp : {no_masks, static_cast<const std::vector<DropoutMask>*>(&masks)}) {
            std::vector<double> grad(net.parameter_count());
            net.loss_and_gradient(in, y, mp, grad);
            int checked = 0;
            for (std::size_t i = 0; i < net.parameter_count(); ++i) {
                const double num = numeric_derivative(net, i, in, y, mp, 1e-6);
                if (std::abs(num) < 1e-7 && std::abs(grad[i]) < 1e-7) continue;
                ++checked;
                EXPECT_LT(relative_error(grad[i], num), 1e-4)
                    << "param " << i << " analytic " << grad[i] << " numeric " << num;
            }
            EXPECT_GT(checked, 50);
        }
    }
}

TEST(Network, GradientIsWrittenNotAccumulated) {
    Rng rng(4);
    Network net(small_arch());
    net.initialize(rng);
    const auto xs = random_inputs(rng, 2, net.input_length());
    const auto in = pointers(xs);
    const std::vector<int> y{1, 0};
    std::vector<double> a(net.parameter_count()), b(net.parameter_count(), 123.0);
    net.loss_and_gradient(in, y, nullptr, a);
    net.loss_and_gradient(in, y, nullptr, b);
    EXPECT_EQ(a, b);
}

// With no convolution layers the features are the global average of the
// input channels, so any permutation of the spatial positions leaves them
// unchanged.
TEST(GlobalAveragePooling, InvariantToSpatialPermutation) {
    Network net({6, 3, {}});
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = random_inputs(rng, 1, net.input_length())[0];
        std::vector<std::size_t> perm(36);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        std::vector<double> y(x.size());
        for (int c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < 36; ++i) y[c * 36 + i] = x[c * 36 + perm[i]];
        }
        const auto fx = net.features(x);
        const auto fy = net.features(y);
        ASSERT_EQ(fx.size(), 3u);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(fx[c], fy[c], 1e-12);
    }
}

TEST(GlobalAveragePooling, ConstantMapPoolsToConstant) {
    Network net({5, 2, {}});
    std::vector<double> x(net.input_length());
    std::fill(x.begin(), x.begin() + 25, 0.375);
    std::fill(x.begin() + 25, x.end(), -0.75);
    const auto f = net.features(x);
    EXPECT_NEAR(f[0], 0.375, 1e-15);
    EXPECT_NEAR(f[1], -0.75, 1e-15);
}

TEST(Network, RejectsWrongInputLength) {
    Network net(small_arch());
    std::vector<double> x(net.input_length() - 1);
    EXPECT_THROW(net.predict(x), std::invalid_argument);
}
