#include "test_support.hpp"

using namespace tt;

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, ForksWithDifferentSaltsDiverge) {
    Rng a = Rng(9).fork(1);
    Rng b = Rng(9).fork(2);
    EXPECT_NE(a.next(), b.next());
}

TEST(Rng, UniformAndIndexStayInRange) {
    Rng r(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(r.index(7), 7u);
    }
}

TEST(Tensor, DataSizeMustMatchShape) {
    EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeMismatch);
}

TEST(Tensor, StackBatchRejectsMixedShapes) {
    std::vector<Tensor<float>> items{Tensor<float>(Shape{1, 3, 4, 4}), Tensor<float>(Shape{1, 3, 5, 4})};
    EXPECT_THROW(stack_batch(items), ShapeMismatch);
}

// conv2d against a direct nested-loop convolution
TEST(Ops, Conv2dMatchesDirectLoop) {
    Rng rng(1);
    const auto x = random_tensor(Shape{2, 3, 5, 5}, rng);
    const auto w = random_tensor(Shape{4, 3, 3, 3}, rng);
    const auto b = random_tensor(Shape{1, 4, 1, 1}, rng);
    const int stride = 2, pad = 1;
    const auto y = conv2d(Var<double>(x), Var<double>(w), Var<double>(b), stride, pad).value();
    const int oh = (5 + 2 * pad - 3) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{2, 4, oh, oh}));
    double worst = 0.0;
    for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 4; ++o)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < oh; ++ox) {
                    double s = b[o];
                    for (int c = 0; c < 3; ++c)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                                s += w[w.index(o, c, ky, kx)] * x[x.index(n, c, iy, ix)];
                            }
                    worst = std::max(worst, std::abs(s - y[y.index(n, o, oy, ox)]));
                }
    EXPECT_LT(worst, 1e-12);
}

// transposed conv = scatter of each input pixel through the kernel
TEST(Ops, ConvTransposeMatchesScatterLoop) {
    Rng rng(2);
    const auto x = random_tensor(Shape{1, 2, 3, 3}, rng);
    const auto w = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto b = random_tensor(Shape{1, 3, 1, 1}, rng);
    const auto y = conv_transpose2d(Var<double>(x), Var<double>(w), Var<double>(b), 2, 1).value();
    ASSERT_EQ(y.shape(), (Shape{1, 3, 6, 6}));
    Tensor<double> ref(Shape{1, 3, 6, 6});
    for (int o = 0; o < 3; ++o)
        for (int yy = 0; yy < 6; ++yy)
            for (int xx = 0; xx < 6; ++xx) ref[ref.index(0, o, yy, xx)] = b[o];
    for (int c = 0; c < 2; ++c)
        for (int iy = 0; iy < 3; ++iy)
            for (int ix = 0; ix < 3; ++ix)
                for (int o = 0; o < 3; ++o)
                    for (int ky = 0; ky < 4; ++ky)
                        for (int kx = 0; kx < 4; ++kx) {
                            const int oy = iy * 2 - 1 + ky, ox = ix * 2 - 1 + kx;
                            if (oy < 0 || oy >= 6 || ox < 0 || ox >= 6) continue;
                            ref[ref.index(0, o, oy, ox)] += x[x.index(0, c, iy, ix)] * w[w.index(c, o, ky, kx)];
                        }
    EXPECT_LT(max_abs_diff(ref, y), 1e-12);
}

TEST(Ops, InstanceNormZeroMeanUnitVariance) {
    Rng rng(3);
    const auto x = random_tensor(Shape{2, 3, 4, 4}, rng, -5, 7);
    layers::InstanceNorm<double> norm(3);
    const auto y = norm(Var<double>(x)).value();
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 3; ++c) {
            double m = 0, v = 0;
            for (int i = 0; i < 16; ++i) m += y[y.index(n, c, 0, 0) + i];
            m /= 16;
            for (int i = 0; i < 16; ++i) v += std::pow(y[y.index(n, c, 0, 0) + i] - m, 2);
            v /= 16;
            EXPECT_NEAR(m, 0.0, 1e-12);
            EXPECT_NEAR(v, 1.0, 1e-3);  // eps in the denominator
        }
}

struct OpGradCase {
    const char* name;
    std::function<Var<double>(const std::vector<Var<double>>&)> op;
    std::vector<Shape> inputs;
};

class OpGradient : public ::testing::TestWithParam<int> {};

static std::vector<OpGradCase> op_cases() {
    auto sum_sq = [](const Var<double>& v) { return mean_squared_to(v, 0.3); };
    return {
        {"conv2d", [=](auto& in) { return sum_sq(conv2d(in[0], in[1], in[2], 2, 1)); },
         {{1, 2, 4, 4}, {3, 2, 4, 4}, {1, 3, 1, 1}}},
        {"conv_transpose2d", [=](auto& in) { return sum_sq(conv_transpose2d(in[0], in[1], in[2], 2, 1)); },
         {{1, 2, 4, 4}, {2, 3, 4, 4}, {1, 3, 1, 1}}},
        {"instance_norm", [=](auto& in) { return sum_sq(instance_norm(in[0], in[1], in[2])); },
         {{2, 2, 4, 4}, {1, 2, 1, 1}, {1, 2, 1, 1}}},
        {"linear", [=](auto& in) { return sum_sq(linear(in[0], in[1], in[2])); }, {{2, 3, 2, 2}, {5, 3, 2, 2}, {1, 5, 1, 1}}},
        {"sigmoid", [=](auto& in) { return sum_sq(sigmoid(in[0])); }, {{1, 2, 4, 4}}},
        {"tanh", [=](auto& in) { return sum_sq(tanh(in[0])); }, {{1, 2, 4, 4}}},
        {"leaky_relu", [=](auto& in) { return sum_sq(leaky_relu(in[0], 0.2)); }, {{1, 2, 4, 4}}},
        {"relu", [=](auto& in) { return sum_sq(relu(in[0])); }, {{1, 2, 4, 4}}},
        {"max_pool2", [=](auto& in) { return sum_sq(max_pool2(in[0])); }, {{1, 2, 4, 4}}},
        {"concat_slice",
         [=](auto& in) { return sum_sq(slice_channels(concat_channels(in[0], in[1]), 1, 3)); },
         {{1, 2, 4, 4}, {1, 2, 4, 4}}},
        {"add_sub_scale", [=](auto& in) { return sum_sq(scale(sub(add(in[0], in[1]), in[1]), 1.7)); },
         {{1, 1, 4, 4}, {1, 1, 4, 4}}},
        {"mean_abs_diff", [](auto& in) { return mean_abs_diff(in[0], in[1]); }, {{1, 1, 4, 4}, {1, 1, 4, 4}}},
        {"mean", [](auto& in) { return mean(in[0]); }, {{1, 1, 4, 4}}},
    };
}

TEST_P(OpGradient, MatchesFiniteDifferences) {
    const auto c = op_cases()[static_cast<std::size_t>(GetParam())];
    Rng rng(100 + GetParam());
    std::vector<Var<double>> in;
    for (const auto& s : c.inputs) in.push_back(leaf(random_tensor(s, rng)));
    const double err = gradient_error([&] { return c.op(in); }, in);
    EXPECT_LE(err, 1e-4) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range(0, static_cast<int>(op_cases().size())),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

TEST(Autograd, NoGradGuardStopsRecording) {
    Var<double> x(Tensor<double>::scalar(2.0), true);
    NoGradGuard no_grad;
    EXPECT_FALSE(scale(x, 3.0).requires_grad());
}

TEST(Autograd, GradientsAccumulateAcrossBackwardCalls) {
    Var<double> x(Tensor<double>(Shape{1, 1, 1, 2}, 1.0), true);
    backward(mean(x));
    backward(mean(x));
    EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
}

TEST(FreezeGuard, FrozenParamsGetNoGradientAndThawAfterwards) {
    Rng rng(4);
    layers::Linear<double> lin(3, 2, rng);
    ParamList<double> ps;
    lin.collect(ps, "lin");
    {
        FreezeGuard<double> guard(ps);
        for (const auto& p : ps) EXPECT_FALSE(p.param->trainable());
        Var<double> x(Tensor<double>(Shape{1, 3, 1, 1}, 0.5), true);
        backward(mean(lin(x)));
        for (const auto& p : ps) EXPECT_FALSE(p.param->has_grad());
        EXPECT_FALSE(x.grad().empty());
    }
    for (const auto& p : ps) EXPECT_TRUE(p.param->trainable());
}

TEST(Parameter, CopiesDoNotAlias) {
    Parameter<double> a(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
    Parameter<double> b = a;
    b.mutable_value()[0] = 5.0;
    EXPECT_EQ(a.value()[0], 1.0);
}

// Two Adam steps against the textbook update written out here.
TEST(Adam, MatchesReferenceUpdate) {
    AdamOptions o;
    o.learning_rate = 0.01;
    o.beta1 = 0.5;
    o.beta2 = 0.999;
    Parameter<double> p(Tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{1.0, -2.0}));
    ParamList<double> ps{{"p", &p}};
    Adam<double> opt(ps, o);

    std::vector<double> w{1.0, -2.0}, m(2, 0.0), v(2, 0.0);
    for (int t = 1; t <= 2; ++t) {
        opt.zero_grad();
        // loss = mean((p - 0.3)^2), grad = (p - 0.3)
        backward(mean_squared_to(p.var(), 0.3));
        opt.step();
        for (int j = 0; j < 2; ++j) {
            const double g = (w[j] - 0.3);
            m[j] = o.beta1 * m[j] + (1 - o.beta1) * g;
            v[j] = o.beta2 * v[j] + (1 - o.beta2) * g * g;
            const double mh = m[j] / (1 - std::pow(o.beta1, t));
            const double vh = v[j] / (1 - std::pow(o.beta2, t));
            w[j] -= o.learning_rate * mh / (std::sqrt(vh) + o.eps);
        }
        EXPECT_NEAR(p.value()[0], w[0], 1e-12);
        EXPECT_NEAR(p.value()[1], w[1], 1e-12);
    }
}

TEST(Adam, SkipsParamsWithoutGradient) {
    Parameter<double> p(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
    ParamList<double> ps{{"p", &p}};
    Adam<double> opt(ps, {});
    opt.step();
    EXPECT_EQ(p.value()[0], 1.0);
}

TEST(BlobIo, RoundTripAndHash) {
    TempDir dir;
    Rng rng(6);
    layers::Conv2d<float> a(3, 4, 3, 1, 1, rng), b(3, 4, 3, 1, 1, rng);
    ParamList<float> pa, pb;
    a.collect(pa, "conv");
    b.collect(pb, "conv");
    EXPECT_NE(params_hash(pa), params_hash(pb));
    const auto index = save_params(dir.path(), pa);
    load_params(dir.path(), index, pb);
    EXPECT_EQ(params_hash(pa), params_hash(pb));
    EXPECT_TRUE(bitwise_equal(snapshot(pa), pb));
}

TEST(BlobIo, TruncatedBlobIsCorrupt) {
    TempDir dir;
    Rng rng(7);
    layers::Linear<float> lin(4, 2, rng);
    ParamList<float> ps;
    lin.collect(ps, "lin");
    const auto index = save_params(dir.path(), ps);
    fs::resize_file(dir / "lin.weight.bin", 4);
    EXPECT_THROW(load_params(dir.path(), index, ps), CorruptCheckpoint);
}

TEST(BlobIo, FnvKnownValue) {
    // FNV-1a 64 of "a"
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
