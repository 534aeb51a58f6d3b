#include "test_support.hpp"

using namespace tt;

namespace {

NetConfig small_net(int size = 16) {
    NetConfig c;
    c.image_size = size;
    c.base_channels = 2;
    c.down_stages = 2;
    c.res_blocks = 1;
    c.disc_channels = 2;
    c.disc_depth = 2;
    c.class_count = 3;
    return c;
}

// Plain per-pixel evaluation of m*C + (1-m)*I.
Tensor<double> sam_loop(const Tensor<double>& m, const Tensor<double>& c, const Tensor<double>& masked) {
    Tensor<double> out(c.shape());
    const Shape s = c.shape();
    for (int n = 0; n < s.n; ++n)
        for (int ch = 0; ch < s.c; ++ch)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    const double a = m.at(n, 0, y, x);
                    out.at(n, ch, y, x) = a * c.at(n, ch, y, x) + (1.0 - a) * masked.at(n, ch, y, x);
                }
    return out;
}

}  // namespace

TEST(Sam, ZeroMaskGivesMaskedImageExactly) {
    Rng rng(1);
    const auto c = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto im = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto out = sam_compose(Var<double>(Tensor<double>(Shape{2, 1, 4, 4}, 0.0)), Var<double>(c), Var<double>(im));
    EXPECT_EQ(out.value(), im);
}

TEST(Sam, UnitMaskGivesColorExactly) {
    Rng rng(2);
    const auto c = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto im = random_tensor(Shape{2, 3, 4, 4}, rng);
    const auto out = sam_compose(Var<double>(Tensor<double>(Shape{2, 1, 4, 4}, 1.0)), Var<double>(c), Var<double>(im));
    EXPECT_EQ(out.value(), c);
}

TEST(Sam, RandomCaseMatchesLoopOracle) {
    Rng rng(3);
    const auto m = random_tensor(Shape{1, 1, 4, 4}, rng, 0, 1);
    const auto c = random_tensor(Shape{1, 3, 4, 4}, rng);
    const auto im = random_tensor(Shape{1, 3, 4, 4}, rng);
    const auto out = sam_compose(Var<double>(m), Var<double>(c), Var<double>(im));
    EXPECT_LE(max_abs_diff(out.value(), sam_loop(m, c, im)), 1e-12);
}

TEST(Sam, PixelsWithZeroMaskAreBitExact) {
    Rng rng(4);
    auto m = random_tensor(Shape{1, 1, 4, 4}, rng, 0, 1);
    for (std::size_t i = 0; i < m.size(); i += 2) m[i] = 0.0;
    const auto c = random_tensor(Shape{1, 3, 4, 4}, rng);
    const auto im = random_tensor(Shape{1, 3, 4, 4}, rng);
    const auto out = sam_compose(Var<double>(m), Var<double>(c), Var<double>(im)).value();
    for (int ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < 16; i += 2) EXPECT_EQ(out[ch * 16 + i], im[ch * 16 + i]);
}

TEST(Sam, ShapeMismatchRejected) {
    Var<double> m(Tensor<double>(Shape{1, 1, 4, 4}));
    Var<double> c(Tensor<double>(Shape{1, 3, 4, 4}));
    EXPECT_THROW(sam_compose(m, c, Var<double>(Tensor<double>(Shape{1, 3, 4, 5}))), ShapeMismatch);
    EXPECT_THROW(sam_compose(Var<double>(Tensor<double>(Shape{1, 2, 4, 4})), c, c), ShapeMismatch);
}

TEST(Sam, GradientMatchesFiniteDifferences) {
    Rng rng(5);
    auto m = leaf(random_tensor(Shape{1, 1, 4, 4}, rng, 0.1, 0.9));
    auto c = leaf(random_tensor(Shape{1, 3, 4, 4}, rng));
    auto im = leaf(random_tensor(Shape{1, 3, 4, 4}, rng));
    EXPECT_LE(gradient_error([&] { return mean_squared_to(sam_compose(m, c, im), 0.25); }, {m, c, im}), 1e-4);
}

TEST(NetConfig, DefaultLatentShape) {
    NetConfig c;
    Generator<float> g(c, 1);
    const auto z = g.encode_image(Var<float>(Tensor<float>(Shape{1, 3, 64, 64})));
    EXPECT_EQ(z.shape(), (Shape{1, c.latent_channels(), 16, 16}));
    EXPECT_EQ(c.latent_channels(), 32);
    const auto e = g.encode_edge(Var<float>(Tensor<float>(Shape{1, 1, 64, 64})));
    EXPECT_EQ(e.shape(), z.shape());
}

TEST(NetConfig, ValidationAndJsonRoundTrip) {
    NetConfig c;
    c.image_size = 30;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c.image_size = 64;
    c.edge_channels = 2;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c.edge_channels = 3;
    EXPECT_EQ(net_config_from_json(nlohmann::json::parse(to_json(c).dump())), c);
}

TEST(Generator, EncodersDeterministicAndFinite) {
    Generator<float> g(small_net(), 7);
    Var<float> zeros(Tensor<float>(Shape{2, 3, 16, 16}));
    const auto a = g.encode_image(zeros).value();
    const auto b = g.encode_image(zeros).value();
    EXPECT_EQ(a, b);
    EXPECT_TRUE(a.all_finite());
    const auto e = g.encode_edge(Var<float>(Tensor<float>(Shape{2, 1, 16, 16}))).value();
    EXPECT_TRUE(e.all_finite());
}

TEST(Generator, WrongInputSizeRejected) {
    Generator<float> g(small_net(), 7);
    EXPECT_THROW(g.encode_image(Var<float>(Tensor<float>(Shape{1, 3, 8, 8}))), ShapeMismatch);
    EXPECT_THROW(g.encode_edge(Var<float>(Tensor<float>(Shape{1, 1, 32, 32}))), ShapeMismatch);
    EXPECT_THROW(g.encode_edge(Var<float>(Tensor<float>(Shape{1, 3, 16, 16}))), ShapeMismatch);
}

TEST(Generator, DecodeRangesAndSaturation) {
    const auto cfg = small_net();
    Generator<double> g(cfg, 8);
    Rng rng(9);
    const Shape fused{1, 2 * cfg.latent_channels(), 4, 4};
    auto [m, c] = g.decode(Var<double>(random_tensor(fused, rng)));
    EXPECT_EQ(m.shape(), (Shape{1, 1, 16, 16}));
    EXPECT_EQ(c.shape(), (Shape{1, 3, 16, 16}));
    for (double v : m.value().values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    for (double v : c.value().values()) {
        EXPECT_GT(v, -1.0);
        EXPECT_LT(v, 1.0);
    }
    // push the mask logit far positive through the head bias
    for (auto& p : g.decoder_params()) {
        if (p.name == "decoder.head.bias") p.param->mutable_value()[0] = 1e6;
    }
    auto [ms, cs] = g.decode(Var<double>(random_tensor(fused, rng)));
    EXPECT_TRUE(ms.value().all_finite());
    for (double v : ms.value().values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Generator, DecodeRejectsWrongChannelCount) {
    const auto cfg = small_net();
    Generator<float> g(cfg, 8);
    EXPECT_THROW(g.decode(Var<float>(Tensor<float>(Shape{1, cfg.latent_channels(), 4, 4}))), ShapeMismatch);
}

// decode on a 4x4 fused latent: gradient w.r.t. the latent and every decoder
// parameter
TEST(Generator, DecodeGradientMatchesFiniteDifferences) {
    const auto cfg = small_net();
    Generator<double> g(cfg, 10);
    Rng rng(11);
    auto fused = leaf(random_tensor(Shape{1, 2 * cfg.latent_channels(), 4, 4}, rng));
    auto leaves = param_vars(g.decoder_params());
    leaves.push_back(fused);
    auto f = [&] {
        auto [m, c] = g.decode(fused);
        return add(mean_squared_to(m, 0.3), mean_squared_to(c, -0.2));
    };
    EXPECT_LE(gradient_error(f, leaves), 1e-4);
}

TEST(Generator, ForwardEditRecomposes) {
    const auto cfg = small_net();
    Generator<float> g(cfg, 12);
    Rng rng(13);
    const auto masked = random_tensor<float>(Shape{2, 3, 16, 16}, rng);
    const auto edge = random_tensor<float>(Shape{2, 1, 16, 16}, rng, 0, 1);
    const auto out = g.forward_edit(Var<float>(masked), Var<float>(edge));
    EXPECT_EQ(out.composed.shape(), (Shape{2, 3, 16, 16}));
    const auto& m = out.mask.value();
    const auto& c = out.color.value();
    double worst = 0.0;
    for (int n = 0; n < 2; ++n)
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    const double a = m.at(n, 0, y, x);
                    const double want = a * c.at(n, ch, y, x) + (1 - a) * masked.at(n, ch, y, x);
                    worst = std::max(worst, std::abs(want - out.composed.value().at(n, ch, y, x)));
                }
    EXPECT_LE(worst, 1e-6);
    const auto again = g.forward_edit(Var<float>(masked), Var<float>(edge));
    EXPECT_EQ(again.composed.value(), out.composed.value());
}

TEST(Generator, SeedsAndCopies) {
    const auto cfg = small_net();
    Generator<float> a(cfg, 1), b(cfg, 1), c(cfg, 2);
    EXPECT_EQ(params_hash(a.params()), params_hash(b.params()));
    EXPECT_NE(params_hash(a.params()), params_hash(c.params()));
    Generator<float> copy = a;
    copy.params()[0].param->mutable_value()[0] += 1.0f;
    EXPECT_EQ(params_hash(a.params()), params_hash(b.params()));
}

TEST(Generator, ParameterGroupsPartitionTheNetwork) {
    Generator<float> g(small_net(), 1);
    const auto all = g.params();
    EXPECT_EQ(all.size(), g.phi_img_params().size() + g.phi_edge_params().size() + g.decoder_params().size());
    std::set<std::string> names;
    for (const auto& p : all) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(Discriminator, ShapesRangesAndDepth) {
    const auto cfg = small_net(16);
    Discriminator<float> d(cfg, 3);
    Rng rng(4);
    const auto out = d(Var<float>(random_tensor<float>(Shape{2, 3, 16, 16}, rng)));
    EXPECT_EQ(out.realness.shape(), (Shape{2, 1, 1, 1}));
    EXPECT_EQ(out.attribute_probs.shape(), (Shape{2, 3, 1, 1}));
    EXPECT_EQ(static_cast<int>(out.features.size()), cfg.disc_depth);
    EXPECT_EQ(d.depth(), cfg.disc_depth);
    for (float p : out.attribute_probs.value().values()) {
        EXPECT_GT(p, 0.0f);
        EXPECT_LT(p, 1.0f);
    }
    EXPECT_THROW(d(Var<float>(Tensor<float>(Shape{1, 3, 8, 8}))), ShapeMismatch);
}

// 4x4 image, two trunk stages down to 1x1
TEST(Discriminator, GradientMatchesFiniteDifferences) {
    const auto cfg = small_net(4);
    Discriminator<double> d(cfg, 5);
    Rng rng(6);
    auto img = leaf(random_tensor(Shape{2, 3, 4, 4}, rng));
    auto leaves = param_vars(d.params());
    leaves.push_back(img);
    auto f = [&] {
        auto out = d(img);
        return add(mean_squared_to(out.realness, 1.0), mean_squared_to(out.attribute_probs, 0.1));
    };
    EXPECT_LE(gradient_error(f, leaves), 1e-4);
}

TEST(Discriminator, ParamNames) {
    Discriminator<float> d(small_net(), 1);
    const auto ps = d.params();
    EXPECT_EQ(ps.front().name, "trunk0.weight");
    EXPECT_EQ(ps.back().name, "attribute_head.bias");
}
