#include <thread>

#include "test_support.hpp"

using namespace tt;

namespace {

struct Part {
    std::string name;
    std::string content;
    std::string type = "application/octet-stream";
};

std::string bytes_str(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

std::string png_file(const fs::path& p) { return bytes_str(read_file_bytes(p)); }

// In-process server on an ephemeral port plus a trained tiny checkpoint.
class ServiceFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir();
        manifest_ = new DatasetManifest(tiny_dataset(*dir_ / "data", 12, 3));
        auto run = run_full<float>(tiny_config(), *manifest_);
        save_checkpoint(run.adversarial, *dir_ / "adv");
        save_checkpoint(*run.recon, *dir_ / "recon");
        SyntheticSpec big;
        big.image_size = 64;
        big.n_images = 2;
        big_ = new DatasetManifest(generate_synthetic(big, 9, *dir_ / "big"));
    }
    static void TearDownTestSuite() {
        delete big_;
        delete manifest_;
        delete dir_;
    }

    void SetUp() override {
        service_ = std::make_unique<EditService>();
        bind_routes(server_, *service_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(60, 0);
        return c;
    }

    httplib::Result post_edit(const std::vector<Part>& parts) const {
        httplib::MultipartFormDataItems items;
        for (const auto& p : parts) items.push_back({p.name, p.content, p.name + ".bin", p.type});
        return client().Post("/v1/edit", items);
    }

    static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

    static std::string ref_png(std::size_t i = 0) { return png_file(manifest_->records[i].resolved_path); }
    static std::string target_png() { return png_file(manifest_->records[1].resolved_path); }

    static TempDir* dir_;
    static DatasetManifest* manifest_;
    static DatasetManifest* big_;

    std::unique_ptr<EditService> service_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

TempDir* ServiceFixture::dir_ = nullptr;
DatasetManifest* ServiceFixture::manifest_ = nullptr;
DatasetManifest* ServiceFixture::big_ = nullptr;

}  // namespace

TEST_F(ServiceFixture, HealthReportsLoadingThenReady) {
    auto r = client().Get("/v1/health");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(body(r)["status"], "loading");
    service_->load(*dir_ / "adv");
    r = client().Get("/v1/health");
    EXPECT_EQ(body(r)["status"], "ready");
    auto ck = load_checkpoint<float>(*dir_ / "adv");
    EXPECT_EQ(body(r)["checkpoint_hash"], ck.parameters_hash());
    EXPECT_GE(body(r)["uptime_s"].get<double>(), 0.0);
}

TEST_F(ServiceFixture, NotLoadedIs503) {
    auto m = client().Get("/v1/model");
    ASSERT_TRUE(m);
    EXPECT_EQ(m->status, 503);
    EXPECT_EQ(body(m)["code"], "MODEL_NOT_LOADED");
    auto e = post_edit({{"reference", ref_png()}, {"target", target_png()}});
    ASSERT_TRUE(e);
    EXPECT_EQ(e->status, 503);
}

TEST_F(ServiceFixture, ModelEchoesCheckpoint) {
    service_->load(*dir_ / "adv");
    auto r = client().Get("/v1/model");
    ASSERT_TRUE(r);
    const auto j = body(r);
    const auto ck = load_checkpoint<float>(*dir_ / "adv");
    EXPECT_EQ(j["stage"], "adversarial");
    EXPECT_EQ(j["image_size"], 32);
    EXPECT_EQ(j["attribute_kind"], "collar");
    EXPECT_EQ(j["class_count"], ck.config.net.class_count);
    EXPECT_EQ(j["config_hash"], ck.config_hash());
}

TEST_F(ServiceFixture, ReconCheckpointRefused) {
    EXPECT_THROW(service_->load(*dir_ / "recon"), StageMismatch);
    EXPECT_FALSE(service_->ready());
}

TEST_F(ServiceFixture, EditReturnsNetworkSizedImage) {
    service_->load(*dir_ / "adv");
    // reference at 64x64, network at 32x32
    auto r = post_edit({{"reference", png_file(big_->records[0].resolved_path)},
                        {"target", png_file(big_->records[1].resolved_path)},
                        {"options", R"({"return_mask": true, "return_edge": true})"}});
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    const auto j = body(r);
    EXPECT_EQ(j["width"], 32);
    EXPECT_EQ(j["height"], 32);
    const auto edited = decode_png(base64_decode(j["edited_image"]), 3).image;
    EXPECT_EQ(edited.width, 32);
    EXPECT_EQ(edited.height, 32);
    EXPECT_TRUE(j.contains("mask_preview"));
    EXPECT_TRUE(j.contains("edge_preview"));
    EXPECT_TRUE(j["predicted_type"].is_null());
    EXPECT_GE(j["latency_ms"].get<double>(), 0.0);
}

TEST_F(ServiceFixture, EdgeMapSourceAccepted) {
    service_->load(*dir_ / "adv");
    Image8 edge(32, 32, 1, 0);
    for (int x = 8; x < 24; ++x) edge.at(x, 6, 0) = 255;
    auto r = post_edit({{"reference", ref_png()}, {"edge", bytes_str(encode_png(edge))}});
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200) << r->body;
}

TEST_F(ServiceFixture, IdenticalRequestsGiveIdenticalBytes) {
    service_->load(*dir_ / "adv");
    const std::vector<Part> req{{"reference", ref_png()}, {"target", target_png()}};
    const auto first = body(post_edit(req))["edited_image"].get<std::string>();
    EXPECT_EQ(body(post_edit(req))["edited_image"].get<std::string>(), first);

    std::vector<std::string> got(6);
    std::vector<std::thread> ts;
    for (std::size_t i = 0; i < got.size(); ++i) {
        ts.emplace_back([&, i] {
            auto r = post_edit(req);
            if (r && r->status == 200) got[i] = body(r)["edited_image"].get<std::string>();
        });
    }
    for (auto& t : ts) t.join();
    for (const auto& g : got) EXPECT_EQ(g, first);
}

TEST_F(ServiceFixture, RequestsDoNotLeakIntoEachOther) {
    service_->load(*dir_ / "adv");
    const std::vector<Part> a{{"reference", ref_png(0)}, {"target", target_png()}};
    const std::vector<Part> b{{"reference", ref_png(2)}, {"target", ref_png(3)}};
    const auto before = body(post_edit(a))["edited_image"];
    const auto other = body(post_edit(b))["edited_image"];
    EXPECT_NE(other, before);
    EXPECT_EQ(body(post_edit(a))["edited_image"], before);
}

// with m forced to 0 the output is the masked reference, pixel for pixel
TEST_F(ServiceFixture, ZeroMaskReturnsMaskedReference) {
    service_->load(*dir_ / "adv");
    auto r = post_edit({{"reference", ref_png()},
                        {"target", target_png()},
                        {"options", R"({"debug_force_mask_zero": true, "return_mask": true})"}});
    ASSERT_EQ(r->status, 200) << r->body;
    const auto j = body(r);
    const auto edited = decode_png(base64_decode(j["edited_image"]), 3).image;
    const auto mask = decode_png(base64_decode(j["mask_preview"]), 1).image;
    for (auto v : mask.pixels) EXPECT_EQ(v, 0);

    const auto ck = load_checkpoint<float>(*dir_ / "adv");
    const Image8 reference = read_png(manifest_->records[0].resolved_path).image;
    const auto region = default_service_region(reference.width, reference.height);
    const auto prepared = prepare_image(normalize<float>(reference), region, -1, ck.config.preprocess);
    const Image8 expected = denormalize(masked_input(prepared, ck.config.preprocess).pixels);
    EXPECT_EQ(edited, expected);
}

TEST_F(ServiceFixture, ErrorMatrix) {
    service_->load(*dir_ / "adv");
    struct Case {
        const char* what;
        std::vector<Part> parts;
        int status;
        const char* code;
    };
    const std::string ref = ref_png(), tgt = target_png();
    const std::vector<Case> cases{
        {"no source", {{"reference", ref}}, 400, "INVALID_ATTRIBUTE_SOURCE"},
        {"two sources", {{"reference", ref}, {"target", tgt}, {"edge", tgt}}, 400, "INVALID_ATTRIBUTE_SOURCE"},
        {"garbage png", {{"reference", "not a png"}, {"target", tgt}}, 400, "IMAGE_DECODE"},
        {"no reference", {{"target", tgt}}, 400, "BAD_REQUEST"},
        {"region outside", {{"reference", ref}, {"target", tgt}, {"options", R"({"region": [0, 0, 40, 10]})"}}, 422,
         "REGION_OUT_OF_BOUNDS"},
        {"empty region", {{"reference", ref}, {"target", tgt}, {"options", R"({"region": [5, 5, 5, 9]})"}}, 422,
         "REGION_OUT_OF_BOUNDS"},
        {"kind mismatch", {{"reference", ref}, {"target", tgt}, {"attribute_kind", "sleeve"}}, 400,
         "ATTRIBUTE_KIND_MISMATCH"},
        {"bad options", {{"reference", ref}, {"target", tgt}, {"options", "{oops"}}, 400, "BAD_OPTIONS"},
        {"hed without weights",
         {{"reference", ref}, {"target", tgt}, {"options", R"({"edge_backend": "hed_pretrained"})"}}, 400,
         "EDGE_BACKEND_UNAVAILABLE"},
    };
    for (const auto& c : cases) {
        auto r = post_edit(c.parts);
        ASSERT_TRUE(r) << c.what;
        EXPECT_EQ(r->status, c.status) << c.what << ": " << r->body;
        EXPECT_EQ(body(r)["code"], c.code) << c.what;
        EXPECT_TRUE(body(r).contains("message")) << c.what;
    }
    auto plain = client().Post("/v1/edit", "{}", "application/json");
    ASSERT_TRUE(plain);
    EXPECT_EQ(plain->status, 400);
    EXPECT_EQ(body(plain)["code"], "BAD_REQUEST");
}

TEST_F(ServiceFixture, CorsPreflightAndHeaders) {
    auto pre = client().Options("/v1/edit");
    ASSERT_TRUE(pre);
    EXPECT_EQ(pre->status, 204);
    EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Origin"), "*");
    EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
    auto h = client().Get("/v1/health");
    EXPECT_EQ(h->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceFixture, ClassifierFillsPredictedType) {
    TempDir d;
    TrainedCnnClassifier::Net::Recipe recipe;
    recipe.image_size = 32;
    recipe.iterations = 2;
    TrainedCnnClassifier::train(*manifest_, recipe).save(d / "clf");
    EditServiceOptions o;
    o.classifier_dir = (d / "clf").string();
    EditService svc(o);
    svc.load(*dir_ / "adv");
    EditRequest req;
    const auto ref = read_file_bytes(manifest_->records[0].resolved_path);
    req.reference_png = ref;
    req.target_png = read_file_bytes(manifest_->records[1].resolved_path);
    const auto res = svc.edit(req);
    ASSERT_TRUE(res.predicted_type.has_value());
    EXPECT_GE(*res.predicted_type, 0);
    EXPECT_LT(*res.predicted_type, 12);
    EXPECT_FALSE(res.predicted_name.empty());
}

TEST(ServiceHelpers, Base64RoundTripAndOptions) {
    const std::vector<std::uint8_t> data{0, 1, 2, 250, 251, 252, 253};
    EXPECT_EQ(base64_encode({'M', 'a', 'n'}), "TWFu");
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
    const auto o = parse_edit_options(R"({"region": {"x0": 1, "y0": 2, "x1": 3, "y1": 4}, "return_mask": true})");
    ASSERT_TRUE(o.region.has_value());
    EXPECT_EQ(*o.region, (RegionBox{1, 2, 3, 4}));
    EXPECT_TRUE(o.return_mask);
    EXPECT_THROW(parse_edit_options(R"({"region": [1, 2]})"), ServiceError);
    EXPECT_EQ(default_service_region(64, 64), (RegionBox{19, 0, 45, 26}));
}
