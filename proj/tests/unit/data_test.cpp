#include <fstream>

#include "test_support.hpp"

using namespace tt;

namespace {

std::string hash_file(const fs::path& p) {
    const auto bytes = read_file_bytes(p);
    return hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
}

// one JSONL record pointing at images/<name>
std::string record_line(const std::string& image, int type_id, std::pair<double, double> left = {10, 12},
                        std::pair<double, double> right = {20, 12}) {
    nlohmann::json j;
    j["image"] = image;
    j["attribute"] = {{"kind", "collar"}, {"type_id", type_id}, {"type_name", "x"}};
    j["landmarks"] = {{"collar_left", {left.first, left.second}}, {"collar_right", {right.first, right.second}}};
    return j.dump();
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
    std::ofstream out(p);
    for (const auto& l : lines) out << l << "\n";
}

DatasetManifest fake_manifest(std::size_t n) {
    DatasetManifest m;
    for (std::size_t i = 0; i < n; ++i) {
        AnnotationRecord r;
        r.image_path = std::to_string(i);
        r.type_id = static_cast<int>(i % 3);
        m.records.push_back(r);
    }
    return m;
}

}  // namespace

class ManifestFiles : public ::testing::Test {
protected:
    void SetUp() override {
        fs::create_directories(dir / "images");
        for (int i = 0; i < 3; ++i) write_png(dir / ("images/" + std::to_string(i) + ".png"), Image8(32, 32, 3, 200));
    }
    TempDir dir;
};

TEST_F(ManifestFiles, ThreeWellFormedLines) {
    write_lines(dir / "m.jsonl", {record_line("images/0.png", 0), record_line("images/1.png", 1),
                                  record_line("images/2.png", 11)});
    const auto m = load_manifest(dir / "m.jsonl");
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m.records[2].type_id, 11);
    EXPECT_EQ(m.class_count, 12);
    EXPECT_EQ(m.records[0].width, 32);
    EXPECT_EQ(m.provenance, Provenance::real);
}

TEST_F(ManifestFiles, CollarTypeTwelveIsSchemaViolation) {
    write_lines(dir / "m.jsonl", {record_line("images/0.png", 12)});
    try {
        load_manifest(dir / "m.jsonl");
        FAIL() << "expected SchemaViolation";
    } catch (const SchemaViolation& e) {
        EXPECT_EQ(e.line(), 1u);
        EXPECT_EQ(e.field(), "attribute.type_id");
    }
}

TEST_F(ManifestFiles, NegativeLandmarkIsOutOfBounds) {
    write_lines(dir / "m.jsonl", {record_line("images/0.png", 0, {-4, 10})});
    EXPECT_THROW(load_manifest(dir / "m.jsonl"), LandmarkOutOfBounds);
}

TEST_F(ManifestFiles, MissingImageAndMissingManifest) {
    write_lines(dir / "m.jsonl", {record_line("images/nope.png", 0)});
    EXPECT_THROW(load_manifest(dir / "m.jsonl"), MissingFile);
    EXPECT_THROW(load_manifest(dir / "absent.jsonl"), MissingFile);
}

TEST_F(ManifestFiles, MalformedJsonNamesTheLine) {
    write_lines(dir / "m.jsonl", {record_line("images/0.png", 0), "{not json"});
    try {
        load_manifest(dir / "m.jsonl");
        FAIL();
    } catch (const SchemaViolation& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST_F(ManifestFiles, GrayscalePngRejected) {
    write_png(dir / "images/g.png", Image8(32, 32, 1, 10));
    write_lines(dir / "m.jsonl", {record_line("images/g.png", 0)});
    EXPECT_THROW(load_manifest(dir / "m.jsonl"), SchemaViolation);
}

TEST(Split, TenRecordsIsEightTwoAndRepeatable) {
    const auto m = fake_manifest(10);
    auto [a, b] = split_dataset(m, 0.8, 7);
    auto [c, d] = split_dataset(m, 0.8, 7);
    ASSERT_EQ(a.size(), 8u);
    ASSERT_EQ(b.size(), 2u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.records[i].image_path, c.records[i].image_path);
    for (std::size_t i = 0; i < b.size(); ++i) EXPECT_EQ(b.records[i].image_path, d.records[i].image_path);
}

// floor(0.8 * 9636) = floor(7708.8) = 7708 on the train side
TEST(Split, FloorOnTrainSide) {
    const std::size_t n = 9636;
    const auto expected_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n)));
    ASSERT_EQ(expected_train, 7708u);
    auto [train, test] = split_dataset(fake_manifest(n), 0.8, 7);
    EXPECT_EQ(train.size(), expected_train);
    EXPECT_EQ(test.size(), n - expected_train);
}

TEST(Split, PartitionIsDisjointAndComplete) {
    auto [train, test] = split_dataset(fake_manifest(50), 0.7, 3);
    std::set<std::string> seen;
    for (const auto& r : train.records) seen.insert(r.image_path);
    for (const auto& r : test.records) EXPECT_TRUE(seen.insert(r.image_path).second);
    EXPECT_EQ(seen.size(), 50u);
}

TEST(Split, DegenerateCases) {
    EXPECT_THROW(split_dataset(fake_manifest(1), 0.8, 1), DegenerateSplit);
    EXPECT_THROW(split_dataset(fake_manifest(0), 0.8, 1), EmptyManifest);
    EXPECT_THROW(split_dataset(fake_manifest(10), 1.0, 1), InvalidConfig);
}

TEST(Sample, FixedSeedRepeats) {
    const auto m = fake_manifest(100);
    Rng a(11), b(11);
    const auto x = sample_batch(m, 4, a);
    const auto y = sample_batch(m, 4, b);
    ASSERT_EQ(x.size(), 4u);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(x[i].image_path, y[i].image_path);
}

TEST(Sample, FullBatchIsPermutation) {
    Rng r(12);
    auto idx = sample_indices(100, 100, r);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(idx[i], i);
}

TEST(Sample, Bounds) {
    Rng r(13);
    EXPECT_THROW(sample_indices(100, 101, r), BatchLargerThanDataset);
    EXPECT_THROW(sample_indices(100, 0, r), InvalidConfig);
}

TEST(OneHot, EncodesAndBounds) {
    AttributeOneHot v(3, 12);
    EXPECT_EQ(v.argmax(), 3);
    EXPECT_EQ(std::accumulate(v.vector().begin(), v.vector().end(), 0), 1);
    EXPECT_THROW(AttributeOneHot(12, 12), InvalidConfig);
}

TEST(Png, RoundTrip) {
    Rng rng(1);
    Image8 img(7, 5, 3);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.index(256));
    const auto back = decode_png(encode_png(img), 3);
    EXPECT_TRUE(back.source_was_rgb);
    EXPECT_EQ(back.image, img);
}

TEST(Png, GarbageThrowsDecodeError) {
    std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
    EXPECT_THROW(decode_png(junk, 3), ImageDecodeError);
}

TEST(Synthetic, SameSeedSameBytes) {
    TempDir a, b;
    SyntheticSpec spec;
    spec.n_images = 8;
    generate_synthetic(spec, 1, a.path());
    generate_synthetic(spec, 1, b.path());
    EXPECT_EQ(hash_file(a / "manifest.jsonl"), hash_file(b / "manifest.jsonl"));
    for (int i = 0; i < 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "images/%06d.png", i);
        EXPECT_EQ(hash_file(a / name), hash_file(b / name)) << name;
    }
}

TEST(Synthetic, LabelsCoverRequestedShapes) {
    TempDir d;
    SyntheticSpec spec;
    spec.n_images = 9;
    const auto m = generate_synthetic(spec, 2, d.path());
    EXPECT_EQ(m.type_ids(), (std::vector<int>{0, 1, 2}));
}

TEST(Synthetic, ManifestReloadsWithSyntheticProvenance) {
    TempDir d;
    SyntheticSpec spec;
    spec.n_images = 6;
    generate_synthetic(spec, 5, d.path());
    const auto m = load_manifest(d / "manifest.jsonl");
    EXPECT_EQ(m.size(), 6u);
    EXPECT_EQ(m.provenance, Provenance::synthetic);
    ASSERT_TRUE(m.records[0].synthetic.has_value());
    EXPECT_EQ(m.records[0].synthetic->shape, m.records[0].type_id);
}

// The geometric oracle re-derives every stored label from pixels plus drawing
// parameters.
TEST(Synthetic, GeometricOracleAgreesWithEveryLabel) {
    TempDir d;
    SyntheticSpec spec;
    spec.n_images = 48;
    spec.n_collar_shapes = 12;
    const auto m = generate_synthetic(spec, 3, d.path());
    SyntheticOracle oracle;
    for (const auto& r : m.records) {
        EXPECT_EQ(oracle.classify(read_png(r.resolved_path).image, r), r.type_id) << r.image_path;
    }
}

TEST(Synthetic, PreconditionsEnforced) {
    TempDir d;
    SyntheticSpec spec;
    spec.n_collar_shapes = 13;
    EXPECT_THROW(generate_synthetic(spec, 1, d.path()), InvalidConfig);
    spec.n_collar_shapes = 3;
    spec.image_size = 16;
    EXPECT_THROW(generate_synthetic(spec, 1, d.path()), InvalidConfig);
}

TEST(Synthetic, LandmarksInsideImage) {
    TempDir d;
    SyntheticSpec spec;
    spec.n_images = 12;
    const auto m = generate_synthetic(spec, 4, d.path());
    for (const auto& r : m.records) {
        for (const auto& [name, p] : r.landmarks) {
            EXPECT_GE(p.x, 0);
            EXPECT_LE(p.x, r.width - 1);
            EXPECT_GE(p.y, 0);
            EXPECT_LE(p.y, r.height - 1);
        }
    }
}
