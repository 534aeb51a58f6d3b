#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"

using namespace tt;

namespace {

struct RunResult {
    int status = -1;
    std::string output;  // stdout and stderr together
};

RunResult run_cli(const std::string& args) {
    static std::atomic<int> counter{0};
    const fs::path log = fs::temp_directory_path() /
                         ("tailor_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".log");
    const std::string cmd = std::string(TAILOR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    fs::remove(log);
    return r;
}

std::string dir_digest(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) {
        const auto bytes = read_file_bytes(f);
        acc += fs::relative(f, dir).string() + ":" +
               hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()))) + "\n";
    }
    return acc;
}

const char* kTinyTrain =
    " --set image_size=32 --set base_channels=4 --set res_blocks=1 --set disc_channels=4"
    " --batch 4 --recon-iters 3 --adv-iters 3";

// synth + train once through the binary; edit/eval tests reuse the run.
class CliRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir();
        const auto s = run_cli("synth --out " + (*dir_ / "data").string() + " --n 12 --size 32 --shapes 3");
        ASSERT_EQ(s.status, 0) << s.output;
        const auto t = run_cli("train --data " + (*dir_ / "data/manifest.jsonl").string() + " --out " +
                               (*dir_ / "run").string() + kTinyTrain);
        ASSERT_EQ(t.status, 0) << t.output;
    }
    static void TearDownTestSuite() { delete dir_; }
    static fs::path p(const std::string& rel) { return *dir_ / rel; }
    static TempDir* dir_;
};

TempDir* CliRun::dir_ = nullptr;

}  // namespace

struct HelpCase {
    const char* sub;
    std::vector<std::string> flags;
};

class CliHelp : public ::testing::TestWithParam<HelpCase> {};

TEST_P(CliHelp, ListsEveryFlag) {
    const auto& c = GetParam();
    const auto r = run_cli(std::string(c.sub) + " --help");
    EXPECT_EQ(r.status, 0);
    for (const auto& f : c.flags) EXPECT_NE(r.output.find(f), std::string::npos) << c.sub << " lacks " << f;
}

INSTANTIATE_TEST_SUITE_P(
    Subcommands, CliHelp,
    ::testing::Values(
        HelpCase{"synth", {"--out", "--n", "--size", "--shapes", "--palette", "--seed"}},
        HelpCase{"train", {"--data", "--out", "--config", "--set", "--seed", "--recon-iters", "--adv-iters", "--lr",
                           "--batch", "--skip-recon", "--rgb-input"}},
        HelpCase{"edit", {"--ckpt", "--reference", "--target", "--target-edge", "--region", "--out"}},
        HelpCase{"eval", {"--ckpt", "--data", "--classifier", "--classifier-dir", "--seed", "--out"}},
        HelpCase{"oneout", {"--data", "--test", "--held-type", "--train-fraction", "--split-seed", "--classifier",
                            "--classifier-dir", "--out", "--recon-iters", "--adv-iters"}},
        HelpCase{"serve", {"--ckpt", "--port", "--host", "--workers", "--classifier-dir", "--hed-weights"}}),
    [](const auto& info) { return std::string(info.param.sub); });

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run_cli("").status, 2);
    EXPECT_EQ(run_cli("frobnicate").status, 2);
    EXPECT_EQ(run_cli("synth").status, 2);  // --out is required
    EXPECT_EQ(run_cli("train --data x.jsonl --out y --lr notanumber").status, 2);
}

TEST(Cli, RuntimeErrorsExitOneWithCode) {
    TempDir d;
    const auto r = run_cli("train --data " + (d / "absent.jsonl").string() + " --out " + (d / "run").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.output.find("MISSING_FILE"), std::string::npos) << r.output;
    const auto bad = run_cli("synth --out " + (d / "s").string() + " --shapes 13");
    EXPECT_EQ(bad.status, 1);
    EXPECT_NE(bad.output.find("INVALID_CONFIG"), std::string::npos) << bad.output;
}

TEST(Cli, SynthIsDeterministic) {
    TempDir d;
    ASSERT_EQ(run_cli("synth --out " + (d / "a").string() + " --n 6 --size 32 --seed 4").status, 0);
    ASSERT_EQ(run_cli("synth --out " + (d / "b").string() + " --n 6 --size 32 --seed 4").status, 0);
    ASSERT_EQ(run_cli("synth --out " + (d / "c").string() + " --n 6 --size 32 --seed 5").status, 0);
    EXPECT_EQ(dir_digest(d / "a"), dir_digest(d / "b"));
    EXPECT_NE(dir_digest(d / "a"), dir_digest(d / "c"));
}

TEST_F(CliRun, TrainWritesBothStagesAndLossLog) {
    EXPECT_TRUE(fs::exists(p("run/recon/metadata.json")));
    EXPECT_TRUE(fs::exists(p("run/adversarial/metadata.json")));
    std::ifstream in(p("run/losses.csv"));
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, 1u + 3 + 2 * 3);
}

TEST_F(CliRun, EditWritesImagesAtNetworkSize) {
    const auto m = load_manifest(p("data/manifest.jsonl"));
    const auto r = run_cli("edit --ckpt " + p("run/adversarial").string() + " --reference " +
                           m.records[0].resolved_path.string() + " --target " + m.records[1].resolved_path.string() +
                           " --out " + p("edit").string());
    ASSERT_EQ(r.status, 0) << r.output;
    for (const char* f : {"edited.png", "mask.png", "edge.png"}) {
        ASSERT_TRUE(fs::exists(p("edit") / f)) << f;
    }
    const auto edited = read_png(p("edit/edited.png")).image;
    EXPECT_EQ(edited.width, 32);
    EXPECT_EQ(edited.height, 32);
}

TEST_F(CliRun, EditNeedsExactlyOneTargetSource) {
    const auto m = load_manifest(p("data/manifest.jsonl"));
    const std::string base = "edit --ckpt " + p("run/adversarial").string() + " --reference " +
                             m.records[0].resolved_path.string() + " --out " + p("e2").string();
    EXPECT_EQ(run_cli(base).status, 2);
    EXPECT_EQ(run_cli(base + " --target " + m.records[1].resolved_path.string() + " --target-edge " +
                      m.records[1].resolved_path.string())
                  .status,
              2);
}

TEST_F(CliRun, ReconCheckpointIsRejectedByStageGate) {
    const auto m = load_manifest(p("data/manifest.jsonl"));
    const auto r = run_cli("edit --ckpt " + p("run/recon").string() + " --reference " +
                           m.records[0].resolved_path.string() + " --target " + m.records[1].resolved_path.string() +
                           " --out " + p("e3").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.output.find("STAGE_MISMATCH"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("adversarial"), std::string::npos) << r.output;
    const auto e = run_cli("eval --ckpt " + p("run/recon").string() + " --data " + p("data/manifest.jsonl").string());
    EXPECT_EQ(e.status, 1);
}

TEST_F(CliRun, EvalPrintsTableAndWritesReport) {
    const auto r = run_cli("eval --ckpt " + p("run/adversarial").string() + " --data " +
                           p("data/manifest.jsonl").string() + " --out " + p("eval").string());
    ASSERT_EQ(r.status, 0) << r.output;
    EXPECT_NE(r.output.find("C.E."), std::string::npos);
    std::ifstream in(p("eval/report.json"));
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j.at("n_samples").get<int>(), 12);
    EXPECT_TRUE(j.at("aggregate").contains("ce"));
}

TEST_F(CliRun, ConfigFileAndSetOverridesReachTheCheckpoint) {
    std::ofstream(p("c.conf")) << "learning_rate = 0.005\nlambda1 = 0.3\n";
    const auto r = run_cli("train --data " + p("data/manifest.jsonl").string() + " --out " + p("run2").string() +
                           kTinyTrain + " --config " + p("c.conf").string() + " --set lambda1=0.2");
    ASSERT_EQ(r.status, 0) << r.output;
    const auto ck = load_checkpoint<float>(p("run2/adversarial"));
    EXPECT_EQ(ck.config.learning_rate, 0.005);
    EXPECT_EQ(ck.config.lambda1, 0.2);
    EXPECT_EQ(ck.config.adv_iters, 3);
}
