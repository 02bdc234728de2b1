#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run_cli(const std::string& args) {
    const std::string cmd = std::string(DEEPLOB_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("deeplob_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    fs::path dir_;
};

const char* kSmall = R"({"dataset": {"kind": "synth"}, "setup": "rolling", "horizons": [10],
 "training": {"max_epochs": 1, "max_train_windows": 32, "max_val_windows": 32, "threads": 1},
 "synth": {"n_days": 4, "events_per_day": 600},
 "bench": {"batch_sizes": [1], "reps": 3}, "explain": {"n_samples": 60}})";

TEST_F(Cli, HelpListsExitCodes) {
    const auto r = run_cli("--help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("Exit codes"), std::string::npos);
    EXPECT_NE(r.output.find("DEEPLOB_THREADS"), std::string::npos);
}

TEST_F(Cli, DistinctExitCodes) {
    EXPECT_EQ(run_cli("train --no-such-flag").code, 2);
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("train --config " + (dir_ / "absent.json").string()).code, 3);
    const auto bad = write_config("bad.json", "{\"training\": {\"epochz\": 1}}");
    EXPECT_EQ(run_cli("train --config " + bad.string()).code, 3);
    // output directory below a regular file
    const auto file = write_config("plain", "x");
    const auto cfg = write_config("ok.json", kSmall);
    EXPECT_EQ(run_cli("synth --config " + cfg.string() + " --out " + (file / "sub").string()).code, 4);
}

TEST_F(Cli, MissingDatasetLeavesNoOutputs) {
    const auto cfg = write_config("lob.json", R"({"dataset": {"kind": "lob", "path": "/nonexistent/lob"}})");
    const fs::path out = dir_ / "run";
    const auto r = run_cli("train --config " + cfg.string() + " --out " + out.string());
    EXPECT_EQ(r.code, 3) << r.output;
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, SynthIsDeterministic) {
    const auto cfg = write_config("s.json", kSmall);
    ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --seed 7 --out " + (dir_ / "a").string()).code, 0);
    ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --seed 7 --out " + (dir_ / "b").string()).code, 0);
    ASSERT_EQ(run_cli("synth --config " + cfg.string() + " --seed 8 --out " + (dir_ / "c").string()).code, 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "a" / "data")) {
        const auto name = e.path().filename();
        EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / "data" / name)) << name;
        EXPECT_NE(slurp(e.path()), slurp(dir_ / "c" / "data" / name)) << name;
        ++files;
    }
    EXPECT_EQ(files, 4u);
}

TEST_F(Cli, EndToEndCommands) {
    const auto cfg = write_config("s.json", kSmall);
    const std::string base = " --config " + cfg.string();
    const fs::path run = dir_ / "run";
    auto r = run_cli("train" + base + " --out " + run.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const fs::path ck = run / "k10" / "model.dlck";
    ASSERT_TRUE(fs::exists(ck));
    EXPECT_TRUE(fs::exists(run / "k10" / "history.csv"));
    EXPECT_TRUE(fs::exists(run / "manifest.json"));
    EXPECT_TRUE(fs::exists(run / "config.json"));

    r = run_cli("evaluate" + base + " --checkpoint " + ck.string() + " --out " + (dir_ / "eval").string());
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir_ / "eval" / "metrics.csv"));

    r = run_cli("backtest" + base + " --checkpoint " + ck.string() + " --out " + (dir_ / "bt").string());
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir_ / "bt" / "ledger.csv"));

    r = run_cli("explain" + base + " --checkpoint " + ck.string() + " --out " + (dir_ / "ex").string());
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir_ / "ex" / "attribution.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "ex" / "attribution.ppm"));

    r = run_cli("bench" + base + " --checkpoint " + ck.string() + " --out " + (dir_ / "bn").string());
    EXPECT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir_ / "bn" / "bench.json"));

    // precision mismatch is refused without the flag
    const std::string wide = " --config " + write_config("w.json", std::string(kSmall).insert(1, "\"precision\": \"float64\", ")).string();
    EXPECT_EQ(run_cli("bench" + wide + " --checkpoint " + ck.string() + " --out " + (dir_ / "bw").string()).code, 4);
    EXPECT_EQ(run_cli("bench" + wide + " --checkpoint " + ck.string() + " --convert-precision --out " + (dir_ / "bw").string()).code, 0);

    // corrupt checkpoint
    std::string bytes = slurp(ck);
    bytes[bytes.size() / 2] ^= 0x10;
    const fs::path broken = dir_ / "broken.dlck";
    std::ofstream(broken, std::ios::binary) << bytes;
    EXPECT_EQ(run_cli("bench" + base + " --checkpoint " + broken.string() + " --out " + (dir_ / "bb").string()).code, 4);
}

}  // namespace
