#include "lsp2/binformat.hpp"
#include "lsp2/cli.hpp"
#include "lsp2/scenario.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace lsp2;

namespace {

const char* kTiny = R"(name = tiny
seed = 5
acquisition.cycle_count = 40
acquisition.block_len = 256
source.mode = thermal
source.rate_beam1_cps = 2000000
source.rate_beam2_cps = 2000000
detector.pixel_count = 8
detector.pde = 1
detector.beam_centers = 3,4
detector.beam_sigma_px = 0
detector.hot_pixels = 6:50000
detector.ct_p1 = 0.01
analysis.pair = 3,4
)";

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "lsp2sim");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line(const fs::path& p)
{
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override
    {
        dir_ = fs::temp_directory_path() / ("lsp2_test_cli_" + std::string(
                   ::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "tiny.txt") << kTiny;
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string d(const std::string& name) const { return (dir_ / name).string(); }
    fs::path dir_;
};

}  // namespace

TEST_F(Cli, NoArgumentsIsConfigError)
{
    EXPECT_EQ(cli({}).code, kExitConfig);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);
    EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST_F(Cli, BadScenario)
{
    EXPECT_EQ(cli({"simulate", d("missing.txt"), "-o", d("o")}).code, kExitConfig);
    std::ofstream(dir_ / "bad.txt") << "detector.no_such_key = 1\n";
    const auto r = cli({"simulate", d("bad.txt"), "-o", d("o")});
    EXPECT_EQ(r.code, kExitConfig);
    EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir_ / "o" / "scenario.bin"));
}

TEST_F(Cli, EmptyDataExitsWithoutOutputs)
{
    FileHeader h;
    h.cycle_count = 0;
    write_file(dir_ / "empty.bin", h, {});
    for (const char* cmd : {"dcr", "ct-scan"}) {
        const auto r = cli({cmd, d("empty.bin"), "-o", d("o")});
        EXPECT_EQ(r.code, kExitData) << cmd;
        EXPECT_NE(r.err.find("no data"), std::string::npos) << cmd;
    }
    EXPECT_EQ(cli({"coincide", d("empty.bin"), "--pair", "3", "4", "-o", d("o")}).code, kExitData);
    EXPECT_FALSE(fs::exists(dir_ / "o"));
}

TEST_F(Cli, MissingAndCorruptData)
{
    EXPECT_EQ(cli({"dcr", d("nope.bin"), "-o", d("o")}).code, kExitData);
    std::ofstream(dir_ / "junk.bin") << "definitely not a data file, but long enough to have a header";
    EXPECT_EQ(cli({"dcr", d("junk.bin"), "-o", d("o")}).code, kExitData);
}

TEST_F(Cli, SimulateThenAnalyze)
{
    ASSERT_EQ(cli({"simulate", d("tiny.txt"), "-o", d("o")}).code, kExitOk);
    for (const char* f : {"tiny.bin", "tiny.truth.csv", "tiny.report.txt", "tiny.scenario.txt"})
        EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;

    auto s = load_scenario(dir_ / "tiny.txt");
    s.materialize();
    const std::string prov = provenance_line(scenario_hash(s));
    EXPECT_EQ(prov.rfind("# lsp2sim 0.1.0 scenario=", 0), 0u);

    ASSERT_EQ(cli({"dcr", d("o/tiny.bin"), "-o", d("a"), "--mask-top", "1"}).code, kExitOk);
    EXPECT_EQ(first_line(dir_ / "a" / "tiny.dcr.csv"), prov);
    EXPECT_NE(slurp(dir_ / "a" / "tiny.dcr.svg").find(prov.substr(2)), std::string::npos);
    EXPECT_NE(slurp(dir_ / "a" / "tiny.dcr.txt").find("masked throughput fraction"), std::string::npos);

    const auto hb = cli({"hbt", d("o/tiny.bin"), "-o", d("a")});
    EXPECT_TRUE(hb.code == kExitOk || hb.code == kExitFit) << hb.err;
    EXPECT_TRUE(fs::exists(dir_ / "a" / "tiny.hbt_3_4.csv"));
    EXPECT_EQ(first_line(dir_ / "a" / "tiny.hbt_3_4.csv"), prov);
}

TEST_F(Cli, WorkerCountDoesNotChangeOutput)
{
    ASSERT_EQ(cli({"simulate", d("tiny.txt"), "-o", d("one"), "-j", "1"}).code, kExitOk);
    ASSERT_EQ(cli({"simulate", d("tiny.txt"), "-o", d("three"), "-j", "3"}).code, kExitOk);
    for (const char* f : {"tiny.bin", "tiny.truth.csv"})
        EXPECT_EQ(slurp(dir_ / "one" / f), slurp(dir_ / "three" / f)) << f;
    ASSERT_EQ(cli({"dcr", d("one/tiny.bin"), "-o", d("one"), "-j", "1"}).code, kExitOk);
    ASSERT_EQ(cli({"dcr", d("three/tiny.bin"), "-o", d("three"), "-j", "3"}).code, kExitOk);
    EXPECT_EQ(slurp(dir_ / "one" / "tiny.dcr.csv"), slurp(dir_ / "three" / "tiny.dcr.csv"));
}

TEST_F(Cli, SetOverrides)
{
    ASSERT_EQ(cli({"simulate", d("tiny.txt"), "--set", "acquisition.cycle_count=3", "--stem", "short", "-o", d("o")})
                  .code,
              kExitOk);
    FileReader r(dir_ / "o" / "short.bin");
    EXPECT_EQ(r.header().cycle_count, 3u);
    EXPECT_EQ(cli({"simulate", d("tiny.txt"), "--set", "acquisition.cycle_count", "-o", d("o")}).code, kExitConfig);
}

TEST_F(Cli, OutputDirFromEnvironment)
{
    setenv(kOutputDirEnv, d("env").c_str(), 1);
    const auto r = cli({"simulate", d("tiny.txt"), "--no-truth"});
    unsetenv(kOutputDirEnv);
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "env" / "tiny.bin"));
    EXPECT_FALSE(fs::exists(dir_ / "env" / "tiny.truth.csv"));
}

TEST_F(Cli, CoincideWritesHistogram)
{
    ASSERT_EQ(cli({"simulate", d("tiny.txt"), "-o", d("o")}).code, kExitOk);
    const auto r = cli({"coincide", d("o/tiny.bin"), "--pair", "3", "4", "--window", "5000", "-o", d("a")});
    EXPECT_TRUE(r.code == kExitOk || r.code == kExitFit) << r.err;
    EXPECT_TRUE(fs::exists(dir_ / "a" / "tiny.hist_3_4.csv"));
    EXPECT_EQ(cli({"coincide", d("o/tiny.bin"), "--pair", "3", "3", "-o", d("a")}).code, kExitConfig);
}
