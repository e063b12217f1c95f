#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "saccade/commands.hpp"
#include "saccade/toy.hpp"
#include "test_support.hpp"

using namespace saccade;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

// Runs the CLI binary with `args`, capturing stdout and stderr.
Result run_cli(const TempDir& dir, const std::string& args, const std::string& env = "") {
    const std::string out = dir.str("stdout.txt"), err = dir.str("stderr.txt");
    const std::string cmd = env + " '" SACCADE_CLI_PATH "' " + args + " >'" + out + "' 2>'" + err + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t count_files(const std::filesystem::path& dir, const std::string& ext) {
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) n += e.path().extension() == ext;
    return n;
}

std::string weights_args(const ToyAssets& a) { return "--weights-manifest '" + a.manifest + "' --dataset '" + a.dataset + "'"; }

} // namespace

TEST(Config, FlagsOverrideEnvOverrideFile) {
    TempDir dir("config");
    std::ofstream(dir.str("run.cfg")) << "# comment\nfovea = 5\nsaccades=4\ndataset=/from/file\nseed=3 # trailing\n";
    ::unsetenv(kDatasetEnvVar);
    RunConfig c = resolve_config(dir.str("run.cfg"), {{"saccades", "7"}});
    EXPECT_EQ(c.eval.fovea, 5u);
    EXPECT_EQ(c.eval.saccades, 7u);
    EXPECT_EQ(c.eval.saliency.seed, 3u);
    EXPECT_EQ(c.dataset, "/from/file");

    ::setenv(kDatasetEnvVar, "/from/env", 1);
    EXPECT_EQ(resolve_config(dir.str("run.cfg"), {}).dataset, "/from/env");
    EXPECT_EQ(resolve_config(dir.str("run.cfg"), {{"dataset", "/from/flag"}}).dataset, "/from/flag");
    ::unsetenv(kDatasetEnvVar);
}

TEST(Config, DefaultsAndParsing) {
    RunConfig c = resolve_config("", {{"layers", "1..3,7"}, {"sources", "attention,random"}, {"mean", "0,0,0"}});
    EXPECT_EQ(c.eval.fovea, 3u);
    EXPECT_EQ(c.eval.saccades, 10u);
    EXPECT_EQ(c.eval.saliency.source, SaliencySource::attention);
    EXPECT_EQ(c.sweep_layers, (std::vector<std::size_t>{1, 2, 3, 7}));
    EXPECT_EQ(c.sweep_sources.size(), 2u);
    EXPECT_EQ(c.eval.preprocess.stats.mean[1], 0.0f);
}

TEST(Config, RejectsBadValues) {
    EXPECT_THROW(resolve_config("", {{"fovea", "4"}}), UsageError);
    EXPECT_THROW(resolve_config("", {{"saccades", "0"}}), UsageError);
    EXPECT_THROW(resolve_config("", {{"seed", "x"}}), UsageError);
    EXPECT_THROW(resolve_config("", {{"source", "gaze"}}), UsageError);
    EXPECT_THROW(resolve_config("", {{"colour", "red"}}), UsageError);
    EXPECT_THROW(resolve_config("/no/such/file.cfg", {}), UsageError);
}

TEST(Cli, MissingWeightsIsUsageError) {
    TempDir dir("cli");
    const Result r = run_cli(dir, "run --dataset '" + dir.path().string() + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--weights-manifest"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagIsUsageError) {
    TempDir dir("cli");
    EXPECT_EQ(run_cli(dir, "run --no-such-flag 1").code, 2);
    EXPECT_EQ(run_cli(dir, "").code, 2);
}

TEST(Cli, HelpDocumentsFlags) {
    TempDir dir("cli");
    const Result r = run_cli(dir, "run --help");
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--weights-manifest", "--dataset", "--source", "--fovea", "--saccades", "--layer",
                             "--att-resolution", "--seed", "--threads", "--out", "--config", "--per-class-limit"})
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, RunPrintsTableAndWritesOutputs) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 2, 1, 21);
    const Result r = run_cli(dir, "run " + weights_args(a) + " --source attention --fovea 3 --saccades 10 --out '" +
                                      dir.str("out") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream table(r.out);
    std::string header;
    std::getline(table, header);
    std::istringstream cols(header);
    std::string word;
    std::size_t n = 0;
    while (cols >> word) ++n;
    EXPECT_EQ(n, 11u) << header; // label + 10 saccades
    for (const char* f : {"records.csv", "trace.csv", "curves.csv", "summary.json"})
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "out" / f)) << f;
}

TEST(Cli, RandomRunsAreReproducible) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 2, 2, 22);
    const std::string base = "run " + weights_args(a) + " --source random --seed 7 --saccades 3";
    ASSERT_EQ(run_cli(dir, base + " --out '" + dir.str("o1") + "'").code, 0);
    ASSERT_EQ(run_cli(dir, base + " --threads 3 --out '" + dir.str("o2") + "'").code, 0);
    for (const char* f : {"records.csv", "summary.json", "trace.csv", "curves.csv"})
        EXPECT_EQ(slurp(dir.path() / "o1" / f), slurp(dir.path() / "o2" / f)) << f;
}

TEST(Cli, EnvSuppliesDataset) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 23);
    const Result r = run_cli(dir, "run --weights-manifest '" + a.manifest + "' --saccades 1 --out '" + dir.str("o") + "'",
                             std::string(kDatasetEnvVar) + "='" + a.dataset + "'");
    EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, ConfigFileIsHonoured) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 24);
    std::ofstream(dir.str("run.cfg")) << "weights_manifest=" << a.manifest << "\ndataset=" << a.dataset
                                      << "\nsaccades=2\nsource=center\n";
    const Result r = run_cli(dir, "run --config '" + dir.str("run.cfg") + "' --out '" + dir.str("o") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string trace = slurp(dir.path() / "o" / "trace.csv");
    EXPECT_NE(trace.find(",center\n"), std::string::npos);
    EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 3);
}

TEST(Cli, LayerOutOfRangeIsUsageError) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 25);
    const Result r = run_cli(dir, "run " + weights_args(a) + " --layer 9 --out '" + dir.str("o") + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("--layer"), std::string::npos) << r.err;
}

TEST(Cli, BrokenDatasetFails) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 26);
    std::ofstream(std::filesystem::path(a.dataset) / "class_0" / "zz.ppm") << "not an image";
    const Result r = run_cli(dir, "run " + weights_args(a) + " --saccades 1 --out '" + dir.str("o") + "'");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("class_0/zz"), std::string::npos) << r.err;
}

TEST(Cli, InspectListsTensors) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 27);
    const Result r = run_cli(dir, "inspect --weights-manifest '" + a.manifest + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("patch_embed.proj.weight f32 [32,3,16,16]"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("head.linear.weight f32 [10,128]"), std::string::npos);
    EXPECT_NE(r.out.find("embed_dim=32"), std::string::npos);
}

TEST(Cli, InspectSmallVitContainer) {
    TempDir dir("cli");
    save_weights(make_random_weights(ModelConfig::vit_small(), 1), dir.str("s.manifest"), dir.str("s.bin"));
    const Result r = run_cli(dir, "inspect --weights-manifest '" + dir.str("s.manifest") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("blocks.11.attn.qkv.weight f32 [1152,384]"), std::string::npos);
    EXPECT_NE(r.out.find("embed_dim=384 heads=6 layers=12"), std::string::npos);
}

TEST(Cli, InspectRejectsCorruptContainer) {
    TempDir dir("cli");
    std::ofstream(dir.str("bad.manifest")) << "saccade-container 1\ntensor x f64 1 0\n";
    std::ofstream(dir.str("bad.bin")) << "12345678";
    const Result r = run_cli(dir, "inspect --weights-manifest '" + dir.str("bad.manifest") + "'");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("f64"), std::string::npos);
}

TEST(Cli, ExportMapsOnePerImage) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 3, 28);
    const Result r = run_cli(dir, "export --maps " + weights_args(a) + " --out '" + dir.str("o") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_files(dir.path() / "o" / "maps", ".pgm"), 3u);
    EXPECT_EQ(count_files(dir.path() / "o" / "maps", ".manifest"), 3u);
}

TEST(Cli, ExportedMapsReimport) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 2, 29);
    ASSERT_EQ(run_cli(dir, "export --maps " + weights_args(a) + " --source graph --out '" + dir.str("o") + "'").code, 0);
    ASSERT_EQ(run_cli(dir, "run " + weights_args(a) + " --source graph_based --saccades 4 --out '" + dir.str("g") + "'").code, 0);
    const Result r = run_cli(dir, "run " + weights_args(a) + " --source imported --saliency-dir '" + dir.str("o/maps") +
                                      "' --saccades 4 --out '" + dir.str("i") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    // Same fixations as the graph-based run they were exported from.
    std::string g = slurp(dir.path() / "g" / "trace.csv"), i = slurp(dir.path() / "i" / "trace.csv");
    auto strip = [](std::string s) {
        for (std::size_t p; (p = s.find(",graph_based")) != std::string::npos;) s.erase(p, 12);
        for (std::size_t p; (p = s.find(",imported")) != std::string::npos;) s.erase(p, 9);
        return s;
    };
    EXPECT_EQ(strip(g), strip(i));
}

TEST(Cli, ExportCrops) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 2, 1, 30);
    const Result r = run_cli(dir, "export --crops " + weights_args(a) + " --fovea 5 --saccades 1 --out '" +
                                      dir.str("o") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(count_files(dir.path() / "o" / "crops", ".ppm"), 2u);
    EXPECT_EQ(read_ppm((dir.path() / "o" / "crops" / "class_1__img_0.ppm").string()).width, 80u);
    EXPECT_EQ(run_cli(dir, "export " + weights_args(a)).code, 2);
}

TEST(Cli, SweepOverTwelveLayers) {
    TempDir dir("cli");
    ModelConfig cfg = ModelConfig::toy();
    cfg.num_layers = 12;
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 31, cfg);
    const Result r = run_cli(dir, "sweep " + weights_args(a) + " --layers 1..12 --saccades 2 --out '" + dir.str("o") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    std::size_t dirs = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir.path() / "o")) dirs += e.is_directory();
    EXPECT_EQ(dirs, 12u);
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "o" / "attention_f3_layer12_resfull" / "curves.csv"));
}

TEST(Cli, SweepResolutionsAndFailureExit) {
    TempDir dir("cli");
    const ToyAssets a = write_toy_assets(dir.path() / "assets", 1, 1, 32);
    Result r = run_cli(dir, "sweep " + weights_args(a) + " --resolutions 224,128,112,96 --saccades 2 --out '" +
                                dir.str("o") + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("4/4 sweep points"), std::string::npos) << r.out;
    r = run_cli(dir, "sweep " + weights_args(a) + " --resolutions 224,100 --saccades 2 --out '" + dir.str("p") + "'");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("1/2 sweep points"), std::string::npos) << r.out;
}
