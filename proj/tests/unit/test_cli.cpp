#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "collapselab/config.hpp"
#include "collapselab/runner.hpp"
#include "collapselab/svg.hpp"

using namespace collapselab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("collapselab_test_" + name);
    fs::remove_all(p);
    return p;
}

int run_args(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "collapselab");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

} // namespace

TEST(Config, DefaultsCoverSchema) {
    const Config c;
    const auto j = c.to_json();
    for (const auto& k : config_schema()) {
        nlohmann::json::json_pointer ptr("/" + [&] {
            std::string p = k.path;
            for (char& ch : p)
                if (ch == '.') ch = '/';
            return p;
        }());
        EXPECT_TRUE(j.contains(ptr)) << k.path;
    }
}

TEST(Config, NestedAndDotted) {
    const auto c = Config::parse(R"({"loss": {"family": "beta_infonce", "beta": 0.25}, "instance.d0": 3})");
    EXPECT_EQ(c.str("loss.family"), "beta_infonce");
    EXPECT_EQ(c.number("loss.beta"), 0.25);
    EXPECT_EQ(c.integer("instance.d0"), 3);
}

TEST(Config, UnknownKeyNamesField) {
    try {
        Config::parse(R"({"loss": {"gamma": 1}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "loss.gamma");
    }
}

TEST(Config, RangeCheckNamesField) {
    try {
        Config::parse(R"({"instance": {"c": {"theta": 1.5}}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "instance.c.theta");
        EXPECT_NE(std::string(e.what()).find("instance.c.theta"), std::string::npos);
    }
}

TEST(Config, SyntaxErrorHasLine) {
    try {
        Config::parse("{\n\"seed\": 1,\n\"out\": \n}");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
}

TEST(Config, Overrides) {
    Config c;
    c.set_override("loss.family=spectral_contrastive");
    c.set_override("instance.a0.values=[3,2]");
    c.set_override("seed=18446744073709551615");
    EXPECT_EQ(c.str("loss.family"), "spectral_contrastive");
    EXPECT_EQ(c.list("instance.a0.values"), (std::vector<double>{3, 2}));
    EXPECT_EQ(c.u64("seed"), 18446744073709551615ULL);
    EXPECT_THROW(c.set_override("loss.beta=abc"), ConfigError);
    EXPECT_THROW(c.set_override("nonsense"), ConfigError);
    EXPECT_THROW(c.set_override("trainer.optimizer=sgd"), ConfigError);
}

TEST(Config, ProvenanceIgnoredAndRoundTrip) {
    Config c;
    c.set_override("loss.beta=0.3");
    auto j = c.to_json();
    j["provenance"] = {{"git_describe", "x"}, {"wall_time_s", 1.5}};
    const Config back = Config::from_json(j);
    EXPECT_EQ(back.to_json().dump(), c.to_json().dump());
}

TEST(Config, HelpListsEveryKey) {
    const std::string h = config_help();
    for (const auto& k : config_schema()) {
        EXPECT_NE(h.find("  " + k.path + " (" + type_name(k.type) + ", default "), std::string::npos) << k.path;
    }
}

TEST(Svg, LinesAndDeterminism) {
    SweepGrid g({Axis{"sigma", {0.1, 1.0, 10.0}, true}}, {"a", "b"});
    for (std::size_t k = 0; k < 3; ++k) {
        g.set(k, "a", 1.0 + k);
        g.set(k, "b", 2.0 * k + 0.5);
    }
    const PlotHint hint{PlotHint::Kind::lines, {"a", "b"}, true, true, "t"};
    const std::string s = render_svg(g, hint);
    EXPECT_EQ(s, render_svg(g, hint));
    EXPECT_NE(s.find("<svg"), std::string::npos);
    std::size_t lines = 0;
    for (std::size_t p = s.find("<polyline"); p != std::string::npos; p = s.find("<polyline", p + 1)) ++lines;
    EXPECT_EQ(lines, 2u);
    EXPECT_NE(s.find("sigma (log)"), std::string::npos);
}

TEST(Svg, HeatmapHasColorbar) {
    SweepGrid g({Axis{"x", {0, 1}}, Axis{"y", {0, 1, 2}}}, {"v"});
    for (std::size_t k = 0; k < 6; ++k) g.set(k, "v", static_cast<double>(k));
    const std::string s = render_svg(g, PlotHint{PlotHint::Kind::heatmap, {"v"}, false, false, ""});
    EXPECT_NE(s.find(">v</text>"), std::string::npos);
    EXPECT_NE(s.find(">x</text>"), std::string::npos);
    EXPECT_NE(s.find(">y</text>"), std::string::npos);
}

TEST(Svg, EmptyGridThrows) {
    EXPECT_THROW(render_svg(SweepGrid(), PlotHint{}), EmptyGrid);
}

TEST(Runner, SolveToyInstance) {
    const auto dir = scratch("solve");
    std::string out;
    ASSERT_EQ(run_args({"solve", "--out", dir.string(), "--set", "instance.c.kind=diagonal", "--set",
                        "instance.c.values=[0,4]"},
                       &out),
              exit_ok);
    EXPECT_NE(out.find("local_min"), std::string::npos);
    EXPECT_NE(out.find("global_mask = 11"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "results.csv"));
    EXPECT_TRUE(fs::exists(dir / "meta.json"));
}

TEST(Runner, ConfigErrorExitTwo) {
    const auto dir = scratch("bad");
    std::string err;
    EXPECT_EQ(run_args({"sweep:phase_diagram", "--out", dir.string(), "--set", "instance.c.theta=1.5"}, nullptr, &err),
              exit_config);
    EXPECT_NE(err.find("instance.c.theta"), std::string::npos);
    EXPECT_EQ(run_args({"bogus", "--out", dir.string()}, nullptr, &err), exit_config);
}

TEST(Runner, SingularSigmaExitThree) {
    const auto dir = scratch("singular");
    std::string err;
    EXPECT_EQ(run_args({"solve", "--out", dir.string(), "--set", "instance.a0.values=[1,0]"}, nullptr, &err),
              exit_numeric);
    const std::string e = slurp(dir / "error.json");
    EXPECT_NE(e.find("SingularSigma"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "meta.json"));
}

TEST(Runner, DivergedExitThreeWithPartialTrajectory) {
    const auto dir = scratch("diverged");
    EXPECT_EQ(run_args({"train", "--out", dir.string(), "--set", "trainer.optimizer=gd", "--set", "trainer.lr=50",
                        "--set", "trainer.init_scale=3", "--set", "trainer.record_every=1"}),
              exit_numeric);
    EXPECT_NE(slurp(dir / "error.json").find("Diverged"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "results.csv"));
}

TEST(Runner, SweepArtifactsAndRoundTrip) {
    const auto a = scratch("rt_a"), b = scratch("rt_b");
    ASSERT_EQ(run_args({"sweep:sigma_scaling", "--out", a.string(), "--seed", "11"}), exit_ok);
    for (const char* f : {"results.csv", "meta.json", "plot.svg", "summary.json"}) EXPECT_TRUE(fs::exists(a / f)) << f;
    ASSERT_EQ(run_args({"--config", (a / "meta.json").string(), "--out", b.string()}), exit_ok);
    EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
}

TEST(Runner, ThreadCountDoesNotChangeResults) {
    const auto a = scratch("th1"), b = scratch("th8");
    ASSERT_EQ(run_args({"sweep:downstream_eval", "--out", a.string(), "--threads", "1"}), exit_ok);
    ASSERT_EQ(run_args({"sweep:downstream_eval", "--out", b.string(), "--threads", "8"}), exit_ok);
    EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
}

TEST(Runner, VerifyPasses) {
    const auto dir = scratch("verify");
    ASSERT_EQ(run_args({"verify", "--out", dir.string(), "--set", "instance.a0.values=[2,1]", "--set",
                        "trainer.optimizer=gd", "--set", "trainer.auto_lr=true", "--set", "trainer.max_iters=100000",
                        "--set", "trainer.grad_tol=1e-11"}),
              exit_ok);
    EXPECT_NE(slurp(dir / "summary.json").find("\"pass\": 1.0"), std::string::npos);
}

TEST(Runner, HelpDocumentsKeys) {
    std::string out;
    EXPECT_EQ(run_args({"--help"}, &out), exit_ok);
    EXPECT_NE(out.find("trainer.grad_tol (number, default"), std::string::npos);
    EXPECT_NE(out.find("--set"), std::string::npos);
}
