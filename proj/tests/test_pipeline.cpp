#include <gtest/gtest.h>

#include <chronotopic/pipeline.hpp>

#include "test_util.hpp"

namespace ct = chronotopic;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CHRONO_DATA_DIR;
const fs::path kSampleConfig = kData / "sample" / "config.toml";

struct CliResult {
    int code = -1;
    std::string out, err;
};

CliResult run_cli(const std::string& args, const testutil::TempDir& scratch, const std::string& env = "") {
    const auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + std::string(CHRONO_CLI_PATH) + "\" " + args + " >\"" + out.string() +
                            "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = ct::detail::read_file(out);
    r.err = ct::detail::read_file(err);
    return r;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = ct::detail::read_file(e.path());
    return files;
}

ct::RunConfig sample_config() { return ct::load_config(kSampleConfig); }

}  // namespace

TEST(Sha256, KnownVectors) {
    EXPECT_EQ(ct::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(ct::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, SampleLoadsWithPathsRelativeToFile) {
    auto cfg = sample_config();
    EXPECT_EQ(cfg.slices.T, 10u);
    EXPECT_EQ(cfg.resolve(cfg.corpus.metadata), kData / "sample" / "metadata.csv");
    EXPECT_TRUE(fs::exists(cfg.resolve(cfg.prep.lemmas)));
    EXPECT_EQ(cfg.run.models, (std::vector<std::string>{"nmf", "lda", "bert"}));
}

TEST(Config, UnknownKeysAreRejectedByName) {
    testutil::TempDir dir{"cfg"};
    dir.write("a.toml", "[nmf]\nk_window = 3\nfoo = 1\n");
    try {
        ct::load_config(dir / "a.toml");
        FAIL() << "expected ConfigError";
    } catch (const ct::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("'nmf.foo'"), std::string::npos) << e.what();
    }
    dir.write("b.toml", "foo = 1\n");
    try {
        ct::load_config(dir / "b.toml");
        FAIL() << "expected ConfigError";
    } catch (const ct::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("'foo'"), std::string::npos) << e.what();
    }
    dir.write("c.toml", "[bogus]\nk = 1\n");
    EXPECT_THROW(ct::load_config(dir / "c.toml"), ct::ConfigError);
}

TEST(Config, TypesAndRangesAreChecked) {
    testutil::TempDir dir{"cfg"};
    const std::vector<std::string> bad{
        "[lda]\nk = \"ten\"\n",     "[lda]\nk = 1\n",          "[lda]\nkappa = 1.5\n",       "[slices]\nT = 1\n",
        "[slices]\nmode = \"x\"\n", "[nmf]\ntol = true\n",     "[run]\nmodels = [\"x\"]\n",  "[run]\nseed = -1\n",
        "[corpus]\nmax_tokens = 50\n", "[prep]\nmax_df_ratio = 0\n", "[viz]\nformats = \"svg\"\n", "[lda\n",
    };
    for (std::size_t i = 0; i < bad.size(); ++i) {
        const auto name = "bad" + std::to_string(i) + ".toml";
        dir.write(name, bad[i]);
        EXPECT_THROW(ct::load_config(dir / name), ct::ConfigError) << bad[i];
    }
    EXPECT_THROW(ct::load_config(dir / "missing.toml"), ct::ConfigError);
}

TEST(Config, IntegersAreAcceptedForReals) {
    testutil::TempDir dir{"cfg"};
    dir.write("a.toml", "[lda]\nkappa = 1\nbeta = 2\n");
    auto cfg = ct::load_config(dir / "a.toml");
    EXPECT_EQ(cfg.lda.kappa, 1.0);
    EXPECT_EQ(cfg.lda.beta, 2.0);
}

TEST(Config, Overrides) {
    auto cfg = sample_config();
    ct::apply_override(cfg, "lda.k=7");
    ct::apply_override(cfg, "slices.mode=quantile");  // bare word falls back to a string
    ct::apply_override(cfg, "run.models=[\"lda\"]");
    ct::apply_override(cfg, " bert.eps = 0.25 ");
    EXPECT_EQ(cfg.lda.k, 7u);
    EXPECT_EQ(cfg.slices.mode, "quantile");
    EXPECT_EQ(cfg.run.models, std::vector<std::string>{"lda"});
    EXPECT_EQ(cfg.bert.eps, 0.25);
    EXPECT_THROW(ct::apply_override(cfg, "lda.k"), ct::ConfigError);
    EXPECT_THROW(ct::apply_override(cfg, "lda.zzz=1"), ct::ConfigError);
    EXPECT_THROW(ct::apply_override(cfg, "lda.k=abc"), ct::ConfigError);
}

TEST(Config, HashIgnoresOutputDirAndThreads) {
    auto a = sample_config(), b = sample_config();
    b.run.output_dir = "elsewhere";
    b.run.threads = 8;
    EXPECT_EQ(a.hash(), b.hash());
    b.run.seed += 1;
    EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, CrossFieldValidation) {
    auto cfg = sample_config();
    cfg.lda.burn_in = cfg.lda.iterations;
    EXPECT_THROW(ct::validate(cfg, true), ct::ConfigError);
    cfg = sample_config();
    cfg.nmf.k_dynamic = cfg.nmf.k_window * cfg.slices.T + 1;
    EXPECT_THROW(ct::validate(cfg, true), ct::ConfigError);
}

TEST(Pipeline, StagePrefixOnRuntimeErrors) {
    testutil::TempDir dir{"pipe"};
    auto cfg = sample_config();
    cfg.corpus.metadata = (dir / "nope.csv").string();
    try {
        ct::run_pipeline(cfg, ct::Stage::ingest, dir / "out");
        FAIL() << "expected Error";
    } catch (const ct::ConfigError&) {
        FAIL() << "runtime failure reported as config error";
    } catch (const ct::Error& e) {
        EXPECT_EQ(std::string(e.what()).rfind("stage 'ingest'", 0), 0u) << e.what();
    }
}

TEST(Pipeline, IngestOnlyWritesCorpusOutputs) {
    testutil::TempDir dir{"pipe"};
    auto res = ct::run_pipeline(sample_config(), ct::Stage::ingest, dir / "out");
    std::vector<std::string> paths;
    for (const auto& o : res.manifest["outputs"]) paths.push_back(o["path"]);
    EXPECT_EQ(paths, (std::vector<std::string>{"corpus/documents.csv", "corpus/load_report.json", "run/config.json"}));
    auto report = nlohmann::json::parse(ct::detail::read_file(dir / "out" / "corpus" / "load_report.json"));
    EXPECT_EQ(report["loaded"], 60);
}

TEST(Pipeline, ManifestDigestsMatchFiles) {
    testutil::TempDir dir{"pipe"};
    auto res = ct::run_pipeline(sample_config(), ct::Stage::pipeline, dir / "out");
    ASSERT_GE(res.manifest["outputs"].size(), 6u);
    std::vector<std::string> paths;
    for (const auto& o : res.manifest["outputs"]) {
        const auto bytes = ct::detail::read_file(dir / "out" / o["path"].get<std::string>());
        EXPECT_EQ(o["sha256"], ct::sha256_hex(bytes));
        EXPECT_EQ(o["bytes"], bytes.size());
        paths.push_back(o["path"]);
    }
    EXPECT_TRUE(std::is_sorted(paths.begin(), paths.end()));
    for (const char* p : {"eval/report.json", "eval/table.txt", "prep/vocabulary.tsv", "slices/slices.json", "nmf/model.json",
                          "lda/model.json", "bert/model.json", "viz/nmf_intertopic.svg", "viz/lda_topics_over_time.csv"})
        EXPECT_NE(std::find(paths.begin(), paths.end(), p), paths.end()) << p;
    EXPECT_EQ(res.manifest["config_hash"], sample_config().hash());
    EXPECT_EQ(res.manifest["seeds"]["lda"], ct::derive_seed(42, "lda"));
    EXPECT_TRUE(fs::exists(dir / "out" / "timings.json"));
}

TEST(Pipeline, FrequencyRowsSumToSliceSizes) {
    testutil::TempDir dir{"pipe"};
    auto cfg = sample_config();
    auto res = ct::run_pipeline(cfg, ct::Stage::viz, dir / "out");
    auto slices = nlohmann::json::parse(ct::detail::read_file(dir / "out" / "slices" / "slices.json"));
    ASSERT_EQ(res.models.size(), 3u);
    for (const auto& m : res.models)
        for (Eigen::Index t = 0; t < m.frequency.rows(); ++t) {
            int total = m.frequency.row(t).sum() + (m.outliers.empty() ? 0 : m.outliers[t]);
            EXPECT_EQ(total, slices["sizes"][t].get<int>()) << m.name << " slice " << t;
        }
}

TEST(Pipeline, EvalWithoutWordVectorsWarns) {
    testutil::TempDir dir{"pipe"};
    auto cfg = sample_config();
    cfg.eval.word_vectors.clear();
    cfg.run.models = {"nmf"};
    auto res = ct::run_pipeline(cfg, ct::Stage::eval, dir / "out");
    EXPECT_FALSE(fs::exists(dir / "out" / "eval" / "report.json"));
    ASSERT_FALSE(res.warnings.empty());
    EXPECT_NE(res.warnings.back().find("eval skipped"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
    testutil::TempDir dir{"cli"};
    dir.write("bad.toml", ct::detail::read_file(kSampleConfig) + "\n[extra]\nfoo = 1\n");
    dir.write("bad2.toml", "foo = 3\n");
    auto r = run_cli("pipeline --config \"" + (dir / "bad2.toml").string() + "\"", dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("foo"), std::string::npos) << r.err;
    r = run_cli("pipeline --config \"" + (dir / "bad.toml").string() + "\"", dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("extra.foo"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrorsExitTwo) {
    testutil::TempDir dir{"cli"};
    EXPECT_EQ(run_cli("", dir).code, 2);
    EXPECT_EQ(run_cli("pipeline", dir).code, 2);
    EXPECT_EQ(run_cli("pipeline --config \"" + (dir / "none.toml").string() + "\"", dir).code, 2);
    EXPECT_EQ(run_cli("lda --config \"" + kSampleConfig.string() + "\" --set lda.kappa=2", dir).code, 2);
    EXPECT_EQ(run_cli("lda --config \"" + kSampleConfig.string() + "\" --threads 0", dir).code, 2);
    EXPECT_EQ(run_cli("--help", dir).code, 0);
}

TEST(Cli, RuntimeErrorExitsOne) {
    testutil::TempDir dir{"cli"};
    auto r = run_cli("ingest --config \"" + kSampleConfig.string() + "\" --set corpus.metadata=missing.csv -o \"" +
                         (dir / "out").string() + "\"",
                     dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("stage 'ingest'"), std::string::npos) << r.err;
}

TEST(Cli, SampleRunIsDeterministicAcrossRunsAndThreads) {
    testutil::TempDir dir{"cli"};
    const std::string base = "pipeline --config \"" + kSampleConfig.string() + "\" -o ";
    auto a = run_cli(base + "\"" + (dir / "a").string() + "\"", dir);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("TC-Embed"), std::string::npos);
    auto b = run_cli(base + "\"" + (dir / "b").string() + "\" --threads 4", dir);
    ASSERT_EQ(b.code, 0) << b.err;
    auto c = run_cli(base + "\"" + (dir / "c").string() + "\"", dir, "CHRONO_THREADS=3");
    ASSERT_EQ(c.code, 0) << c.err;

    auto ta = tree(dir / "a"), tb = tree(dir / "b"), tc = tree(dir / "c");
    ta.erase("timings.json"), tb.erase("timings.json"), tc.erase("timings.json");
    EXPECT_GE(ta.size(), 6u);
    EXPECT_TRUE(ta == tb);
    EXPECT_TRUE(ta == tc);
    EXPECT_EQ(ta["manifest.json"], tb["manifest.json"]);
}

TEST(Cli, SeedChangesHashAndFormatRestrictsViz) {
    testutil::TempDir dir{"cli"};
    auto r = run_cli("viz --config \"" + kSampleConfig.string() + "\" --seed 7 --format svg --set 'run.models=[\"nmf\"]' -o \"" +
                         (dir / "out").string() + "\"",
                     dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto manifest = nlohmann::json::parse(ct::detail::read_file(dir / "out" / "manifest.json"));
    EXPECT_EQ(manifest["seed"], 7);
    EXPECT_NE(manifest["config_hash"], sample_config().hash());
    EXPECT_TRUE(fs::exists(dir / "out" / "viz" / "nmf_intertopic.svg"));
    EXPECT_FALSE(fs::exists(dir / "out" / "viz" / "nmf_intertopic.csv"));
    EXPECT_FALSE(fs::exists(dir / "out" / "lda"));
}

TEST(Cli, RepeatedSetFlagsAccumulate) {
    testutil::TempDir dir{"cli"};
    auto r = run_cli("slice --config \"" + kSampleConfig.string() + "\" --set slices.T=4 --set slices.mode=quantile -o \"" +
                         (dir / "out").string() + "\"",
                     dir);
    ASSERT_EQ(r.code, 0) << r.err;
    auto cfg = nlohmann::json::parse(ct::detail::read_file(dir / "out" / "run" / "config.json"));
    EXPECT_EQ(cfg["slices"]["T"], 4);
    EXPECT_EQ(cfg["slices"]["mode"], "quantile");
}
