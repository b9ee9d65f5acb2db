// chrono: command-line front end for the chronotopic pipeline.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "chronotopic/pipeline.hpp"

namespace ct = chronotopic;

namespace {

struct Args {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::vector<std::string> formats;
    bool no_fold = false;
};

int run(const Args& a, ct::Stage stage) {
    auto cfg = ct::load_config(a.config);
    for (const auto& o : a.overrides) ct::apply_override(cfg, o);
    if (a.no_fold) cfg.prep.fold = false;
    if (a.seed) cfg.run.seed = *a.seed;
    if (!a.formats.empty()) ct::apply_override(cfg, "viz.formats=" + [&] {
        std::string s = "[";
        for (const auto& f : a.formats) s += (s.size() > 1 ? ",\"" : "\"") + f + "\"";
        return s + "]";
    }());
    if (a.threads) {
        cfg.run.threads = *a.threads;
    } else if (const char* env = std::getenv("CHRONO_THREADS"); env && *env) {
        ct::apply_override(cfg, std::string("run.threads=") + env);
    }
    const std::filesystem::path out = a.output.empty() ? cfg.resolve(cfg.run.output_dir) : std::filesystem::path(a.output);

    auto res = ct::run_pipeline(cfg, stage, out);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << res.manifest["outputs"].size() << " files to " << out.string() << "\n";
    if (std::filesystem::exists(out / "eval/table.txt")) std::cout << ct::detail::read_file(out / "eval/table.txt");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chrono: dynamic topic modeling over dated corpora"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ct::kVersion);

    Args args;
    std::optional<ct::Stage> chosen;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"ingest", "load metadata and texts, split and combine documents"},
        {"prep", "lemmatize, filter stopwords and build the vocabulary"},
        {"slice", "assign documents to time slices"},
        {"nmf", "fit the two-level dynamic NMF model"},
        {"lda", "fit the warm-started, aligned Gibbs LDA model"},
        {"bert", "cluster document embeddings and extract c-TF-IDF topics"},
        {"eval", "fit the configured models and score TC-Embed and MPJ"},
        {"viz", "fit the configured models and write intertopic maps and topic-over-time plots"},
        {"pipeline", "run every stage"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", args.config, "TOML run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--set", args.overrides, "override a config value, e.g. --set lda.k=20");
        sub->add_option("-j,--threads", args.threads, "worker threads (default: CHRONO_THREADS, then run.threads)")
            ->check(CLI::Range(1u, 1024u));
        sub->add_option("--seed", args.seed, "root random seed");
        sub->add_option("-o,--output", args.output, "output directory");
        sub->add_option("--format", args.formats, "visualisation formats")->check(CLI::IsMember({"csv", "json", "svg"}))->delimiter(',');
        sub->add_flag("--no-fold", args.no_fold, "disable u/v and i/j folding");
        sub->callback([&chosen, name = name] { chosen = ct::parse_stage(name); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        return run(args, *chosen);
    } catch (const ct::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
