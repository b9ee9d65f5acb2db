#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>
#include <toml.hpp>

#include "core.hpp"
#include "corpus.hpp"
#include "embedcluster.hpp"
#include "embedio.hpp"
#include "eval.hpp"
#include "export.hpp"
#include "lda.hpp"
#include "matrix.hpp"
#include "nmf.hpp"
#include "textprep.hpp"
#include "viz.hpp"

namespace chronotopic {

inline constexpr const char* kVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

struct RunConfig {
    std::filesystem::path base_dir = ".";

    struct {
        std::string metadata;
        std::string text_root;
        bool split = true;
        std::size_t max_tokens = 10000;
        bool combine = true;
        std::size_t min_tokens = 300;
    } corpus;

    struct {
        std::string lemmas;
        std::string stopwords;
        bool fold = true;
        std::size_t min_df = 5;
        double max_df_ratio = 0.9;
        bool write_matrix = false;
    } prep;

    struct {
        std::size_t T = 10;
        std::string mode = "equal_width";
    } slices;

    struct {
        std::uint64_t seed = 0;
        std::string output_dir = "out";
        unsigned threads = 1;
        std::vector<std::string> models{"nmf", "lda", "bert"};
    } run;

    struct {
        std::size_t k_window = 10;
        std::size_t k_dynamic = 10;
        std::size_t top_n_stack = 20;
        std::size_t max_iter = 500;
        double tol = 1e-5;
        std::string init = "nndsvd";
        std::string weighting = "tfidf";
    } nmf;

    struct {
        std::size_t k = 10;
        double alpha = 0;  // 0 = 50 / k
        double beta = 0.01;
        std::size_t iterations = 1000;
        std::size_t burn_in = 500;
        double kappa = 0.5;
        bool parallel_sweep = false;
    } lda;

    struct {
        std::string embeddings;
        std::string ids;  // defaults to embeddings with .ids
        std::size_t pca_dims = 5;
        double eps = 0;
        std::size_t min_pts = 10;
        std::string tuning = "both";
        std::string order = "global_first";
        std::size_t top_n = 10;
    } bert;

    struct {
        std::string word_vectors;
        std::string word_ids;
        std::size_t top_topics = 5;
        std::size_t top_terms = 10;
    } eval;

    struct {
        std::vector<std::string> formats{"csv", "json", "svg"};
    } viz;

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    static std::string ids_for(const std::string& emb) {
        return std::filesystem::path(emb).replace_extension(".ids").string();
    }

    /// Every setting that can change results; output location and thread count excluded.
    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["corpus"] = {{"metadata", corpus.metadata}, {"text_root", corpus.text_root}, {"split", corpus.split},
                       {"max_tokens", corpus.max_tokens}, {"combine", corpus.combine}, {"min_tokens", corpus.min_tokens}};
        j["prep"] = {{"lemmas", prep.lemmas},   {"stopwords", prep.stopwords},       {"fold", prep.fold},
                     {"min_df", prep.min_df},   {"max_df_ratio", prep.max_df_ratio}, {"write_matrix", prep.write_matrix}};
        j["slices"] = {{"T", slices.T}, {"mode", slices.mode}};
        j["run"] = {{"seed", run.seed}, {"models", run.models}};
        j["nmf"] = {{"k_window", nmf.k_window}, {"k_dynamic", nmf.k_dynamic}, {"top_n_stack", nmf.top_n_stack}, {"max_iter", nmf.max_iter},
                    {"tol", nmf.tol},           {"init", nmf.init},           {"weighting", nmf.weighting}};
        j["lda"] = {{"k", lda.k},         {"alpha", lda.alpha}, {"beta", lda.beta},   {"iterations", lda.iterations},
                    {"burn_in", lda.burn_in}, {"kappa", lda.kappa}, {"parallel_sweep", lda.parallel_sweep}};
        j["bert"] = {{"embeddings", bert.embeddings}, {"ids", bert.ids},     {"pca_dims", bert.pca_dims}, {"eps", bert.eps},
                     {"min_pts", bert.min_pts},       {"tuning", bert.tuning}, {"order", bert.order},     {"top_n", bert.top_n}};
        j["eval"] = {{"word_vectors", eval.word_vectors}, {"word_ids", eval.word_ids}, {"top_topics", eval.top_topics},
                     {"top_terms", eval.top_terms}};
        j["viz"] = {{"formats", viz.formats}};
        return j;
    }

    std::string hash() const { return sha256_hex(to_json().dump()); }
};

namespace config_detail {

using Setter = std::function<void(RunConfig&, const toml::node&, const std::string&)>;

inline std::string type_error(const std::string& key, const char* want) {
    return "config key '" + key + "' must be " + want;
}

inline std::int64_t as_int(const toml::node& n, const std::string& key) {
    auto v = n.value_exact<std::int64_t>();
    if (!v) throw ConfigError(type_error(key, "an integer"));
    return *v;
}

inline Setter size_setter(std::function<std::size_t&(RunConfig&)> field, std::int64_t min_value) {
    return [field, min_value](RunConfig& c, const toml::node& n, const std::string& key) {
        auto v = as_int(n, key);
        if (v < min_value) throw ConfigError("config key '" + key + "' must be >= " + std::to_string(min_value));
        field(c) = static_cast<std::size_t>(v);
    };
}

inline Setter real_setter(std::function<double&(RunConfig&)> field, double lo, double hi) {
    return [field, lo, hi](RunConfig& c, const toml::node& n, const std::string& key) {
        std::optional<double> v;
        if (auto i = n.value_exact<std::int64_t>()) v = static_cast<double>(*i);
        if (auto d = n.value_exact<double>()) v = *d;
        if (!v) throw ConfigError(type_error(key, "a number"));
        if (!(*v >= lo && *v <= hi))
            throw ConfigError("config key '" + key + "' must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        field(c) = *v;
    };
}

inline Setter bool_setter(std::function<bool&(RunConfig&)> field) {
    return [field](RunConfig& c, const toml::node& n, const std::string& key) {
        auto v = n.value_exact<bool>();
        if (!v) throw ConfigError(type_error(key, "true or false"));
        field(c) = *v;
    };
}

inline Setter string_setter(std::function<std::string&(RunConfig&)> field, std::vector<std::string> choices = {}) {
    return [field, choices](RunConfig& c, const toml::node& n, const std::string& key) {
        auto v = n.value_exact<std::string>();
        if (!v) throw ConfigError(type_error(key, "a string"));
        if (!choices.empty() && std::find(choices.begin(), choices.end(), *v) == choices.end()) {
            std::string list;
            for (const auto& s : choices) list += (list.empty() ? "" : ", ") + s;
            throw ConfigError("config key '" + key + "' has invalid value '" + *v + "' (expected one of: " + list + ")");
        }
        field(c) = *v;
    };
}

inline Setter list_setter(std::function<std::vector<std::string>&(RunConfig&)> field, std::vector<std::string> choices) {
    return [field, choices](RunConfig& c, const toml::node& n, const std::string& key) {
        const auto* arr = n.as_array();
        if (!arr) throw ConfigError(type_error(key, "an array of strings"));
        std::vector<std::string> out;
        for (const auto& e : *arr) {
            auto v = e.value_exact<std::string>();
            if (!v) throw ConfigError(type_error(key, "an array of strings"));
            if (std::find(choices.begin(), choices.end(), *v) == choices.end())
                throw ConfigError("config key '" + key + "' has invalid entry '" + *v + "'");
            if (std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
        }
        field(c) = out;
    };
}

inline const std::map<std::string, Setter>& schema() {
    static const std::map<std::string, Setter> s = [] {
        std::map<std::string, Setter> m;
        m["corpus.metadata"] = string_setter([](RunConfig& c) -> std::string& { return c.corpus.metadata; });
        m["corpus.text_root"] = string_setter([](RunConfig& c) -> std::string& { return c.corpus.text_root; });
        m["corpus.split"] = bool_setter([](RunConfig& c) -> bool& { return c.corpus.split; });
        m["corpus.max_tokens"] = size_setter([](RunConfig& c) -> std::size_t& { return c.corpus.max_tokens; }, 100);
        m["corpus.combine"] = bool_setter([](RunConfig& c) -> bool& { return c.corpus.combine; });
        m["corpus.min_tokens"] = size_setter([](RunConfig& c) -> std::size_t& { return c.corpus.min_tokens; }, 1);
        m["prep.lemmas"] = string_setter([](RunConfig& c) -> std::string& { return c.prep.lemmas; });
        m["prep.stopwords"] = string_setter([](RunConfig& c) -> std::string& { return c.prep.stopwords; });
        m["prep.fold"] = bool_setter([](RunConfig& c) -> bool& { return c.prep.fold; });
        m["prep.min_df"] = size_setter([](RunConfig& c) -> std::size_t& { return c.prep.min_df; }, 1);
        m["prep.max_df_ratio"] = real_setter([](RunConfig& c) -> double& { return c.prep.max_df_ratio; }, 1e-12, 1.0);
        m["prep.write_matrix"] = bool_setter([](RunConfig& c) -> bool& { return c.prep.write_matrix; });
        m["slices.T"] = size_setter([](RunConfig& c) -> std::size_t& { return c.slices.T; }, 2);
        m["slices.mode"] = string_setter([](RunConfig& c) -> std::string& { return c.slices.mode; }, {"equal_width", "quantile"});
        m["run.seed"] = [](RunConfig& c, const toml::node& n, const std::string& key) {
            auto v = as_int(n, key);
            if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
            c.run.seed = static_cast<std::uint64_t>(v);
        };
        m["run.output_dir"] = string_setter([](RunConfig& c) -> std::string& { return c.run.output_dir; });
        m["run.threads"] = [](RunConfig& c, const toml::node& n, const std::string& key) {
            auto v = as_int(n, key);
            if (v < 1 || v > 1024) throw ConfigError("config key '" + key + "' must lie in [1, 1024]");
            c.run.threads = static_cast<unsigned>(v);
        };
        m["run.models"] = list_setter([](RunConfig& c) -> std::vector<std::string>& { return c.run.models; }, {"nmf", "lda", "bert"});
        m["nmf.k_window"] = size_setter([](RunConfig& c) -> std::size_t& { return c.nmf.k_window; }, 1);
        m["nmf.k_dynamic"] = size_setter([](RunConfig& c) -> std::size_t& { return c.nmf.k_dynamic; }, 1);
        m["nmf.top_n_stack"] = size_setter([](RunConfig& c) -> std::size_t& { return c.nmf.top_n_stack; }, 1);
        m["nmf.max_iter"] = size_setter([](RunConfig& c) -> std::size_t& { return c.nmf.max_iter; }, 1);
        m["nmf.tol"] = real_setter([](RunConfig& c) -> double& { return c.nmf.tol; }, 0.0, 1.0);
        m["nmf.init"] = string_setter([](RunConfig& c) -> std::string& { return c.nmf.init; }, {"nndsvd", "random"});
        m["nmf.weighting"] = string_setter([](RunConfig& c) -> std::string& { return c.nmf.weighting; }, {"tfidf", "counts"});
        m["lda.k"] = size_setter([](RunConfig& c) -> std::size_t& { return c.lda.k; }, 2);
        m["lda.alpha"] = real_setter([](RunConfig& c) -> double& { return c.lda.alpha; }, 0.0, 1e6);
        m["lda.beta"] = real_setter([](RunConfig& c) -> double& { return c.lda.beta; }, 1e-12, 1e6);
        m["lda.iterations"] = size_setter([](RunConfig& c) -> std::size_t& { return c.lda.iterations; }, 1);
        m["lda.burn_in"] = size_setter([](RunConfig& c) -> std::size_t& { return c.lda.burn_in; }, 0);
        m["lda.kappa"] = real_setter([](RunConfig& c) -> double& { return c.lda.kappa; }, 0.0, 1.0);
        m["lda.parallel_sweep"] = bool_setter([](RunConfig& c) -> bool& { return c.lda.parallel_sweep; });
        m["bert.embeddings"] = string_setter([](RunConfig& c) -> std::string& { return c.bert.embeddings; });
        m["bert.ids"] = string_setter([](RunConfig& c) -> std::string& { return c.bert.ids; });
        m["bert.pca_dims"] = size_setter([](RunConfig& c) -> std::size_t& { return c.bert.pca_dims; }, 1);
        m["bert.eps"] = real_setter([](RunConfig& c) -> double& { return c.bert.eps; }, 0.0, 1e300);
        m["bert.min_pts"] = size_setter([](RunConfig& c) -> std::size_t& { return c.bert.min_pts; }, 1);
        m["bert.tuning"] = string_setter([](RunConfig& c) -> std::string& { return c.bert.tuning; },
                                         {"none", "global", "evolutionary", "both"});
        m["bert.order"] = string_setter([](RunConfig& c) -> std::string& { return c.bert.order; }, {"global_first", "evolutionary_first"});
        m["bert.top_n"] = size_setter([](RunConfig& c) -> std::size_t& { return c.bert.top_n; }, 1);
        m["eval.word_vectors"] = string_setter([](RunConfig& c) -> std::string& { return c.eval.word_vectors; });
        m["eval.word_ids"] = string_setter([](RunConfig& c) -> std::string& { return c.eval.word_ids; });
        m["eval.top_topics"] = size_setter([](RunConfig& c) -> std::size_t& { return c.eval.top_topics; }, 1);
        m["eval.top_terms"] = size_setter([](RunConfig& c) -> std::size_t& { return c.eval.top_terms; }, 2);
        m["viz.formats"] = list_setter([](RunConfig& c) -> std::vector<std::string>& { return c.viz.formats; }, {"csv", "json", "svg"});
        return m;
    }();
    return s;
}

inline void apply(RunConfig& cfg, const std::string& key, const toml::node& value) {
    auto it = schema().find(key);
    if (it == schema().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, value, key);
}

}  // namespace config_detail

/// Applies every key of a parsed TOML document; unknown keys are rejected.
inline void apply_config_table(RunConfig& cfg, const toml::table& root) {
    for (const auto& [section, node] : root) {
        const std::string name(section.str());
        const auto* tbl = node.as_table();
        if (!tbl) throw ConfigError("unknown config key '" + name + "'");
        for (const auto& [key, value] : *tbl) config_detail::apply(cfg, name + "." + std::string(key.str()), value);
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    RunConfig cfg;
    cfg.base_dir = std::filesystem::absolute(path).parent_path();
    toml::table root;
    try {
        root = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << path.string() << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
        throw ConfigError(os.str());
    }
    apply_config_table(cfg, root);
    return cfg;
}

/// `section.key=value`; the value is read as a TOML value, or as a bare string if that fails.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    const std::string key = detail::trim(assignment.substr(0, eq));
    const std::string raw = detail::trim(assignment.substr(eq + 1));
    toml::table parsed;
    try {
        parsed = toml::parse("v = " + raw);
    } catch (const toml::parse_error&) {
        parsed = toml::table{{"v", raw}};
    }
    config_detail::apply(cfg, key, *parsed.get("v"));
}

/// Cross-field checks run before any stage.
inline void validate(const RunConfig& cfg, bool needs_corpus) {
    if (needs_corpus) {
        if (cfg.corpus.metadata.empty()) throw ConfigError("config key 'corpus.metadata' is required");
        if (cfg.prep.lemmas.empty()) throw ConfigError("config key 'prep.lemmas' is required");
        if (cfg.prep.stopwords.empty()) throw ConfigError("config key 'prep.stopwords' is required");
    }
    if (cfg.lda.burn_in >= cfg.lda.iterations) throw ConfigError("config key 'lda.burn_in' must be smaller than 'lda.iterations'");
    if (cfg.nmf.k_dynamic > cfg.nmf.k_window * cfg.slices.T)
        throw ConfigError("config key 'nmf.k_dynamic' exceeds the number of window topics (k_window * T)");
}

enum class Stage { ingest, prep, slice, nmf, lda, bert, eval, viz, pipeline };

inline Stage parse_stage(const std::string& s) {
    static const std::map<std::string, Stage> m{{"ingest", Stage::ingest}, {"prep", Stage::prep}, {"slice", Stage::slice},
                                                {"nmf", Stage::nmf},       {"lda", Stage::lda},   {"bert", Stage::bert},
                                                {"eval", Stage::eval},     {"viz", Stage::viz},   {"pipeline", Stage::pipeline}};
    auto it = m.find(s);
    if (it == m.end()) throw ConfigError("unknown stage '" + s + "'");
    return it->second;
}

inline std::string to_string(Stage s) {
    static const char* names[] = {"ingest", "prep", "slice", "nmf", "lda", "bert", "eval", "viz", "pipeline"};
    return names[static_cast<int>(s)];
}

/// Per-model view shared by evaluation and visualisation.
struct ModelSummary {
    std::string name;
    std::string label;
    DenseMatrix topic_term;
    std::shared_ptr<const Vocabulary> vocab;
    Eigen::MatrixXi frequency;
    std::vector<int> outliers;

    std::vector<TopicDescriptor> descriptors(std::size_t n) const {
        std::vector<TopicDescriptor> out;
        for (Eigen::Index t = 0; t < topic_term.rows(); ++t) {
            TopicDescriptor d;
            d.id = static_cast<std::size_t>(t);
            for (const auto& [term, w] : top_terms(topic_term.row(t).transpose(), *vocab, n))
                if (w > 0) d.terms.push_back(term);
            d.prevalence = static_cast<std::size_t>(frequency.col(t).sum());
            out.push_back(std::move(d));
        }
        return out;
    }
};

struct RunResult {
    nlohmann::ordered_json manifest;
    nlohmann::ordered_json timings;
    std::vector<std::string> warnings;
    std::vector<ModelSummary> models;
    std::filesystem::path output_dir;
};

namespace pipeline_detail {

template <class Fn>
auto in_stage(const std::string& stage, nlohmann::ordered_json& timings, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto record = [&] {
        timings[stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    try {
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record();
        } else {
            auto r = fn();
            record();
            return r;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw Error("stage '" + stage + "' failed: " + e.what());
    }
}

inline std::string file_digest(const std::filesystem::path& p) { return sha256_hex(detail::read_file(p)); }

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline std::string join_terms(const std::vector<std::string>& terms, std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < std::min(n, terms.size()); ++i) s += (i ? ", " : "") + terms[i];
    return s;
}

}  // namespace pipeline_detail

/// Runs the stages up to `target`, writing outputs, manifest.json and timings.json.
inline RunResult run_pipeline(const RunConfig& cfg, Stage target, const std::filesystem::path& output_dir) {
    validate(cfg, true);
    using pipeline_detail::in_stage;
    RunResult res;
    res.output_dir = output_dir;
    std::filesystem::create_directories(output_dir);
    OutputSink out(output_dir);
    const unsigned threads = cfg.run.threads;
    nlohmann::ordered_json inputs;

    Corpus corpus = in_stage("ingest", res.timings, [&] {
        auto meta = cfg.resolve(cfg.corpus.metadata);
        auto text_root = cfg.corpus.text_root.empty() ? meta.parent_path() : cfg.resolve(cfg.corpus.text_root);
        Corpus c = load_corpus(meta, text_root);
        if (cfg.corpus.split) c = split_long_documents(c, cfg.corpus.max_tokens);
        if (cfg.corpus.combine) c = combine_small_documents(c, cfg.corpus.min_tokens);
        inputs["metadata"] = pipeline_detail::file_digest(meta);
        std::string texts;
        for (const auto& d : c.documents) texts += d.id + '\0' + d.text + '\0';
        inputs["texts"] = sha256_hex(texts);
        out.json("corpus/load_report.json", c.report.to_json());
        std::string listing = "id,date,author,tokens\n";
        for (const auto& d : c.documents)
            listing += pipeline_detail::csv_field(d.id) + "," + std::to_string(d.date) + "," + pipeline_detail::csv_field(d.author) + "," +
                       std::to_string(whitespace_token_count(d.text)) + "\n";
        out.text("corpus/documents.csv", listing);
        return c;
    });

    std::shared_ptr<const Vocabulary> vocab;
    TermDocMatrix counts;
    if (target != Stage::ingest) {
        in_stage("prep", res.timings, [&] {
            auto lemmas = load_lemma_table(cfg.resolve(cfg.prep.lemmas));
            auto stop = load_stopwords(cfg.resolve(cfg.prep.stopwords));
            inputs["lemmas"] = pipeline_detail::file_digest(cfg.resolve(cfg.prep.lemmas));
            inputs["stopwords"] = pipeline_detail::file_digest(cfg.resolve(cfg.prep.stopwords));
            auto streams = preprocess(corpus, lemmas, stop, {.fold = cfg.prep.fold}, threads);
            vocab = std::make_shared<const Vocabulary>(build_vocabulary(streams, cfg.prep.min_df, cfg.prep.max_df_ratio));
            if (vocab->size() == 0) throw Error("vocabulary is empty after min_df/max_df filtering");
            counts = count_matrix(streams, vocab);
            export_vocabulary(out, "prep/vocabulary.tsv", *vocab);
            if (cfg.prep.write_matrix) {
                std::ostringstream os;
                write_matrix_market(os, counts.entries);
                out.text("prep/counts.mtx", os.str());
            }
        });
    }

    SliceSet slices;
    if (target != Stage::ingest && target != Stage::prep) {
        in_stage("slice", res.timings, [&] {
            slices = make_slices(corpus, cfg.slices.T, cfg.slices.mode == "quantile" ? SliceMode::quantile : SliceMode::equal_width);
            out.json("slices/slices.json", slices.to_json(corpus));
        });
    }

    std::vector<std::string> models;
    switch (target) {
        case Stage::nmf: models = {"nmf"}; break;
        case Stage::lda: models = {"lda"}; break;
        case Stage::bert: models = {"bert"}; break;
        case Stage::eval:
        case Stage::viz:
        case Stage::pipeline: models = cfg.run.models; break;
        default: break;
    }

    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    for (const auto& name : models) {
        if (name == "nmf") {
            in_stage("nmf", res.timings, [&] {
                DynamicNmfOptions o;
                o.k_window = cfg.nmf.k_window;
                o.k_dynamic = cfg.nmf.k_dynamic;
                o.top_n_stack = cfg.nmf.top_n_stack;
                o.max_iter = cfg.nmf.max_iter;
                o.tol = cfg.nmf.tol;
                o.init = cfg.nmf.init == "random" ? NmfInit::random : NmfInit::nndsvd;
                o.seed = derive_seed(cfg.run.seed, "nmf");
                o.threads = threads;
                seeds["nmf"] = o.seed;
                const TermDocMatrix A = cfg.nmf.weighting == "tfidf" ? tfidf(counts) : counts;
                std::vector<TermDocMatrix> per;
                for (std::size_t t = 0; t < slices.num_slices(); ++t) per.push_back(slice_matrix(A, slices, t));
                auto model = dynamic_nmf(per, o);
                export_nmf(out, "nmf", model, o);
                res.models.push_back({"nmf", "NMF", model.dynamic_H, vocab, topic_frequency(model, slices), {}});
            });
        } else if (name == "lda") {
            in_stage("lda", res.timings, [&] {
                LdaOptions o;
                o.k = cfg.lda.k;
                o.alpha = cfg.lda.alpha;
                o.beta = cfg.lda.beta;
                o.iterations = cfg.lda.iterations;
                o.burn_in = cfg.lda.burn_in;
                o.seed = derive_seed(cfg.run.seed, "lda");
                o.parallel_sweep = cfg.lda.parallel_sweep;
                o.threads = threads;
                seeds["lda"] = o.seed;
                std::vector<TermDocMatrix> per;
                for (std::size_t t = 0; t < slices.num_slices(); ++t) per.push_back(slice_matrix(counts, slices, t));
                auto model = warm_start_fit(per, o, cfg.lda.kappa);
                for (const auto& m : model.slice_models) res.warnings.insert(res.warnings.end(), m.warnings.begin(), m.warnings.end());
                export_lda(out, "lda", model, o);
                res.models.push_back({"lda", "LDA", model.mean_phi(), vocab, topic_frequency(model, slices), {}});
            });
        } else if (name == "bert") {
            in_stage("bert", res.timings, [&] {
                if (cfg.bert.embeddings.empty()) throw ConfigError("config key 'bert.embeddings' is required for the bert model");
                auto bin = cfg.resolve(cfg.bert.embeddings);
                auto ids = cfg.resolve(cfg.bert.ids.empty() ? RunConfig::ids_for(cfg.bert.embeddings) : cfg.bert.ids);
                auto emb = read_embeddings(bin, ids);
                inputs["doc_embeddings"] = pipeline_detail::file_digest(bin);
                EmbeddingModelConfig ec;
                ec.pca_dims = cfg.bert.pca_dims;
                ec.eps = cfg.bert.eps;
                ec.min_pts = cfg.bert.min_pts;
                ec.tuning = parse_tuning(cfg.bert.tuning);
                ec.order = cfg.bert.order == "evolutionary_first" ? TuningOrder::evolutionary_first : TuningOrder::global_first;
                ec.top_n = cfg.bert.top_n;
                ec.threads = threads;
                auto model = fit_embedding_model(emb, counts, slices, ec);
                export_embedding_model(out, "bert", model, ec);
                res.models.push_back({"bert", "BERTopic-style", model.topics.weights, vocab, model.frequency, model.outlier_series});
            });
        }
    }

    for (const auto& m : res.models) {
        out.text(m.name + "/topic_frequency.csv", topics_over_time(m.frequency, slices.boundaries, {}, m.outliers).to_csv());
    }

    if (target == Stage::eval || target == Stage::pipeline) {
        in_stage("eval", res.timings, [&] {
            if (cfg.eval.word_vectors.empty()) {
                res.warnings.push_back("eval skipped: no eval.word_vectors configured");
                return;
            }
            auto bin = cfg.resolve(cfg.eval.word_vectors);
            auto ids = cfg.resolve(cfg.eval.word_ids.empty() ? RunConfig::ids_for(cfg.eval.word_vectors) : cfg.eval.word_ids);
            auto words = read_embeddings(bin, ids);
            inputs["word_vectors"] = pipeline_detail::file_digest(bin);
            nlohmann::ordered_json report;
            std::vector<std::pair<std::string, EvalReport>> rows;
            for (const auto& m : res.models) {
                auto r = evaluate(m.descriptors(cfg.eval.top_terms), words, cfg.eval.top_topics, cfg.eval.top_terms);
                for (const auto& w : r.warnings) res.warnings.push_back(m.name + " eval: " + w);
                report[m.name] = r.to_json();
                rows.emplace_back(m.label, std::move(r));
            }
            out.json("eval/report.json", report);
            out.text("eval/table.txt", format_eval_table(rows));
        });
    }

    if (target == Stage::viz || target == Stage::pipeline) {
        in_stage("viz", res.timings, [&] {
            auto want = [&](const char* f) { return std::find(cfg.viz.formats.begin(), cfg.viz.formats.end(), f) != cfg.viz.formats.end(); };
            for (const auto& m : res.models) {
                std::vector<std::string> labels;
                for (const auto& d : m.descriptors(5)) labels.push_back(pipeline_detail::join_terms(d.terms, 5));
                auto ts = topics_over_time(m.frequency, slices.boundaries, labels, m.outliers);
                const std::string stem = "viz/" + m.name + "_topics_over_time";
                if (want("csv")) out.text(stem + ".csv", ts.to_csv());
                if (want("json")) out.json(stem + ".json", ts.to_json());
                if (want("svg")) out.text(stem + ".svg", ts.to_svg(m.label + ": topic frequency (# documents) over time"));

                if (m.topic_term.rows() < 2) {
                    res.warnings.push_back(m.name + " viz: intertopic map needs at least 2 topics; skipped");
                    continue;
                }
                std::vector<double> prevalence;
                for (Eigen::Index t = 0; t < m.frequency.cols(); ++t) prevalence.push_back(m.frequency.col(t).sum());
                auto map = intertopic_map(m.topic_term, prevalence, m.vocab.get());
                const std::string mstem = "viz/" + m.name + "_intertopic";
                if (want("csv")) out.text(mstem + ".csv", map.to_csv());
                if (want("json")) out.json(mstem + ".json", map.to_json());
                if (want("svg")) out.text(mstem + ".svg", map.to_svg(m.label + ": intertopic distance map"));
            }
        });
    }

    out.json("run/config.json", cfg.to_json());

    nlohmann::ordered_json manifest;
    manifest["tool"] = "chronotopic";
    manifest["version"] = kVersion;
    manifest["command"] = to_string(target);
    manifest["config_hash"] = cfg.hash();
    manifest["seed"] = cfg.run.seed;
    manifest["seeds"] = seeds;
    manifest["inputs"] = inputs;
    auto files = out.files();
    std::sort(files.begin(), files.end());
    auto& outputs = manifest["outputs"] = nlohmann::ordered_json::array();
    for (const auto& f : files) {
        auto bytes = detail::read_file(output_dir / f);
        outputs.push_back({{"path", f}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
    }
    manifest["warnings"] = res.warnings;
    res.manifest = manifest;
    std::ofstream(output_dir / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
    std::ofstream(output_dir / "timings.json", std::ios::binary) << res.timings.dump(2) << "\n";
    return res;
}

}  // namespace chronotopic
