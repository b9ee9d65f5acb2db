#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "embedcluster.hpp"
#include "embedio.hpp"
#include "lda.hpp"
#include "nmf.hpp"

namespace chronotopic {

inline constexpr std::size_t kExportTopTerms = 50;

/// Collects written files relative to an output root.
class OutputSink {
public:
    explicit OutputSink(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }
    const std::vector<std::string>& files() const { return files_; }

    void text(const std::string& rel, const std::string& content) {
        auto p = prepare(rel);
        std::ofstream os(p, std::ios::binary);
        os << content;
        if (!os) throw Error("cannot write " + p.string());
    }

    void json(const std::string& rel, const nlohmann::ordered_json& j) { text(rel, j.dump(2) + "\n"); }

    /// Dense rows as EMB1 plus ids file (`<rel>.emb`, `<rel>.ids`).
    void dense(const std::string& rel, const std::vector<std::string>& ids, const DenseMatrix& m) {
        auto set = EmbeddingSet::from_dense(ids, m);
        write_embeddings(set, prepare(rel + ".emb"), prepare(rel + ".ids"));
    }

private:
    std::filesystem::path prepare(const std::string& rel) {
        auto p = root_ / rel;
        std::filesystem::create_directories(p.parent_path());
        if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
        return p;
    }

    std::filesystem::path root_;
    std::vector<std::string> files_;
};

namespace detail {

inline nlohmann::ordered_json terms_json(const TermWeights& tw) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& [t, w] : tw) a.push_back({{"term", t}, {"weight", w}});
    return a;
}

inline std::vector<std::string> numbered(const std::string& stem, std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(stem + std::to_string(i));
    return ids;
}

inline nlohmann::ordered_json topics_json(const DenseMatrix& rows, const Vocabulary& vocab) {
    auto a = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
        a.push_back({{"topic", r}, {"terms_top50", terms_json(top_terms(rows.row(r).transpose(), vocab, kExportTopTerms))}});
    return a;
}

}  // namespace detail

inline void export_vocabulary(OutputSink& out, const std::string& rel, const Vocabulary& vocab) {
    std::string s;
    for (std::size_t i = 0; i < vocab.size(); ++i) s += vocab.terms[i] + "\t" + std::to_string(vocab.doc_freq[i]) + "\n";
    out.text(rel, s);
}

/// `<dir>/model.json` plus EMB1 sidecars for the dynamic H and every window W/H.
inline void export_nmf(OutputSink& out, const std::string& dir, const DynamicNmfModel& m, const DynamicNmfOptions& opt) {
    const auto& vocab = *m.vocab;
    nlohmann::ordered_json j;
    j["method"] = "two-level-dynamic-nmf";
    j["k"] = m.k_dynamic();
    j["k_window"] = opt.k_window;
    j["top_n_stack"] = opt.top_n_stack;
    j["seed"] = opt.seed;
    j["vocabulary_size"] = vocab.size();
    j["topics"] = detail::topics_json(m.dynamic_H, vocab);
    auto& windows = j["windows"] = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < m.window_models.size(); ++s) {
        const auto& w = m.window_models[s];
        const std::string stem = dir + "/window_" + std::to_string(s);
        windows.push_back({{"slice", s},
                           {"k", w.k()},
                           {"documents", w.row_ids.size()},
                           {"iterations", w.objective_trace.size() - 1},
                           {"objective", w.objective_trace.back()},
                           {"to_dynamic", m.window_to_dynamic[s]},
                           {"topics", detail::topics_json(w.H, vocab)},
                           {"W", stem + "_W.emb"},
                           {"H", stem + "_H.emb"}});
        out.dense(stem + "_W", w.row_ids, w.W);
        out.dense(stem + "_H", detail::numbered("w" + std::to_string(s) + "_topic", w.k()), w.H);
    }
    j["H"] = dir + "/dynamic_H.emb";
    out.dense(dir + "/dynamic_H", detail::numbered("topic", m.k_dynamic()), m.dynamic_H);
    out.json(dir + "/model.json", j);
}

/// Rows of phi in canonical topic order, theta columns likewise.
inline void export_lda(OutputSink& out, const std::string& dir, const DynamicLdaModel& m, const LdaOptions& opt) {
    const auto& vocab = *m.slice_models.front().vocab;
    nlohmann::ordered_json j;
    j["method"] = "gibbs-aligned-approximation-of-dtm";
    j["k"] = m.k();
    j["alpha"] = m.slice_models.front().alpha;
    j["beta"] = opt.beta;
    j["kappa"] = m.kappa;
    j["iterations"] = opt.iterations;
    j["burn_in"] = opt.burn_in;
    j["seed"] = opt.seed;
    j["topics"] = detail::topics_json(m.mean_phi(), vocab);
    auto& slices = j["slices"] = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < m.slice_models.size(); ++t) {
        const auto& sm = m.slice_models[t];
        const std::string stem = dir + "/slice_" + std::to_string(t);
        DenseMatrix phi = m.canonical_phi(t);
        DenseMatrix theta(sm.theta.rows(), sm.theta.cols());
        for (std::size_t z = 0; z < sm.k(); ++z) theta.col(static_cast<Eigen::Index>(m.alignment[t][z])) = sm.theta.col(static_cast<Eigen::Index>(z));
        slices.push_back({{"slice", t},
                          {"documents", sm.row_ids.size()},
                          {"alignment", m.alignment[t]},
                          {"warnings", sm.warnings},
                          {"topics", detail::topics_json(phi, vocab)},
                          {"phi", stem + "_phi.emb"},
                          {"theta", stem + "_theta.emb"}});
        out.dense(stem + "_phi", detail::numbered("topic", m.k()), phi);
        out.dense(stem + "_theta", sm.row_ids, theta);
    }
    out.json(dir + "/model.json", j);
}

inline void export_embedding_model(OutputSink& out, const std::string& dir, const EmbeddingTopicModel& m,
                                   const EmbeddingModelConfig& cfg) {
    const auto& vocab = *m.topics.vocab;
    nlohmann::ordered_json j;
    j["method"] = "embedding-cluster-ctfidf";
    j["reduction"] = "pca";
    j["clustering"] = "dbscan";
    j["pca_dims"] = m.pca.dims();
    j["explained_variance"] = m.pca.explained_variance;
    j["eps"] = m.eps;
    j["min_pts"] = m.min_pts;
    j["tuning"] = to_string(cfg.tuning);
    j["tuning_order"] = cfg.order == TuningOrder::global_first ? "global_first" : "evolutionary_first";
    j["k"] = m.clusters.k;
    j["outliers"] = m.clusters.outliers();
    auto topics = detail::topics_json(m.topics.weights, vocab);
    for (std::size_t c = 0; c < m.clusters.k; ++c) topics[c]["documents"] = m.topics.sizes[c];
    j["topics"] = topics;
    j["ctfidf"] = dir + "/ctfidf.emb";
    out.dense(dir + "/ctfidf", detail::numbered("topic", m.clusters.k), m.topics.weights);

    std::string labels = "id,label\n";
    for (std::size_t r = 0; r < m.row_ids.size(); ++r) labels += m.row_ids[r] + "," + std::to_string(m.clusters.labels[r]) + "\n";
    out.text(dir + "/labels.csv", labels);

    std::ostringstream per_slice;
    per_slice << "topic,slice,rank,term,weight\n";
    for (std::size_t c = 0; c < m.clusters.k; ++c)
        for (std::size_t s = 0; s < m.dynamic.num_slices(); ++s) {
            auto top = m.dynamic.top_terms(c, s, 10);
            for (std::size_t r = 0; r < top.size(); ++r)
                per_slice << c << ',' << s << ',' << r + 1 << ',' << top[r].first << ',' << fixed6(top[r].second) << '\n';
        }
    out.text(dir + "/topics_per_slice.csv", per_slice.str());
    out.json(dir + "/model.json", j);
}

}  // namespace chronotopic
