#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "embedio.hpp"

namespace chronotopic {

struct TopicDescriptor {
    std::size_t id = 0;
    std::vector<std::string> terms;  // ranked
    std::size_t prevalence = 0;      // documents with this topic as argmax
};

struct Coherence {
    double value = 0;
    std::vector<std::string> missing;       // terms without a vector
    std::vector<std::string> zero_vectors;  // present but all-zero
};

namespace detail {

inline double cosine(std::span<const float> a, std::span<const float> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

}  // namespace detail

/// Mean cosine over unordered pairs of terms that have vectors.
inline Coherence tc_embed_detail(const TopicDescriptor& topic, const EmbeddingSet& word_vecs) {
    const auto idx = word_vecs.index();
    Coherence c;
    std::vector<std::size_t> rows;
    for (const auto& t : topic.terms) {
        auto it = idx.find(t);
        if (it == idx.end()) {
            c.missing.push_back(t);
            continue;
        }
        rows.push_back(it->second);
        auto v = word_vecs.row(it->second);
        if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; })) c.zero_vectors.push_back(t);
    }
    if (rows.size() < 2)
        throw Error("insufficient embedding coverage for topic " + std::to_string(topic.id) + ": " +
                    std::to_string(rows.size()) + " of " + std::to_string(topic.terms.size()) + " terms have vectors");
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j, ++pairs) sum += detail::cosine(word_vecs.row(rows[i]), word_vecs.row(rows[j]));
    c.value = sum / static_cast<double>(pairs);
    return c;
}

inline double tc_embed(const TopicDescriptor& topic, const EmbeddingSet& word_vecs) {
    return tc_embed_detail(topic, word_vecs).value;
}

inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> A(a.begin(), a.end()), B(b.begin(), b.end());
    if (A.empty() && B.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : A) inter += B.count(t);
    return static_cast<double>(inter) / static_cast<double>(A.size() + B.size() - inter);
}

/// Mean Jaccard similarity over unordered topic pairs.
inline double mean_pairwise_jaccard(const std::vector<TopicDescriptor>& topics) {
    if (topics.size() < 2) throw Error("mean_pairwise_jaccard: need at least 2 topics, got " + std::to_string(topics.size()));
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < topics.size(); ++i)
        for (std::size_t j = i + 1; j < topics.size(); ++j, ++pairs) sum += jaccard(topics[i].terms, topics[j].terms);
    return sum / static_cast<double>(pairs);
}

struct EvalReport {
    struct TopicScore {
        std::size_t id = 0;
        std::size_t prevalence = 0;
        std::vector<std::string> terms;
        std::optional<double> tc_embed;
        std::optional<std::string> error;
    };
    struct PairScore {
        std::size_t a = 0, b = 0;
        double jaccard = 0;
    };

    std::vector<TopicScore> topics;  // the selected subset, by prevalence
    std::vector<PairScore> pairs;
    std::optional<double> tc_embed;  // mean over topics with a score
    std::optional<double> mpj;
    std::vector<std::string> missing_terms;
    std::vector<std::string> zero_vector_terms;
    std::vector<std::string> warnings;

    nlohmann::ordered_json to_json() const {
        auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
        nlohmann::ordered_json j;
        j["tc_embed"] = opt(tc_embed);
        j["mpj"] = opt(mpj);
        auto& ts = j["topics"] = nlohmann::ordered_json::array();
        for (const auto& t : topics) {
            nlohmann::ordered_json o;
            o["topic"] = t.id;
            o["prevalence"] = t.prevalence;
            o["terms"] = t.terms;
            o["tc_embed"] = opt(t.tc_embed);
            if (t.error) o["error"] = *t.error;
            ts.push_back(o);
        }
        auto& ps = j["pairs"] = nlohmann::ordered_json::array();
        for (const auto& p : pairs) ps.push_back({{"a", p.a}, {"b", p.b}, {"jaccard", p.jaccard}});
        j["coverage"] = {{"missing_terms", missing_terms}, {"zero_vector_terms", zero_vector_terms}};
        j["warnings"] = warnings;
        return j;
    }
};

/// Scores the `top_topics` most prevalent topics (ties to the lower id) on their first `top_terms` terms.
inline EvalReport evaluate(const std::vector<TopicDescriptor>& all, const EmbeddingSet& word_vecs, std::size_t top_topics = 5,
                           std::size_t top_terms = 10) {
    if (top_topics == 0) throw Error("evaluate: top_topics must be positive");
    std::vector<TopicDescriptor> chosen = all;
    std::stable_sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) {
        if (a.prevalence != b.prevalence) return a.prevalence > b.prevalence;
        return a.id < b.id;
    });
    EvalReport r;
    if (chosen.size() < top_topics)
        r.warnings.push_back("only " + std::to_string(chosen.size()) + " topics available; evaluating all of them instead of the top " +
                             std::to_string(top_topics));
    else
        chosen.resize(top_topics);
    for (auto& t : chosen)
        if (t.terms.size() > top_terms) t.terms.resize(top_terms);

    const auto idx = word_vecs.index();
    std::set<std::string> missing, zero;
    double sum = 0;
    std::size_t scored = 0;
    for (const auto& t : chosen) {
        EvalReport::TopicScore s{t.id, t.prevalence, t.terms, std::nullopt, std::nullopt};
        try {
            auto c = tc_embed_detail(t, word_vecs);
            s.tc_embed = c.value;
            sum += c.value;
            ++scored;
            missing.insert(c.missing.begin(), c.missing.end());
            zero.insert(c.zero_vectors.begin(), c.zero_vectors.end());
        } catch (const Error& e) {
            s.error = e.what();
            for (const auto& term : t.terms)
                if (!idx.count(term)) missing.insert(term);
        }
        r.topics.push_back(std::move(s));
    }
    if (scored > 0) r.tc_embed = sum / static_cast<double>(scored);
    if (scored < chosen.size()) r.warnings.push_back(std::to_string(chosen.size() - scored) + " topic(s) lack embedding coverage");
    if (chosen.size() >= 2) {
        r.mpj = mean_pairwise_jaccard(chosen);
        for (std::size_t i = 0; i < chosen.size(); ++i)
            for (std::size_t j = i + 1; j < chosen.size(); ++j)
                r.pairs.push_back({chosen[i].id, chosen[j].id, jaccard(chosen[i].terms, chosen[j].terms)});
    } else {
        r.warnings.push_back("fewer than 2 topics; MPJ undefined");
    }
    r.missing_terms.assign(missing.begin(), missing.end());
    r.zero_vector_terms.assign(zero.begin(), zero.end());
    return r;
}

/// Plain-text table: one row per model, columns TC-Embed and MPJ.
inline std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::size_t w = 5;
    for (const auto& [name, _] : rows) w = std::max(w, name.size());
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("n/a");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", *v);
        return std::string(buf);
    };
    std::ostringstream os;
    auto line = [&](const std::string& a, const std::string& b, const std::string& c) {
        os << a << std::string(w - a.size() + 2, ' ');
        os << std::string(8 - std::min<std::size_t>(8, b.size()), ' ') << b << "  ";
        os << std::string(8 - std::min<std::size_t>(8, c.size()), ' ') << c << '\n';
    };
    line("Model", "TC-Embed", "MPJ");
    os << std::string(w + 20, '-') << '\n';
    for (const auto& [name, r] : rows) line(name, cell(r.tc_embed), cell(r.mpj));
    return os.str();
}

}  // namespace chronotopic
