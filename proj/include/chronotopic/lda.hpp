#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "matrix.hpp"
#include "nmf.hpp"

namespace chronotopic {

struct LdaOptions {
    std::size_t k = 10;
    double alpha = 0.0;  // <= 0 selects 50/k
    double beta = 0.01;
    std::size_t iterations = 1000;
    std::size_t burn_in = 500;
    std::uint64_t seed = 0;
    bool parallel_sweep = false;  // sample documents against a per-sweep snapshot of the global counts
    unsigned threads = 1;

    double effective_alpha() const { return alpha > 0 ? alpha : 50.0 / static_cast<double>(k); }
};

inline constexpr std::size_t kLdaSnapshotInterval = 10;

struct LdaModel {
    DenseMatrix phi;    // k x V, rows on the simplex
    DenseMatrix theta;  // docs x k, rows on the simplex
    double alpha = 0;
    double beta = 0;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    std::vector<std::string> row_ids;
    std::shared_ptr<const Vocabulary> vocab;
    std::vector<std::string> warnings;

    std::size_t k() const { return static_cast<std::size_t>(phi.rows()); }
};

/// Sampler state exposed to sweep observers (tests check count conservation).
struct GibbsState {
    std::size_t k = 0, vocab_size = 0;
    std::vector<std::vector<std::size_t>> words;         // token word ids per document
    std::vector<std::vector<std::size_t>> assignments;   // token topic per document
    std::vector<std::vector<int>> doc_topic;             // n_{d,k}
    std::vector<int> word_topic;                         // n_{k,w}, word-major: [w * k + topic]
    std::vector<int> topic_total;                        // n_k
};

using SweepObserver = std::function<void(std::size_t sweep, const GibbsState&)>;

namespace detail {

inline void add_token(GibbsState& s, std::size_t d, std::size_t w, std::size_t z, int delta) {
    s.doc_topic[d][z] += delta;
    s.word_topic[w * s.k + z] += delta;
    s.topic_total[z] += delta;
}

inline std::size_t draw(const std::vector<double>& cumulative, double u) {
    const double target = u * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

}  // namespace detail

/// Collapsed Gibbs sampling for LDA. `word_prior`, when given, is a k x V
/// matrix of per-topic Dirichlet word parameters replacing the symmetric beta.
inline LdaModel lda_fit(const TermDocMatrix& counts, const LdaOptions& opt, const DenseMatrix* word_prior = nullptr,
                        const SweepObserver& observer = {}) {
    if (counts.weighting != Weighting::counts) throw Error("lda: input must be a counts matrix");
    if (opt.k < 2) throw Error("lda: k must be >= 2");
    if (opt.iterations <= opt.burn_in) throw Error("lda: iterations must exceed burn_in");
    if (!(opt.beta > 0)) throw Error("lda: beta must be positive");
    const std::size_t K = opt.k, V = counts.cols(), D = counts.rows();
    const double alpha = opt.effective_alpha();
    if (!(alpha > 0)) throw Error("lda: alpha must be positive");
    if (word_prior && (static_cast<std::size_t>(word_prior->rows()) != K || static_cast<std::size_t>(word_prior->cols()) != V))
        throw Error("lda: word prior has the wrong shape");

    // Per-topic prior mass beta_k(w) and its row sums.
    DenseMatrix prior = word_prior ? *word_prior : DenseMatrix::Constant(K, V, opt.beta);
    DenseVector prior_sum(K);
    for (std::size_t z = 0; z < K; ++z) prior_sum(z) = word_prior ? prior.row(z).sum() : static_cast<double>(V) * opt.beta;

    LdaModel model;
    model.alpha = alpha;
    model.beta = opt.beta;
    model.seed = opt.seed;
    model.iterations = opt.iterations;
    model.row_ids = counts.row_ids;
    model.vocab = counts.vocab;

    GibbsState st;
    st.k = K;
    st.vocab_size = V;
    st.words.resize(D);
    st.assignments.resize(D);
    st.doc_topic.assign(D, std::vector<int>(K, 0));
    st.word_topic.assign(V * K, 0);
    st.topic_total.assign(K, 0);

    std::vector<std::mt19937_64> rngs;
    rngs.reserve(D);
    for (std::size_t d = 0; d < D; ++d) {
        for (const auto& e : counts.entries.row(d)) {
            if (e.value != std::floor(e.value))
                throw Error("lda: non-integer count " + std::to_string(e.value) + " for document '" + counts.row_ids[d] + "'");
            st.words[d].insert(st.words[d].end(), static_cast<std::size_t>(e.value), e.col);
        }
        if (st.words[d].empty()) model.warnings.push_back("lda: document '" + counts.row_ids[d] + "' has no in-vocabulary tokens; skipped");
        rngs.emplace_back(derive_seed(opt.seed, fnv1a(counts.row_ids[d])));
    }

    for (std::size_t d = 0; d < D; ++d) {
        st.assignments[d].resize(st.words[d].size());
        for (std::size_t i = 0; i < st.words[d].size(); ++i) {
            std::size_t z = 0;
            if (word_prior) {
                // start from the prior's implied topic-word distribution
                const std::size_t w = st.words[d][i];
                double total = 0;
                for (std::size_t k = 0; k < K; ++k) total += prior(k, w) / prior_sum(k);
                double u = uniform01(rngs[d]) * total;
                for (z = 0; z + 1 < K; ++z) {
                    u -= prior(z, w) / prior_sum(z);
                    if (u < 0) break;
                }
            } else {
                z = std::min(static_cast<std::size_t>(uniform01(rngs[d]) * static_cast<double>(K)), K - 1);
            }
            st.assignments[d][i] = z;
            detail::add_token(st, d, st.words[d][i], z, +1);
        }
    }

    auto sample_sequential = [&](std::size_t d, std::vector<double>& cum) {
        auto& z_of = st.assignments[d];
        for (std::size_t i = 0; i < z_of.size(); ++i) {
            const std::size_t w = st.words[d][i];
            detail::add_token(st, d, w, z_of[i], -1);
            double acc = 0;
            for (std::size_t z = 0; z < K; ++z) {
                acc += (st.doc_topic[d][z] + alpha) * (st.word_topic[w * K + z] + prior(z, w)) /
                       (st.topic_total[z] + prior_sum(z));
                cum[z] = acc;
            }
            z_of[i] = detail::draw(cum, uniform01(rngs[d]));
            detail::add_token(st, d, w, z_of[i], +1);
        }
    };

    // Stale-count variant: global tables frozen at the start of the sweep.
    auto sample_snapshot = [&](std::size_t d, const std::vector<int>& word_topic, const std::vector<int>& topic_total,
                               std::vector<double>& cum) {
        auto& z_of = st.assignments[d];
        auto& ndk = st.doc_topic[d];
        for (std::size_t i = 0; i < z_of.size(); ++i) {
            const std::size_t w = st.words[d][i];
            const std::size_t old = z_of[i];
            --ndk[old];
            double acc = 0;
            for (std::size_t z = 0; z < K; ++z) {
                const int self = (z == old) ? 1 : 0;
                acc += (ndk[z] + alpha) * (word_topic[w * K + z] - self + prior(z, w)) / (topic_total[z] - self + prior_sum(z));
                cum[z] = acc;
            }
            z_of[i] = detail::draw(cum, uniform01(rngs[d]));
            ++ndk[z_of[i]];
        }
    };

    DenseMatrix phi_acc = DenseMatrix::Zero(K, V), theta_acc = DenseMatrix::Zero(D, K);
    std::size_t snapshots = 0;
    auto take_snapshot = [&] {
        for (std::size_t z = 0; z < K; ++z)
            for (std::size_t w = 0; w < V; ++w)
                phi_acc(z, w) += (st.word_topic[w * K + z] + prior(z, w)) / (st.topic_total[z] + prior_sum(z));
        for (std::size_t d = 0; d < D; ++d) {
            const double len = static_cast<double>(st.words[d].size());
            for (std::size_t z = 0; z < K; ++z)
                theta_acc(d, z) += (st.doc_topic[d][z] + alpha) / (len + static_cast<double>(K) * alpha);
        }
        ++snapshots;
    };

    std::vector<double> cum(K);
    for (std::size_t sweep = 1; sweep <= opt.iterations; ++sweep) {
        if (!opt.parallel_sweep) {
            for (std::size_t d = 0; d < D; ++d) sample_sequential(d, cum);
        } else {
            const std::vector<int> wt = st.word_topic, tt = st.topic_total;
            parallel_for(D, opt.threads, [&](std::size_t d) {
                std::vector<double> local(K);
                sample_snapshot(d, wt, tt, local);
            });
            std::fill(st.word_topic.begin(), st.word_topic.end(), 0);
            std::fill(st.topic_total.begin(), st.topic_total.end(), 0);
            for (std::size_t d = 0; d < D; ++d)
                for (std::size_t i = 0; i < st.words[d].size(); ++i) {
                    ++st.word_topic[st.words[d][i] * K + st.assignments[d][i]];
                    ++st.topic_total[st.assignments[d][i]];
                }
        }
        if (observer) observer(sweep, st);
        if (sweep > opt.burn_in && (sweep - opt.burn_in) % kLdaSnapshotInterval == 0) take_snapshot();
    }
    if (snapshots == 0) take_snapshot();

    model.phi = phi_acc / static_cast<double>(snapshots);
    model.theta = theta_acc / static_cast<double>(snapshots);
    return model;
}

struct DynamicLdaModel {
    std::vector<LdaModel> slice_models;
    // alignment[t][local topic] = canonical topic id
    std::vector<std::vector<std::size_t>> alignment;
    double kappa = 0;

    std::size_t k() const { return slice_models.empty() ? 0 : slice_models.front().k(); }

    /// Slice t's phi with rows reordered to canonical ids.
    DenseMatrix canonical_phi(std::size_t t) const {
        const auto& m = slice_models.at(t);
        DenseMatrix out(m.phi.rows(), m.phi.cols());
        for (std::size_t j = 0; j < m.k(); ++j) out.row(static_cast<Eigen::Index>(alignment[t][j])) = m.phi.row(static_cast<Eigen::Index>(j));
        return out;
    }

    /// Canonical topic-term matrix averaged over slices.
    DenseMatrix mean_phi() const {
        DenseMatrix acc = DenseMatrix::Zero(slice_models.front().phi.rows(), slice_models.front().phi.cols());
        for (std::size_t t = 0; t < slice_models.size(); ++t) acc += canonical_phi(t);
        return acc / static_cast<double>(slice_models.size());
    }
};

inline double cosine_similarity(const Eigen::Ref<const DenseVector>& a, const Eigen::Ref<const DenseVector>& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0 || nb == 0) return 0.0;
    return a.dot(b) / (na * nb);
}

/// Greedy maximum-cosine matching of `current` rows onto the rows of
/// `reference` (already in canonical order), without replacement. Ties favour
/// the lowest canonical index, then the lowest local index.
inline std::vector<std::size_t> greedy_match(const DenseMatrix& reference, const DenseMatrix& current) {
    const std::size_t K = static_cast<std::size_t>(reference.rows());
    DenseMatrix sim(K, K);
    for (std::size_t c = 0; c < K; ++c)
        for (std::size_t j = 0; j < K; ++j)
            sim(c, j) = cosine_similarity(reference.row(c).transpose(), current.row(j).transpose());
    std::vector<std::size_t> perm(K, K);
    std::vector<bool> used_c(K, false), used_j(K, false);
    for (std::size_t step = 0; step < K; ++step) {
        std::size_t bc = K, bj = K;
        for (std::size_t c = 0; c < K; ++c) {
            if (used_c[c]) continue;
            for (std::size_t j = 0; j < K; ++j) {
                if (used_j[j]) continue;
                if (bc == K || sim(c, j) > sim(bc, bj)) {
                    bc = c;
                    bj = j;
                }
            }
        }
        used_c[bc] = used_j[bj] = true;
        perm[bj] = bc;
    }
    return perm;
}

/// Chains slice topics through time: slice 0 defines canonical ids, every later
/// slice is matched against its predecessor's canonical topics.
inline DynamicLdaModel align_topics(std::vector<LdaModel> models) {
    if (models.empty()) throw Error("align_topics: no models");
    DynamicLdaModel out;
    const auto K = models.front().k();
    for (const auto& m : models)
        if (m.k() != K || m.phi.cols() != models.front().phi.cols())
            throw Error("align_topics: models disagree on k or vocabulary size");
    out.slice_models = std::move(models);
    std::vector<std::size_t> identity(K);
    std::iota(identity.begin(), identity.end(), std::size_t{0});
    out.alignment.push_back(identity);
    for (std::size_t t = 1; t < out.slice_models.size(); ++t) {
        DenseMatrix prev = out.canonical_phi(t - 1);
        out.alignment.push_back(greedy_match(prev, out.slice_models[t].phi));
    }
    return out;
}

inline std::uint64_t lda_slice_seed(std::uint64_t seed, std::size_t slice) { return derive_seed(seed, slice); }

/// Per-slice Gibbs fits where slice t > 0 starts from the Dirichlet word prior
/// (1 - kappa) * beta + kappa * beta * V * phi_{t-1}, topic by canonical topic.
inline DynamicLdaModel warm_start_fit(const std::vector<TermDocMatrix>& slices, const LdaOptions& opt, double kappa) {
    if (!(kappa >= 0.0 && kappa <= 1.0)) throw Error("warm_start_fit: kappa must lie in [0, 1]");
    if (slices.empty()) throw Error("warm_start_fit: no slices");
    DynamicLdaModel out;
    out.kappa = kappa;
    for (std::size_t t = 0; t < slices.size(); ++t) {
        LdaOptions o = opt;
        o.seed = lda_slice_seed(opt.seed, t);
        std::optional<DenseMatrix> prior;
        if (t > 0 && kappa > 0) {
            const double V = static_cast<double>(slices[t].cols());
            prior = (1.0 - kappa) * opt.beta + (kappa * opt.beta * V) * out.canonical_phi(t - 1).array();
        }
        LdaModel m;
        try {
            m = lda_fit(slices[t], o, prior ? &*prior : nullptr);
        } catch (const Error& e) {
            throw Error("slice " + std::to_string(t) + ": " + e.what());
        }
        out.slice_models.push_back(std::move(m));
        if (t == 0) {
            std::vector<std::size_t> identity(opt.k);
            std::iota(identity.begin(), identity.end(), std::size_t{0});
            out.alignment.push_back(identity);
        } else {
            out.alignment.push_back(greedy_match(out.canonical_phi(t - 1), out.slice_models[t].phi));
        }
    }
    return out;
}

inline Eigen::MatrixXi topic_frequency(const DynamicLdaModel& model, const SliceSet& slices) {
    if (model.slice_models.size() != slices.num_slices()) throw Error("topic_frequency: model and slice set disagree on T");
    std::vector<DenseMatrix> theta;
    for (const auto& m : model.slice_models) theta.push_back(m.theta);
    return topic_frequency(theta, model.alignment, model.k());
}

}  // namespace chronotopic
