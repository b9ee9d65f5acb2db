#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "corpus.hpp"
#include "embedio.hpp"
#include "matrix.hpp"
#include "nmf.hpp"

namespace chronotopic {

struct PcaTransform {
    DenseVector mean;        // dim
    DenseMatrix components;  // d x dim, orthonormal rows
    std::vector<double> explained_variance;

    std::size_t dims() const { return static_cast<std::size_t>(components.rows()); }

    DenseMatrix project(const DenseMatrix& X) const {
        return (X.rowwise() - mean.transpose()) * components.transpose();
    }

    DenseMatrix reconstruct(const DenseMatrix& Y) const {
        return (Y * components).rowwise() + mean.transpose();
    }
};

/// PCA by full symmetric eigendecomposition of the sample covariance.
inline PcaTransform pca_fit(const DenseMatrix& X, std::size_t d) {
    const auto n = X.rows(), dim = X.cols();
    if (n < 2) throw Error("pca: need at least 2 rows, got " + std::to_string(n));
    const auto max_d = std::min<Eigen::Index>(n - 1, dim);
    if (d < 1 || static_cast<Eigen::Index>(d) > max_d)
        throw Error("pca: d=" + std::to_string(d) + " out of range [1, " + std::to_string(max_d) + "]");

    PcaTransform p;
    p.mean = X.colwise().mean().transpose();
    DenseMatrix centered = X.rowwise() - p.mean.transpose();
    DenseMatrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

    p.components.resize(static_cast<Eigen::Index>(d), dim);
    for (std::size_t i = 0; i < d; ++i) {
        const Eigen::Index src = dim - 1 - static_cast<Eigen::Index>(i);  // eigenvalues ascend
        DenseVector v = eig.eigenvectors().col(src);
        Eigen::Index big = 0;
        for (Eigen::Index c = 1; c < dim; ++c)
            if (std::abs(v(c)) > std::abs(v(big))) big = c;
        if (v(big) < 0) v = -v;
        p.components.row(static_cast<Eigen::Index>(i)) = v.transpose();
        p.explained_variance.push_back(std::max(0.0, eig.eigenvalues()(src)));
    }
    return p;
}

struct ClusterAssignment {
    std::vector<long> labels;  // -1 = outlier
    std::size_t k = 0;

    std::size_t outliers() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), -1L)); }
    bool operator==(const ClusterAssignment&) const = default;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> eps_neighbors(const DenseMatrix& X, double eps, unsigned threads) {
    const auto n = static_cast<std::size_t>(X.rows());
    std::vector<std::vector<std::size_t>> nb(n);
    const double eps2 = eps * eps;
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j)
            if ((X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).squaredNorm() <= eps2)
                nb[i].push_back(j);
    });
    return nb;
}

}  // namespace detail

/// Density clustering; a point is its own neighbour. Cluster ids follow scan order.
inline ClusterAssignment dbscan(const DenseMatrix& X, double eps, std::size_t min_pts, unsigned threads = 1) {
    if (!(eps > 0)) throw Error("dbscan: eps must be positive");
    if (min_pts < 1) throw Error("dbscan: min_pts must be at least 1");
    if (!X.allFinite()) throw Error("dbscan: non-finite coordinates");
    const auto n = static_cast<std::size_t>(X.rows());
    auto nb = detail::eps_neighbors(X, eps, threads);
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = nb[i].size() >= min_pts;

    ClusterAssignment out;
    out.labels.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (out.labels[i] != -1 || !core[i]) continue;
        const long c = static_cast<long>(out.k++);
        out.labels[i] = c;
        std::deque<std::size_t> queue{i};
        while (!queue.empty()) {
            auto p = queue.front();
            queue.pop_front();
            for (auto q : nb[p]) {
                if (out.labels[q] != -1) continue;
                out.labels[q] = c;
                if (core[q]) queue.push_back(q);
            }
        }
    }
    return out;
}

/// Median distance to the min_pts-th nearest neighbour, counting the point itself.
inline double kdistance_eps(const DenseMatrix& X, std::size_t min_pts, unsigned threads = 1) {
    const auto n = static_cast<std::size_t>(X.rows());
    if (n == 0) throw Error("kdistance_eps: no points");
    const std::size_t k = std::clamp<std::size_t>(min_pts, 1, n);
    std::vector<double> kd(n);
    parallel_for(n, threads, [&](std::size_t i) {
        std::vector<double> d(n);
        for (std::size_t j = 0; j < n; ++j)
            d[j] = (X.row(static_cast<Eigen::Index>(i)) - X.row(static_cast<Eigen::Index>(j))).norm();
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        kd[i] = d[k - 1];
    });
    std::sort(kd.begin(), kd.end());
    return n % 2 ? kd[n / 2] : 0.5 * (kd[n / 2 - 1] + kd[n / 2]);
}

struct CtfidfTopics {
    DenseMatrix weights;  // k x V
    std::vector<TermWeights> top;
    std::vector<std::size_t> sizes;  // documents per cluster
    std::shared_ptr<const Vocabulary> vocab;

    std::size_t k() const { return static_cast<std::size_t>(weights.rows()); }
};

namespace detail {

struct CtfidfIdf {
    DenseVector idf;  // ln(1 + A / f_t), 0 where f_t = 0
};

inline CtfidfIdf ctfidf_idf(const TermDocMatrix& counts, const ClusterAssignment& labels) {
    const std::size_t V = counts.cols();
    DenseVector f = DenseVector::Zero(static_cast<Eigen::Index>(V));
    double clustered = 0;
    for (std::size_t r = 0; r < counts.rows(); ++r)
        for (const auto& e : counts.entries.row(r)) {
            f(e.col) += e.value;
            if (labels.labels[r] >= 0) clustered += e.value;
        }
    const double A = clustered / static_cast<double>(labels.k);
    CtfidfIdf out{DenseVector::Zero(static_cast<Eigen::Index>(V))};
    for (std::size_t t = 0; t < V; ++t)
        if (f(t) > 0) out.idf(t) = std::log(1.0 + A / f(t));
    return out;
}

inline void check_labels(const TermDocMatrix& counts, const ClusterAssignment& labels) {
    if (counts.weighting != Weighting::counts) throw Error("ctfidf: expects a raw count matrix");
    if (labels.labels.size() != counts.rows())
        throw Error("ctfidf: " + std::to_string(labels.labels.size()) + " labels for " + std::to_string(counts.rows()) +
                    " documents");
    if (labels.k == 0) throw Error("ctfidf: no non-outlier clusters");
    for (auto l : labels.labels)
        if (l < -1 || l >= static_cast<long>(labels.k)) throw Error("ctfidf: label " + std::to_string(l) + " out of range");
}

/// Normalised class term frequencies over the given rows, scaled by idf.
inline DenseMatrix class_weights(const TermDocMatrix& counts, const ClusterAssignment& labels,
                                 const std::vector<std::size_t>& rows, const DenseVector& idf) {
    DenseMatrix tf = DenseMatrix::Zero(static_cast<Eigen::Index>(labels.k), static_cast<Eigen::Index>(counts.cols()));
    for (auto r : rows) {
        const long c = labels.labels[r];
        if (c < 0) continue;
        for (const auto& e : counts.entries.row(r)) tf(c, e.col) += e.value;
    }
    for (Eigen::Index c = 0; c < tf.rows(); ++c) {
        const double total = tf.row(c).sum();
        if (total > 0) tf.row(c) /= total;
    }
    return tf.array().rowwise() * idf.transpose().array();
}

inline TermWeights positive_top_terms(const Eigen::Ref<const DenseVector>& row, const Vocabulary& vocab, std::size_t n) {
    auto top = top_terms(row, vocab, n);
    std::erase_if(top, [](const auto& tw) { return !(tw.second > 0); });
    return top;
}

}  // namespace detail

/// Class-based TF-IDF: tf normalised per cluster times ln(1 + A / f_t).
inline CtfidfTopics ctfidf(const TermDocMatrix& counts, const ClusterAssignment& labels, std::size_t top_n = 10) {
    detail::check_labels(counts, labels);
    auto idf = detail::ctfidf_idf(counts, labels);
    std::vector<std::size_t> rows(counts.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    CtfidfTopics out;
    out.vocab = counts.vocab;
    out.weights = detail::class_weights(counts, labels, rows, idf.idf);
    out.sizes.assign(labels.k, 0);
    for (auto l : labels.labels)
        if (l >= 0) ++out.sizes[static_cast<std::size_t>(l)];
    for (std::size_t c = 0; c < labels.k; ++c)
        out.top.push_back(detail::positive_top_terms(out.weights.row(static_cast<Eigen::Index>(c)).transpose(), *counts.vocab, top_n));
    return out;
}

enum class Tuning { none, global, evolutionary, both };
enum class TuningOrder { global_first, evolutionary_first };

inline Tuning parse_tuning(const std::string& s) {
    if (s == "none") return Tuning::none;
    if (s == "global") return Tuning::global;
    if (s == "evolutionary") return Tuning::evolutionary;
    if (s == "both") return Tuning::both;
    throw ConfigError("unknown tuning '" + s + "' (expected none, global, evolutionary or both)");
}

inline std::string to_string(Tuning t) {
    switch (t) {
        case Tuning::none: return "none";
        case Tuning::global: return "global";
        case Tuning::evolutionary: return "evolutionary";
        case Tuning::both: return "both";
    }
    return "none";
}

struct DynamicCtfidf {
    std::vector<DenseMatrix> weights;  // per slice, k x V
    Tuning tuning = Tuning::both;
    TuningOrder order = TuningOrder::global_first;
    std::shared_ptr<const Vocabulary> vocab;

    std::size_t num_slices() const { return weights.size(); }

    TermWeights top_terms(std::size_t topic, std::size_t slice, std::size_t n) const {
        return detail::positive_top_terms(weights.at(slice).row(static_cast<Eigen::Index>(topic)).transpose(), *vocab, n);
    }
};

/// Per-(topic, slice) c-TF-IDF over slice-local documents, sharing the corpus-wide idf,
/// then optionally averaged with the global topic vector and/or the previous slice.
inline DynamicCtfidf dynamic_ctfidf(const TermDocMatrix& counts, const ClusterAssignment& labels, const SliceSet& slices,
                                    Tuning tuning = Tuning::both, TuningOrder order = TuningOrder::global_first,
                                    unsigned threads = 1) {
    detail::check_labels(counts, labels);
    auto idf = detail::ctfidf_idf(counts, labels);
    const std::size_t T = slices.num_slices();
    std::vector<std::vector<std::size_t>> rows(T);
    for (std::size_t r = 0; r < counts.rows(); ++r) {
        auto it = slices.assignment.find(counts.row_ids[r]);
        if (it == slices.assignment.end()) throw Error("dynamic_ctfidf: document '" + counts.row_ids[r] + "' has no slice");
        rows[it->second].push_back(r);
    }

    DynamicCtfidf out;
    out.tuning = tuning;
    out.order = order;
    out.vocab = counts.vocab;
    out.weights.resize(T);
    parallel_for(T, threads, [&](std::size_t s) { out.weights[s] = detail::class_weights(counts, labels, rows[s], idf.idf); });

    std::vector<std::size_t> all(counts.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const DenseMatrix global = detail::class_weights(counts, labels, all, idf.idf);
    const bool use_global = tuning == Tuning::global || tuning == Tuning::both;
    const bool use_evo = tuning == Tuning::evolutionary || tuning == Tuning::both;
    auto apply_global = [&] {
        for (auto& w : out.weights) w = (w + global) / 2.0;
    };
    auto apply_evo = [&] {
        for (std::size_t s = 1; s < T; ++s) out.weights[s] = (out.weights[s] + out.weights[s - 1]) / 2.0;
    };
    if (order == TuningOrder::global_first) {
        if (use_global) apply_global();
        if (use_evo) apply_evo();
    } else {
        if (use_evo) apply_evo();
        if (use_global) apply_global();
    }
    return out;
}

struct EmbeddingModelConfig {
    std::size_t pca_dims = 5;
    double eps = 0;  // 0 = k-distance heuristic
    std::size_t min_pts = 10;
    Tuning tuning = Tuning::both;
    TuningOrder order = TuningOrder::global_first;
    std::size_t top_n = 10;
    unsigned threads = 1;
};

struct EmbeddingTopicModel {
    PcaTransform pca;
    DenseMatrix reduced;
    double eps = 0;
    std::size_t min_pts = 0;
    ClusterAssignment clusters;
    CtfidfTopics topics;
    DynamicCtfidf dynamic;
    Eigen::MatrixXi frequency;       // T x k
    std::vector<int> outlier_series;  // per slice
    std::vector<std::string> row_ids;
};

/// Hard-label topic counts per slice; outliers tallied separately.
inline Eigen::MatrixXi topic_frequency(const ClusterAssignment& labels, const std::vector<std::string>& row_ids,
                                       const SliceSet& slices, std::vector<int>* outliers = nullptr) {
    const std::size_t T = slices.num_slices();
    Eigen::MatrixXi freq = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(labels.k));
    if (outliers) outliers->assign(T, 0);
    for (std::size_t r = 0; r < row_ids.size(); ++r) {
        auto it = slices.assignment.find(row_ids[r]);
        if (it == slices.assignment.end()) throw Error("topic_frequency: document '" + row_ids[r] + "' has no slice");
        const auto s = static_cast<Eigen::Index>(it->second);
        if (labels.labels[r] >= 0)
            ++freq(s, labels.labels[r]);
        else if (outliers)
            ++(*outliers)[static_cast<std::size_t>(s)];
    }
    return freq;
}

/// Embeddings reordered to match `ids`; throws listing up to 10 offending ids.
inline DenseMatrix align_embeddings(const EmbeddingSet& emb, const std::vector<std::string>& ids) {
    auto idx = emb.index();
    std::unordered_set<std::string> wanted(ids.begin(), ids.end());
    std::vector<std::string> offenders;
    for (const auto& id : ids)
        if (!idx.count(id)) offenders.push_back("missing embedding '" + id + "'");
    for (const auto& id : emb.ids)
        if (!wanted.count(id)) offenders.push_back("unknown id '" + id + "'");
    if (!offenders.empty()) {
        std::string msg = "embedding ids do not match corpus ids (" + std::to_string(offenders.size()) + " offenders):";
        for (std::size_t i = 0; i < std::min<std::size_t>(10, offenders.size()); ++i) msg += " " + offenders[i] + ";";
        throw Error(msg);
    }
    DenseMatrix X(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(emb.dim));
    for (std::size_t r = 0; r < ids.size(); ++r) {
        auto row = emb.row(idx.at(ids[r]));
        for (std::size_t c = 0; c < emb.dim; ++c) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
    }
    return X;
}

/// PCA, DBSCAN, c-TF-IDF and dynamic c-TF-IDF over document embeddings.
inline EmbeddingTopicModel fit_embedding_model(const EmbeddingSet& doc_embeddings, const TermDocMatrix& counts,
                                               const SliceSet& slices, const EmbeddingModelConfig& cfg) {
    EmbeddingTopicModel m;
    m.row_ids = counts.row_ids;
    DenseMatrix X = align_embeddings(doc_embeddings, counts.row_ids);
    const auto d = std::min<std::size_t>({cfg.pca_dims, static_cast<std::size_t>(std::max<Eigen::Index>(X.rows() - 1, 1)),
                                          doc_embeddings.dim});
    m.pca = pca_fit(X, d);
    m.reduced = m.pca.project(X);
    m.min_pts = cfg.min_pts;
    m.eps = cfg.eps > 0 ? cfg.eps : kdistance_eps(m.reduced, cfg.min_pts, cfg.threads);
    if (!(m.eps > 0)) m.eps = 1e-12;  // all points coincide
    m.clusters = dbscan(m.reduced, m.eps, cfg.min_pts, cfg.threads);
    m.topics = ctfidf(counts, m.clusters, cfg.top_n);
    m.dynamic = dynamic_ctfidf(counts, m.clusters, slices, cfg.tuning, cfg.order, cfg.threads);
    m.frequency = topic_frequency(m.clusters, m.row_ids, slices, &m.outlier_series);
    return m;
}

}  // namespace chronotopic
