#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "corpus.hpp"
#include "matrix.hpp"

namespace chronotopic {

enum class NmfInit { nndsvd, random };

struct NmfOptions {
    std::size_t k = 10;
    std::size_t max_iter = 500;
    double tol = 1e-5;
    std::uint64_t seed = 0;
    NmfInit init = NmfInit::nndsvd;
};

struct NmfModel {
    DenseMatrix W;  // rows x k
    DenseMatrix H;  // k x cols, rows sum to 1 on exit
    std::vector<double> objective_trace;
    std::uint64_t seed = 0;
    std::vector<std::string> row_ids;
    std::shared_ptr<const Vocabulary> vocab;

    std::size_t k() const { return static_cast<std::size_t>(H.rows()); }
};

inline constexpr double kNmfEpsilon = 1e-12;

namespace detail {

// Gram matrix over the rows (XXᵀ) or the columns (XᵀX) of a sparse matrix.
inline DenseMatrix row_gram(const SparseMatrix& A) {
    const auto n = static_cast<Eigen::Index>(A.rows());
    DenseMatrix G = DenseMatrix::Zero(n, n);
    std::vector<std::vector<std::pair<std::size_t, double>>> by_col(A.cols());
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (const auto& e : A.row(r)) by_col[e.col].emplace_back(r, e.value);
    for (const auto& col : by_col)
        for (const auto& [r1, v1] : col)
            for (const auto& [r2, v2] : col) G(r1, r2) += v1 * v2;
    return G;
}

inline DenseMatrix col_gram(const SparseMatrix& A) {
    const auto n = static_cast<Eigen::Index>(A.cols());
    DenseMatrix G = DenseMatrix::Zero(n, n);
    for (std::size_t r = 0; r < A.rows(); ++r) {
        auto row = A.row(r);
        for (const auto& a : row)
            for (const auto& b : row) G(a.col, b.col) += a.value * b.value;
    }
    return G;
}

struct TruncatedSvd {
    DenseMatrix U;     // rows x k
    DenseVector S;     // k, descending
    DenseMatrix V;     // cols x k
};

// Leading k singular triplets via the eigendecomposition of the smaller Gram matrix.
inline TruncatedSvd truncated_svd(const SparseMatrix& A, std::size_t k) {
    const bool by_rows = A.rows() <= A.cols();
    DenseMatrix G = by_rows ? row_gram(A) : col_gram(A);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(G);
    if (eig.info() != Eigen::Success) throw Error("nmf: eigendecomposition failed during NNDSVD initialisation");
    const auto n = G.rows();
    const auto kk = static_cast<Eigen::Index>(k);
    TruncatedSvd svd;
    svd.S = DenseVector::Zero(kk);
    DenseMatrix left(n, kk);
    for (Eigen::Index j = 0; j < kk; ++j) {
        svd.S(j) = std::sqrt(std::max(0.0, eig.eigenvalues()(n - 1 - j)));
        left.col(j) = eig.eigenvectors().col(n - 1 - j);
    }
    // Other side: (Aᵀu)/σ or (Av)/σ.
    DenseMatrix other = by_rows ? A.transpose_multiply(left).transpose() : A.multiply(left);
    for (Eigen::Index j = 0; j < kk; ++j) {
        if (svd.S(j) > 1e-12 * std::max(1.0, svd.S(0)))
            other.col(j) /= svd.S(j);
        else
            other.col(j).setZero();
    }
    if (by_rows) {
        svd.U = std::move(left);
        svd.V = std::move(other);
    } else {
        svd.U = std::move(other);
        svd.V = std::move(left);
    }
    return svd;
}

inline double frobenius_objective(double a_sq, const DenseMatrix& W, const DenseMatrix& AHt, const DenseMatrix& WtW,
                                  const DenseMatrix& HHt) {
    double cross = (W.array() * AHt.array()).sum();
    double quad = (WtW.array() * HHt.array()).sum();
    return std::max(0.0, a_sq - 2.0 * cross + quad);
}

}  // namespace detail

/// NNDSVD initialisation (Boutsidis & Gallopoulos): one nonnegative rank-1
/// term per leading singular triplet, keeping the dominant sign part.
inline std::pair<DenseMatrix, DenseMatrix> nndsvd_init(const SparseMatrix& A, std::size_t k) {
    auto svd = detail::truncated_svd(A, k);
    const auto m = static_cast<Eigen::Index>(A.rows()), n = static_cast<Eigen::Index>(A.cols());
    const auto kk = static_cast<Eigen::Index>(k);
    DenseMatrix W = DenseMatrix::Zero(m, kk), H = DenseMatrix::Zero(kk, n);
    W.col(0) = std::sqrt(svd.S(0)) * svd.U.col(0).cwiseAbs();
    H.row(0) = std::sqrt(svd.S(0)) * svd.V.col(0).cwiseAbs().transpose();
    for (Eigen::Index j = 1; j < kk; ++j) {
        DenseVector x = svd.U.col(j), y = svd.V.col(j);
        DenseVector xp = x.cwiseMax(0.0), xn = (-x).cwiseMax(0.0);
        DenseVector yp = y.cwiseMax(0.0), yn = (-y).cwiseMax(0.0);
        double xpn = xp.norm(), ypn = yp.norm(), xnn = xn.norm(), ynn = yn.norm();
        double mp = xpn * ypn, mn = xnn * ynn;
        DenseVector u, v;
        double sigma;
        if (mp > mn) {
            u = xp / xpn;
            v = yp / ypn;
            sigma = mp;
        } else if (mn > 0) {
            u = xn / xnn;
            v = yn / ynn;
            sigma = mn;
        } else {
            continue;
        }
        double lambda = std::sqrt(svd.S(j) * sigma);
        W.col(j) = lambda * u;
        H.row(j) = lambda * v.transpose();
    }
    // Multiplicative updates never leave an exact zero, so zeros take the
    // mean of A (the NNDSVDa variant).
    double mean = 0;
    for (std::size_t r = 0; r < A.rows(); ++r)
        for (const auto& e : A.row(r)) mean += e.value;
    mean /= static_cast<double>(A.rows() * A.cols());
    W = (W.array() < 1e-14).select(mean, W);
    H = (H.array() < 1e-14).select(mean, H);
    return {W, H};
}

/// Lee–Seung multiplicative updates for min ‖A − WH‖²_F with W, H ≥ 0.
inline NmfModel nmf_fit(const SparseMatrix& A, const NmfOptions& opt) {
    const std::size_t k = opt.k;
    if (k < 1 || k > std::min(A.rows(), A.cols()))
        throw Error("nmf: k=" + std::to_string(k) + " out of range [1, " + std::to_string(std::min(A.rows(), A.cols())) +
                    "] for a " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()) + " matrix");
    const auto m = static_cast<Eigen::Index>(A.rows()), n = static_cast<Eigen::Index>(A.cols());
    const auto kk = static_cast<Eigen::Index>(k);

    NmfModel model;
    model.seed = opt.seed;
    if (opt.init == NmfInit::nndsvd) {
        std::tie(model.W, model.H) = nndsvd_init(A, k);
    } else {
        std::mt19937_64 eng(opt.seed);
        double mean = 0;
        for (std::size_t r = 0; r < A.rows(); ++r)
            for (const auto& e : A.row(r)) mean += e.value;
        mean /= static_cast<double>(A.rows() * A.cols());
        const double scale = std::sqrt(mean / static_cast<double>(k));
        model.W.resize(m, kk);
        model.H.resize(kk, n);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < kk; ++j) model.W(i, j) = scale * uniform01(eng);
        for (Eigen::Index i = 0; i < kk; ++i)
            for (Eigen::Index j = 0; j < n; ++j) model.H(i, j) = scale * uniform01(eng);
    }
    DenseMatrix& W = model.W;
    DenseMatrix& H = model.H;
    const double a_sq = A.squared_norm();

    DenseMatrix AHt = A.multiply(H.transpose());
    DenseMatrix WtW = W.transpose() * W;
    DenseMatrix HHt = H * H.transpose();
    double obj = detail::frobenius_objective(a_sq, W, AHt, WtW, HHt);
    model.objective_trace.push_back(obj);

    for (std::size_t it = 1; it <= opt.max_iter && obj > 0.0; ++it) {
        DenseMatrix WtA = A.transpose_multiply(W);
        H.array() *= WtA.array() / ((WtW * H).array() + kNmfEpsilon);
        AHt = A.multiply(H.transpose());
        HHt = H * H.transpose();
        W.array() *= AHt.array() / ((W * HHt).array() + kNmfEpsilon);
        WtW = W.transpose() * W;

        double next = detail::frobenius_objective(a_sq, W, AHt, WtW, HHt);
        if (!std::isfinite(next)) throw Error("nmf: objective became non-finite at iteration " + std::to_string(it));
        model.objective_trace.push_back(next);
        double rel = (obj - next) / std::max(obj, std::numeric_limits<double>::min());
        obj = next;
        if (rel < opt.tol) break;
    }

    // Canonical scale: H rows on the simplex, W columns compensate.
    for (Eigen::Index j = 0; j < kk; ++j) {
        double s = H.row(j).sum();
        if (s > 0) {
            H.row(j) /= s;
            W.col(j) *= s;
        }
    }
    return model;
}

inline NmfModel nmf_fit(const TermDocMatrix& A, const NmfOptions& opt) {
    auto model = nmf_fit(A.entries, opt);
    model.row_ids = A.row_ids;
    model.vocab = A.vocab;
    return model;
}

inline double nmf_objective(const SparseMatrix& A, const DenseMatrix& W, const DenseMatrix& H) {
    return (A.to_dense() - W * H).squaredNorm();
}

/// Indices of the n largest entries of `weights`, ties toward the lower index.
inline std::vector<std::size_t> top_indices(const Eigen::Ref<const DenseVector>& weights, std::size_t n) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(weights.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    n = std::min(n, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), [&](std::size_t a, std::size_t b) {
        if (weights(a) != weights(b)) return weights(a) > weights(b);
        return a < b;
    });
    idx.resize(n);
    return idx;
}

using TermWeights = std::vector<std::pair<std::string, double>>;

/// Highest-weight terms of a topic row; ties broken lexicographically.
inline TermWeights top_terms(const Eigen::Ref<const DenseVector>& row, const Vocabulary& vocab, std::size_t n) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(row.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    n = std::min(n, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), [&](std::size_t a, std::size_t b) {
        if (row(a) != row(b)) return row(a) > row(b);
        return vocab.terms[a] < vocab.terms[b];
    });
    TermWeights out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(vocab.terms[idx[i]], row(idx[i]));
    return out;
}

inline TermWeights top_terms(const NmfModel& model, std::size_t topic, std::size_t n) {
    if (topic >= model.k()) throw Error("top_terms: topic index out of range");
    if (!model.vocab) throw Error("top_terms: model has no vocabulary");
    return top_terms(model.H.row(static_cast<Eigen::Index>(topic)).transpose(), *model.vocab, n);
}

struct DynamicNmfOptions {
    std::size_t k_window = 10;
    std::size_t k_dynamic = 10;
    std::size_t top_n_stack = 20;
    std::size_t max_iter = 500;
    double tol = 1e-5;
    NmfInit init = NmfInit::nndsvd;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct DynamicNmfModel {
    std::vector<NmfModel> window_models;
    NmfModel dynamic;  // fit on the stacked window topics
    DenseMatrix dynamic_H;
    // window_to_dynamic[s][j] = dynamic topic of window topic j in slice s
    std::vector<std::vector<std::size_t>> window_to_dynamic;
    std::shared_ptr<const Vocabulary> vocab;

    std::size_t k_dynamic() const { return static_cast<std::size_t>(dynamic_H.rows()); }
};

/// Row-wise argmax with ties toward the lower column.
inline std::size_t argmax_row(const Eigen::Ref<const DenseVector>& row) {
    std::size_t best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j)
        if (row(j) > row(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(j);
    return best;
}

/// Matrix whose rows are each window topic's H row cut to its top_n terms, L2-normalised.
inline SparseMatrix stack_window_topics(const std::vector<NmfModel>& windows, std::size_t top_n) {
    std::vector<std::vector<SparseMatrix::Entry>> rows;
    std::size_t cols = 0;
    for (const auto& w : windows) {
        cols = static_cast<std::size_t>(w.H.cols());
        for (Eigen::Index j = 0; j < w.H.rows(); ++j) {
            DenseVector h = w.H.row(j).transpose();
            std::vector<SparseMatrix::Entry> row;
            double norm = 0;
            for (auto c : top_indices(h, top_n)) {
                if (h(c) <= 0) continue;
                row.push_back({c, h(c)});
                norm += h(c) * h(c);
            }
            norm = std::sqrt(norm);
            for (auto& e : row) e.value /= norm;
            rows.push_back(std::move(row));
        }
    }
    return SparseMatrix::from_rows(cols, rows);
}

/// Two-level dynamic NMF: per-slice window fits, then a second NMF over the
/// stacked window-topic descriptors.
inline DynamicNmfModel dynamic_nmf(const std::vector<TermDocMatrix>& slices, const DynamicNmfOptions& opt) {
    if (slices.size() < 2) throw Error("dynamic_nmf: need at least 2 slices");
    if (opt.k_window < 1 || opt.k_dynamic < 1 || opt.top_n_stack < 1) throw Error("dynamic_nmf: parameters must be positive");
    DynamicNmfModel model;
    model.vocab = slices.front().vocab;
    model.window_models.resize(slices.size());
    parallel_for(slices.size(), opt.threads, [&](std::size_t s) {
        NmfOptions o{opt.k_window, opt.max_iter, opt.tol, derive_seed(opt.seed, s), opt.init};
        try {
            model.window_models[s] = nmf_fit(slices[s], o);
        } catch (const Error& e) {
            throw Error("slice " + std::to_string(s) + ": " + e.what());
        }
    });

    SparseMatrix stacked = stack_window_topics(model.window_models, opt.top_n_stack);
    if (opt.k_dynamic > stacked.rows())
        throw Error("dynamic_nmf: k_dynamic=" + std::to_string(opt.k_dynamic) + " exceeds the " +
                    std::to_string(stacked.rows()) + " stacked window topics");
    NmfOptions o{opt.k_dynamic, opt.max_iter, opt.tol, derive_seed(opt.seed, "dynamic"), opt.init};
    model.dynamic = nmf_fit(stacked, o);
    model.dynamic.vocab = model.vocab;
    model.dynamic_H = model.dynamic.H;

    std::size_t row = 0;
    for (const auto& w : model.window_models) {
        std::vector<std::size_t> map;
        for (std::size_t j = 0; j < w.k(); ++j, ++row)
            map.push_back(argmax_row(model.dynamic.W.row(static_cast<Eigen::Index>(row)).transpose()));
        model.window_to_dynamic.push_back(std::move(map));
    }
    return model;
}

/// T x k_out counts of documents whose argmax local topic maps to each output
/// topic. Local ties go to the lower topic index.
inline Eigen::MatrixXi topic_frequency(const std::vector<DenseMatrix>& slice_doc_topic,
                                       const std::vector<std::vector<std::size_t>>& topic_map, std::size_t k_out) {
    if (slice_doc_topic.size() != topic_map.size()) throw Error("topic_frequency: slice count mismatch");
    Eigen::MatrixXi freq = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(slice_doc_topic.size()),
                                                 static_cast<Eigen::Index>(k_out));
    for (std::size_t s = 0; s < slice_doc_topic.size(); ++s) {
        const auto& D = slice_doc_topic[s];
        for (Eigen::Index d = 0; d < D.rows(); ++d) {
            std::size_t local = argmax_row(D.row(d).transpose());
            std::size_t out = topic_map[s].at(local);
            if (out >= k_out) throw Error("topic_frequency: mapped topic out of range");
            ++freq(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(out));
        }
    }
    return freq;
}

inline Eigen::MatrixXi topic_frequency(const DynamicNmfModel& model, const SliceSet& slices) {
    if (model.window_models.size() != slices.num_slices()) throw Error("topic_frequency: model and slice set disagree on T");
    std::vector<DenseMatrix> W;
    for (std::size_t s = 0; s < model.window_models.size(); ++s) {
        for (const auto& id : model.window_models[s].row_ids) {
            auto it = slices.assignment.find(id);
            if (it == slices.assignment.end() || it->second != s)
                throw Error("topic_frequency: document '" + id + "' is not in slice " + std::to_string(s));
        }
        W.push_back(model.window_models[s].W);
    }
    return topic_frequency(W, model.window_to_dynamic, model.k_dynamic());
}

}  // namespace chronotopic
