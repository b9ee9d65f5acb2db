#pragma once

#include <cmath>
#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"
#include "corpus.hpp"
#include "textprep.hpp"

namespace chronotopic {

using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;

struct Vocabulary {
    std::vector<std::string> terms;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::size_t> doc_freq;

    std::size_t size() const { return terms.size(); }
    std::optional<std::size_t> find(const std::string& term) const {
        auto it = index.find(term);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }

    static Vocabulary from_terms(std::vector<std::string> terms, std::vector<std::size_t> doc_freq = {}) {
        Vocabulary v;
        v.terms = std::move(terms);
        v.doc_freq = doc_freq.empty() ? std::vector<std::size_t>(v.terms.size(), 1) : std::move(doc_freq);
        for (std::size_t i = 0; i < v.terms.size(); ++i)
            if (!v.index.emplace(v.terms[i], i).second) throw Error("vocabulary term repeated: " + v.terms[i]);
        return v;
    }
};

/// Row-major compressed sparse matrix; columns ascending within each row,
/// stored values strictly positive.
class SparseMatrix {
public:
    struct Entry {
        std::size_t col;
        double value;
    };

    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

    /// Builds from per-row (col, value) lists; zero values are dropped, duplicate columns rejected.
    static SparseMatrix from_rows(std::size_t cols, const std::vector<std::vector<Entry>>& rows) {
        SparseMatrix m(rows.size(), cols);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto row = rows[r];
            std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (row[i].col >= cols) throw Error("sparse matrix: column out of range");
                if (i && row[i].col == row[i - 1].col) throw Error("sparse matrix: duplicate (row, col) entry");
                if (row[i].value < 0 || !std::isfinite(row[i].value)) throw Error("sparse matrix: negative or non-finite entry");
                if (row[i].value > 0) m.entries_.push_back(row[i]);
            }
            m.row_ptr_[r + 1] = m.entries_.size();
        }
        return m;
    }

    static SparseMatrix from_dense(const DenseMatrix& d) {
        std::vector<std::vector<Entry>> rows(static_cast<std::size_t>(d.rows()));
        for (Eigen::Index r = 0; r < d.rows(); ++r)
            for (Eigen::Index c = 0; c < d.cols(); ++c)
                if (d(r, c) != 0.0) rows[r].push_back({static_cast<std::size_t>(c), d(r, c)});
        return from_rows(static_cast<std::size_t>(d.cols()), rows);
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return entries_.size(); }

    std::span<const Entry> row(std::size_t r) const {
        return {entries_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
    }

    double at(std::size_t r, std::size_t c) const {
        for (const auto& e : row(r))
            if (e.col == c) return e.value;
        return 0.0;
    }

    DenseMatrix to_dense() const {
        DenseMatrix d = DenseMatrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
        for (std::size_t r = 0; r < rows_; ++r)
            for (const auto& e : row(r)) d(r, e.col) = e.value;
        return d;
    }

    double squared_norm() const {
        double s = 0;
        for (const auto& e : entries_) s += e.value * e.value;
        return s;
    }

    /// Row subset in the given order.
    SparseMatrix select_rows(const std::vector<std::size_t>& which) const {
        SparseMatrix m(which.size(), cols_);
        for (std::size_t i = 0; i < which.size(); ++i) {
            auto r = row(which.at(i));
            m.entries_.insert(m.entries_.end(), r.begin(), r.end());
            m.row_ptr_[i + 1] = m.entries_.size();
        }
        return m;
    }

    /// this * B  (rows x B.cols)
    DenseMatrix multiply(const DenseMatrix& B) const {
        DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(rows_), B.cols());
        for (std::size_t r = 0; r < rows_; ++r)
            for (const auto& e : row(r)) out.row(r) += e.value * B.row(e.col);
        return out;
    }

    /// Bᵀ * this  (B.cols x cols); B has `rows()` rows.
    DenseMatrix transpose_multiply(const DenseMatrix& B) const {
        DenseMatrix out = DenseMatrix::Zero(B.cols(), static_cast<Eigen::Index>(cols_));
        for (std::size_t r = 0; r < rows_; ++r)
            for (const auto& e : row(r)) out.col(e.col) += e.value * B.row(r).transpose();
        return out;
    }

    bool operator==(const SparseMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_ || row_ptr_ != o.row_ptr_ || entries_.size() != o.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].col != o.entries_[i].col || entries_[i].value != o.entries_[i].value) return false;
        return true;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<Entry> entries_;
};

enum class Weighting { counts, tfidf };

struct TermDocMatrix {
    std::vector<std::string> row_ids;
    std::shared_ptr<const Vocabulary> vocab;
    SparseMatrix entries;
    Weighting weighting = Weighting::counts;

    std::size_t rows() const { return entries.rows(); }
    std::size_t cols() const { return entries.cols(); }
};

/// Keeps terms whose document frequency lies in [min_df, floor(max_df_ratio * N)],
/// sorted lexicographically.
inline Vocabulary build_vocabulary(const std::vector<TokenStream>& streams, std::size_t min_df, double max_df_ratio) {
    if (min_df < 1) throw Error("build_vocabulary: min_df must be >= 1");
    if (!(max_df_ratio > 0.0 && max_df_ratio <= 1.0)) throw Error("build_vocabulary: max_df_ratio must lie in (0, 1]");
    std::map<std::string, std::size_t> df;
    for (const auto& s : streams) {
        std::vector<std::string> uniq = s.tokens;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (auto& t : uniq) ++df[t];
    }
    const auto max_df = static_cast<std::size_t>(std::floor(max_df_ratio * static_cast<double>(streams.size()) + 1e-9));
    std::vector<std::string> terms;
    std::vector<std::size_t> freq;
    for (const auto& [term, n] : df) {
        if (n < min_df || n > max_df) continue;
        terms.push_back(term);
        freq.push_back(n);
    }
    if (terms.empty())
        throw Error("build_vocabulary: vocabulary is empty after pruning (min_df=" + std::to_string(min_df) +
                    ", max_df_ratio=" + std::to_string(max_df_ratio) + ")");
    return Vocabulary::from_terms(std::move(terms), std::move(freq));
}

/// Raw occurrence counts; out-of-vocabulary tokens are ignored.
inline TermDocMatrix count_matrix(const std::vector<TokenStream>& streams, std::shared_ptr<const Vocabulary> vocab) {
    std::vector<std::vector<SparseMatrix::Entry>> rows(streams.size());
    TermDocMatrix m;
    for (std::size_t d = 0; d < streams.size(); ++d) {
        std::map<std::size_t, double> counts;
        for (const auto& tok : streams[d].tokens)
            if (auto c = vocab->find(tok)) counts[*c] += 1.0;
        for (auto [c, n] : counts) rows[d].push_back({c, n});
        m.row_ids.push_back(streams[d].doc_id);
    }
    m.entries = SparseMatrix::from_rows(vocab->size(), rows);
    m.vocab = std::move(vocab);
    m.weighting = Weighting::counts;
    return m;
}

/// count * (ln((1+N)/(1+df)) + 1), then every nonzero row scaled to unit L2 norm.
inline TermDocMatrix tfidf(const TermDocMatrix& m) {
    if (m.weighting != Weighting::counts) throw Error("tfidf: input must be a counts matrix");
    const std::size_t N = m.rows();
    std::vector<std::size_t> df(m.cols(), 0);
    for (std::size_t r = 0; r < N; ++r)
        for (const auto& e : m.entries.row(r)) ++df[e.col];
    std::vector<double> idf(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c)
        idf[c] = std::log((1.0 + static_cast<double>(N)) / (1.0 + static_cast<double>(df[c]))) + 1.0;

    std::vector<std::vector<SparseMatrix::Entry>> rows(N);
    for (std::size_t r = 0; r < N; ++r) {
        double norm = 0;
        for (const auto& e : m.entries.row(r)) {
            double w = e.value * idf[e.col];
            rows[r].push_back({e.col, w});
            norm += w * w;
        }
        norm = std::sqrt(norm);
        for (auto& e : rows[r]) e.value /= norm;
    }
    TermDocMatrix out = m;
    out.entries = SparseMatrix::from_rows(m.cols(), rows);
    out.weighting = Weighting::tfidf;
    return out;
}

/// Rows of the documents assigned to `slice_index`, in corpus order; columns unchanged.
inline TermDocMatrix slice_matrix(const TermDocMatrix& m, const SliceSet& slices, std::size_t slice_index) {
    if (slice_index >= slices.num_slices())
        throw Error("slice_matrix: slice index " + std::to_string(slice_index) + " out of range [0, " +
                    std::to_string(slices.num_slices()) + ")");
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto it = slices.assignment.find(m.row_ids[r]);
        if (it == slices.assignment.end()) throw Error("slice_matrix: document '" + m.row_ids[r] + "' has no slice");
        if (it->second == slice_index) rows.push_back(r);
    }
    TermDocMatrix out;
    out.vocab = m.vocab;
    out.weighting = m.weighting;
    out.entries = m.entries.select_rows(rows);
    for (auto r : rows) out.row_ids.push_back(m.row_ids[r]);
    return out;
}

inline void write_matrix_market(std::ostream& os, const SparseMatrix& m) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
    char buf[64];
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (const auto& e : m.row(r)) {
            std::snprintf(buf, sizeof buf, "%.17g", e.value);
            os << r + 1 << ' ' << e.col + 1 << ' ' << buf << '\n';
        }
}

}  // namespace chronotopic
