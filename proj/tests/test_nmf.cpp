#include <gtest/gtest.h>

#include <chronotopic/nmf.hpp>

#include "test_util.hpp"

using namespace chronotopic;

static DenseMatrix random_nonneg(Eigen::Index r, Eigen::Index c, std::mt19937_64& eng) {
    DenseMatrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform01(eng);
    return m;
}

static void expect_monotone(const std::vector<double>& trace) {
    for (std::size_t i = 1; i < trace.size(); ++i) ASSERT_LE(trace[i], trace[i - 1] + 1e-9) << "step " << i;
}

TEST(NmfFit, ExactRankOne) {
    DenseVector u(5), v(4);
    u << 1, 2, 0.5, 3, 0.1;
    v << 0.2, 1, 4, 0.7;
    DenseMatrix A = u * v.transpose();
    auto S = SparseMatrix::from_dense(A);
    auto model = nmf_fit(S, {.k = 1, .max_iter = 200, .tol = 0});
    EXPECT_LT(model.objective_trace.back(), 1e-8 * A.squaredNorm());
    EXPECT_LT(nmf_objective(S, model.W, model.H), 1e-8 * A.squaredNorm());
}

TEST(NmfFit, PlantedRankTwo) {
    DenseMatrix W0(4, 2), H0(2, 4);
    W0 << 2, 1, 1, 3, 3, 2, 1, 1;
    H0 << 1, 2, 1, 3, 2, 1, 3, 1;
    DenseMatrix A = W0 * H0;
    auto S = SparseMatrix::from_dense(A);
    auto model = nmf_fit(S, {.k = 2, .max_iter = 500, .tol = 0});
    EXPECT_LE(nmf_objective(S, model.W, model.H), 1e-6 * A.squaredNorm());
}

TEST(NmfFit, TraceIsMonotoneAndFactorsNonnegative) {
    std::mt19937_64 eng(21);
    for (int trial = 0; trial < 10; ++trial) {
        auto A = random_nonneg(12, 9, eng);
        for (auto init : {NmfInit::nndsvd, NmfInit::random}) {
            auto model = nmf_fit(SparseMatrix::from_dense(A), {.k = 3, .max_iter = 150, .tol = 0, .seed = 5, .init = init});
            expect_monotone(model.objective_trace);
            EXPECT_GE(model.W.minCoeff(), 0.0);
            EXPECT_GE(model.H.minCoeff(), 0.0);
            for (Eigen::Index j = 0; j < model.H.rows(); ++j) EXPECT_NEAR(model.H.row(j).sum(), 1.0, 1e-9);
            // trace tail agrees with the directly computed objective
            EXPECT_NEAR(model.objective_trace.back(), nmf_objective(SparseMatrix::from_dense(A), model.W, model.H),
                        1e-9 * A.squaredNorm());
        }
    }
}

TEST(NmfFit, MoreTopicsFitBetter) {
    std::mt19937_64 eng(4);
    for (int trial = 0; trial < 5; ++trial) {
        auto S = SparseMatrix::from_dense(random_nonneg(6, 5, eng));
        auto k2 = nmf_fit(S, {.k = 2, .max_iter = 500, .tol = 0});
        auto k5 = nmf_fit(S, {.k = 5, .max_iter = 500, .tol = 0});
        EXPECT_LT(k5.objective_trace.back(), k2.objective_trace.back());
    }
}

TEST(NmfFit, SeedDeterminism) {
    std::mt19937_64 eng(8);
    auto S = SparseMatrix::from_dense(random_nonneg(10, 7, eng));
    auto a = nmf_fit(S, {.k = 3, .max_iter = 50, .tol = 0, .seed = 99, .init = NmfInit::random});
    auto b = nmf_fit(S, {.k = 3, .max_iter = 50, .tol = 0, .seed = 99, .init = NmfInit::random});
    auto c = nmf_fit(S, {.k = 3, .max_iter = 50, .tol = 0, .seed = 100, .init = NmfInit::random});
    EXPECT_EQ(a.W, b.W);
    EXPECT_EQ(a.H, b.H);
    EXPECT_NE(a.W, c.W);
}

TEST(NmfFit, KOutOfRange) {
    auto S = SparseMatrix::from_dense(DenseMatrix::Ones(3, 4));
    EXPECT_THROW(nmf_fit(S, {.k = 0}), Error);
    EXPECT_THROW(nmf_fit(S, {.k = 4}), Error);
}

TEST(NmfFit, ToleranceStopsEarly) {
    std::mt19937_64 eng(12);
    auto S = SparseMatrix::from_dense(random_nonneg(20, 15, eng));
    auto loose = nmf_fit(S, {.k = 3, .max_iter = 1000, .tol = 1e-3});
    auto tight = nmf_fit(S, {.k = 3, .max_iter = 1000, .tol = 0});
    EXPECT_LT(loose.objective_trace.size(), tight.objective_trace.size());
    EXPECT_GT(tight.objective_trace.size(), 100u);
}

TEST(TopTerms, OneHotTiesAndClamp) {
    NmfModel m;
    m.vocab = std::make_shared<const Vocabulary>(Vocabulary::from_terms({"amor", "deus", "roma"}));
    m.H.resize(2, 3);
    m.H << 0, 1, 0, 0.5, 0, 0.5;
    auto t0 = top_terms(m, 0, 1);
    ASSERT_EQ(t0.size(), 1u);
    EXPECT_EQ(t0[0].first, "deus");
    EXPECT_EQ(t0[0].second, 1.0);
    auto t1 = top_terms(m, 1, 2);
    EXPECT_EQ(t1[0].first, "amor");
    EXPECT_EQ(t1[1].first, "roma");
    EXPECT_EQ(top_terms(m, 1, 10).size(), 3u);
    EXPECT_THROW(top_terms(m, 2, 1), Error);
}

namespace {

struct SyntheticSlices {
    std::vector<TermDocMatrix> slices;
    std::shared_ptr<const Vocabulary> vocab;
};

// One slice per entry of `blocks_per_slice`; each doc draws from a single block.
SyntheticSlices make_slices_from_blocks(const std::vector<std::vector<std::size_t>>& blocks_per_slice, std::size_t docs,
                                        std::uint64_t seed) {
    std::vector<std::vector<TokenStream>> per_slice;
    std::vector<TokenStream> all;
    for (std::size_t s = 0; s < blocks_per_slice.size(); ++s) {
        const auto& allowed = blocks_per_slice[s];
        auto pc = testutil::planted_corpus(docs, 6, 12, 40, seed + s, [&](std::size_t, std::size_t b) {
            return std::find(allowed.begin(), allowed.end(), b) != allowed.end();
        });
        for (auto& st : pc.streams) st.doc_id = "s" + std::to_string(s) + st.doc_id;
        all.insert(all.end(), pc.streams.begin(), pc.streams.end());
        per_slice.push_back(pc.streams);
    }
    SyntheticSlices out;
    out.vocab = std::make_shared<const Vocabulary>(build_vocabulary(all, 1, 1.0));
    for (auto& st : per_slice) out.slices.push_back(tfidf(count_matrix(st, out.vocab)));
    return out;
}

double cosine(const DenseVector& a, const DenseVector& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST(DynamicNmf, IdenticalSlicesPairUp) {
    auto syn = make_slices_from_blocks({{0, 1}, {0, 1}}, 30, 1);
    auto model = dynamic_nmf(syn.slices, {.k_window = 2, .k_dynamic = 2, .top_n_stack = 20});
    ASSERT_EQ(model.window_to_dynamic.size(), 2u);
    // each dynamic topic receives one window topic per slice
    for (const auto& map : model.window_to_dynamic) EXPECT_NE(map[0], map[1]);
    // brute-force cosine matching pairs window topics across slices
    const auto& H0 = model.window_models[0].H;
    const auto& H1 = model.window_models[1].H;
    for (Eigen::Index j = 0; j < 2; ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < 2; ++i)
            if (cosine(H0.row(j), H1.row(i)) > cosine(H0.row(j), H1.row(best))) best = i;
        EXPECT_GT(cosine(H0.row(j), H1.row(best)), 0.9);
        EXPECT_EQ(model.window_to_dynamic[0][j], model.window_to_dynamic[1][best]);
    }
}

TEST(DynamicNmf, UniqueVocabularyGetsOwnDynamicTopic) {
    auto syn = make_slices_from_blocks({{0, 1}, {0, 2}}, 30, 2);
    auto model = dynamic_nmf(syn.slices, {.k_window = 2, .k_dynamic = 3, .top_n_stack = 20});
    // locate the window topic of slice 1 dominated by block-2 vocabulary
    auto block_of = [&](const NmfModel& w, std::size_t j) {
        auto top = top_terms(w, j, 1);
        return static_cast<std::size_t>(top[0].first[1] - 'a');
    };
    std::size_t unique_dyn = 99;
    for (std::size_t j = 0; j < 2; ++j)
        if (block_of(model.window_models[1], j) == 2) unique_dyn = model.window_to_dynamic[1][j];
    ASSERT_NE(unique_dyn, 99u);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t j = 0; j < 2; ++j)
            if (block_of(model.window_models[s], j) != 2) { EXPECT_NE(model.window_to_dynamic[s][j], unique_dyn); }
}

TEST(DynamicNmf, FullTruncationIsRowNormalisation) {
    NmfModel w;
    w.H.resize(2, 3);
    w.H << 0.2, 0.3, 0.5, 0.0, 1.0, 0.0;
    auto stacked = stack_window_topics({w}, 3).to_dense();
    DenseMatrix expected = w.H;
    for (Eigen::Index r = 0; r < 2; ++r) expected.row(r) /= expected.row(r).norm();
    EXPECT_LT((stacked - expected).cwiseAbs().maxCoeff(), 1e-15);
    auto cut = stack_window_topics({w}, 1).to_dense();
    EXPECT_EQ(cut(0, 2), 1.0);
    EXPECT_EQ(cut(0, 0), 0.0);
}

TEST(DynamicNmf, Errors) {
    auto syn = make_slices_from_blocks({{0, 1}, {0, 1}}, 10, 3);
    EXPECT_THROW(dynamic_nmf({syn.slices[0]}, {}), Error);
    EXPECT_THROW(dynamic_nmf(syn.slices, {.k_window = 2, .k_dynamic = 5}), Error);
    EXPECT_THROW(dynamic_nmf(syn.slices, {.k_window = 11, .k_dynamic = 2}), Error);
}

TEST(TopicFrequency, OneHotAndConservation) {
    DenseMatrix one(1, 3);
    one << 0, 1, 0;
    auto f = topic_frequency({one}, {{2, 0, 1}}, 3);
    EXPECT_EQ(f.sum(), 1);
    EXPECT_EQ(f(0, 0), 1);

    DenseMatrix tie(1, 2);
    tie << 0.5, 0.5;
    EXPECT_EQ(topic_frequency({tie}, {{0, 1}}, 2)(0, 0), 1);

    auto syn = make_slices_from_blocks({{0, 1}, {0, 1}, {0, 1}}, 15, 4);
    auto model = dynamic_nmf(syn.slices, {.k_window = 2, .k_dynamic = 2});
    std::vector<DenseMatrix> W;
    for (const auto& w : model.window_models) W.push_back(w.W);
    auto freq = topic_frequency(W, model.window_to_dynamic, 2);
    for (Eigen::Index s = 0; s < freq.rows(); ++s) EXPECT_EQ(freq.row(s).sum(), 15);
}

TEST(TopicFrequency, RegimeTopicAbsentEarly) {
    auto syn = make_slices_from_blocks({{0, 1}, {0, 1}, {0, 1, 2}, {0, 1, 2}}, 30, 5);
    auto model = dynamic_nmf(syn.slices, {.k_window = 3, .k_dynamic = 3});
    std::vector<DenseMatrix> W;
    for (const auto& w : model.window_models) W.push_back(w.W);
    auto freq = topic_frequency(W, model.window_to_dynamic, 3);
    // dynamic topic carrying block 2
    std::size_t regime = argmax_row(model.dynamic_H.col(static_cast<Eigen::Index>(*syn.vocab->find(testutil::block_term(2, 0)))));
    EXPECT_EQ(freq(0, regime), 0);
    EXPECT_EQ(freq(1, regime), 0);
    EXPECT_GE(freq(2, regime), 1);
    EXPECT_GE(freq(3, regime), 1);
}
