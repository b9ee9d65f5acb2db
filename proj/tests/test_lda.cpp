#include <gtest/gtest.h>

#include <chronotopic/lda.hpp>

#include "test_util.hpp"

using namespace chronotopic;

namespace {

TermDocMatrix counts_of(const std::vector<TokenStream>& streams) {
    auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(streams, 1, 1.0));
    return count_matrix(streams, vocab);
}

// Recomputes every count table from the token assignments.
void check_conservation(const GibbsState& st, std::size_t& violations) {
    const std::size_t K = st.k;
    std::vector<int> wt(st.word_topic.size(), 0), tt(K, 0);
    for (std::size_t d = 0; d < st.words.size(); ++d) {
        std::vector<int> dt(K, 0);
        for (std::size_t i = 0; i < st.words[d].size(); ++i) {
            ++dt[st.assignments[d][i]];
            ++wt[st.words[d][i] * K + st.assignments[d][i]];
            ++tt[st.assignments[d][i]];
        }
        if (dt != st.doc_topic[d]) ++violations;
        if (std::accumulate(st.doc_topic[d].begin(), st.doc_topic[d].end(), 0) != static_cast<int>(st.words[d].size())) ++violations;
    }
    if (wt != st.word_topic) ++violations;
    if (tt != st.topic_total) ++violations;
}

}  // namespace

TEST(LdaFit, TwoTokenSystemMatchesEnumeration) {
    // Two single-token documents with distinct words, k=2. Exhaustive
    // enumeration of the four joint states (z1, z2) under the collapsed
    // posterior: only the topic-word factor differs between states,
    // prod_k 1 / prod_{m < n_k} (m + V*beta).
    const double beta = 0.01, alpha = 0.1, Vb = 2 * beta;
    auto weight = [&](int z1, int z2) {
        int n[2] = {0, 0};
        ++n[z1];
        ++n[z2];
        double w = 1;
        for (int k = 0; k < 2; ++k)
            for (int m = 0; m < n[k]; ++m) w /= (m + Vb);
        return w;
    };
    double total = 0, separated = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            total += weight(a, b);
            if (a != b) separated += weight(a, b);
        }
    const double p_separated = separated / total;  // = (Vb + 1) / (2 Vb + 1)

    auto m = counts_of({{"d1", {"roma"}}, {"d2", {"deus"}}});
    std::size_t visits = 0, apart = 0;
    auto model = lda_fit(m, {.k = 2, .alpha = alpha, .beta = beta, .iterations = 20000, .burn_in = 100, .seed = 3}, nullptr,
                         [&](std::size_t sweep, const GibbsState& st) {
                             if (sweep <= 100) return;
                             ++visits;
                             if (st.assignments[0][0] != st.assignments[1][0]) ++apart;
                         });
    EXPECT_NEAR(static_cast<double>(apart) / visits, p_separated, 0.01);

    // A single snapshot: each document's mass sits on the topic holding its token.
    auto snap = lda_fit(m, {.k = 2, .alpha = alpha, .beta = beta, .iterations = 2010, .burn_in = 2000, .seed = 3});
    for (Eigen::Index d = 0; d < 2; ++d) EXPECT_GE(snap.theta.row(d).maxCoeff(), 0.8);
}

TEST(LdaFit, CountConservationEverySweep) {
    auto pc = testutil::planted_corpus(8, 3, 5, 12, 17);  // 96 tokens
    auto m = counts_of(pc.streams);
    for (bool parallel : {false, true}) {
        std::size_t violations = 0, sweeps = 0;
        lda_fit(m, {.k = 3, .iterations = 60, .burn_in = 20, .seed = 1, .parallel_sweep = parallel}, nullptr,
                [&](std::size_t, const GibbsState& st) {
                    ++sweeps;
                    check_conservation(st, violations);
                });
        EXPECT_EQ(sweeps, 60u);
        EXPECT_EQ(violations, 0u);
    }
}

TEST(LdaFit, DistributionsNormalised) {
    auto pc = testutil::planted_corpus(20, 3, 6, 15, 2);
    auto model = lda_fit(counts_of(pc.streams), {.k = 3, .iterations = 100, .burn_in = 50, .seed = 4});
    for (Eigen::Index r = 0; r < model.phi.rows(); ++r) EXPECT_NEAR(model.phi.row(r).sum(), 1.0, 1e-9);
    for (Eigen::Index r = 0; r < model.theta.rows(); ++r) EXPECT_NEAR(model.theta.row(r).sum(), 1.0, 1e-9);
    EXPECT_GT(model.phi.minCoeff(), 0.0);
    EXPECT_GT(model.theta.minCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(model.alpha, 50.0 / 3.0);
}

TEST(LdaFit, Errors) {
    auto m = counts_of({{"d1", {"a", "b"}}, {"d2", {"b"}}});
    EXPECT_THROW(lda_fit(m, {.k = 1}), Error);
    EXPECT_THROW(lda_fit(m, {.k = 2, .iterations = 10, .burn_in = 10}), Error);
    EXPECT_THROW(lda_fit(tfidf(m), {.k = 2}), Error);
    TermDocMatrix frac = m;
    frac.entries = SparseMatrix::from_rows(2, {{{0, 1.5}}, {{1, 1.0}}});
    EXPECT_THROW(lda_fit(frac, {.k = 2, .iterations = 20, .burn_in = 10}), Error);
}

TEST(LdaFit, EmptyDocumentWarnsAndKeepsPriorRow) {
    auto pc = testutil::planted_corpus(6, 2, 4, 10, 1);
    pc.streams.push_back({"empty", {}});
    auto model = lda_fit(counts_of(pc.streams), {.k = 2, .iterations = 30, .burn_in = 10, .seed = 1});
    ASSERT_EQ(model.warnings.size(), 1u);
    EXPECT_NE(model.warnings[0].find("empty"), std::string::npos);
    EXPECT_NEAR(model.theta(6, 0), 0.5, 1e-12);
}

TEST(LdaFit, SeedDeterminism) {
    auto pc = testutil::planted_corpus(20, 3, 6, 15, 2);
    auto m = counts_of(pc.streams);
    LdaOptions o{.k = 3, .iterations = 50, .burn_in = 20, .seed = 77};
    auto a = lda_fit(m, o), b = lda_fit(m, o);
    EXPECT_EQ(a.phi, b.phi);
    EXPECT_EQ(a.theta, b.theta);
}

TEST(LdaFit, SnapshotModeIsExchangeableAndThreadInvariant) {
    auto pc = testutil::planted_corpus(30, 3, 6, 15, 9);
    auto m = counts_of(pc.streams);
    LdaOptions o{.k = 3, .iterations = 60, .burn_in = 30, .seed = 5, .parallel_sweep = true};
    auto base = lda_fit(m, o);

    std::vector<TokenStream> reversed(pc.streams.rbegin(), pc.streams.rend());
    auto rm = count_matrix(reversed, m.vocab);
    auto rev = lda_fit(rm, o);
    EXPECT_EQ(base.phi, rev.phi);
    for (Eigen::Index d = 0; d < base.theta.rows(); ++d) EXPECT_EQ(base.theta.row(d), rev.theta.row(base.theta.rows() - 1 - d));

    o.threads = 4;
    auto threaded = lda_fit(m, o);
    EXPECT_EQ(base.phi, threaded.phi);
    EXPECT_EQ(base.theta, threaded.theta);
}

TEST(LdaFit, PlantedTopicRecovery) {
    auto pc = testutil::planted_corpus(300, 3, 10, 30, 12);
    auto model = lda_fit(counts_of(pc.streams), {.k = 3, .iterations = 300, .burn_in = 150, .seed = 8});
    std::vector<long> pred;
    for (Eigen::Index d = 0; d < model.theta.rows(); ++d) pred.push_back(static_cast<long>(argmax_row(model.theta.row(d).transpose())));
    EXPECT_GE(testutil::purity(pred, pc.labels), 0.8);
}

TEST(AlignTopics, IdentityAndSwap) {
    LdaModel a;
    a.phi.resize(3, 4);
    a.phi << 0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1, 0.1, 0.1, 0.4, 0.4;
    auto same = align_topics({a, a});
    EXPECT_EQ(same.alignment[1], (std::vector<std::size_t>{0, 1, 2}));

    LdaModel b = a;
    b.phi.row(0) = a.phi.row(1);
    b.phi.row(1) = a.phi.row(0);
    auto swapped = align_topics({a, b});
    EXPECT_EQ(swapped.alignment[1], (std::vector<std::size_t>{1, 0, 2}));

    // brute force over all 3! matchings agrees with greedy here
    std::vector<std::size_t> perm{0, 1, 2}, best;
    double best_score = -1;
    do {
        double score = 0;
        for (std::size_t j = 0; j < 3; ++j) score += cosine_similarity(a.phi.row(perm[j]).transpose(), b.phi.row(j).transpose());
        if (score > best_score) {
            best_score = score;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(best, swapped.alignment[1]);
    EXPECT_EQ(swapped.canonical_phi(1), a.phi);
}

TEST(AlignTopics, OrthogonalRowsStillBijection) {
    LdaModel a, b;
    a.phi = DenseMatrix::Zero(3, 6);
    b.phi = DenseMatrix::Zero(3, 6);
    for (int i = 0; i < 3; ++i) {
        a.phi(i, i) = 1;
        b.phi(i, 3 + i) = 1;
    }
    auto d = align_topics({a, b});
    auto p = d.alignment[1];
    std::sort(p.begin(), p.end());
    EXPECT_EQ(p, (std::vector<std::size_t>{0, 1, 2}));
}

namespace {

std::vector<TermDocMatrix> slices_of(const std::vector<std::vector<std::size_t>>& blocks, std::size_t docs, std::uint64_t seed) {
    std::vector<std::vector<TokenStream>> per;
    std::vector<TokenStream> all;
    for (std::size_t s = 0; s < blocks.size(); ++s) {
        auto pc = testutil::planted_corpus(docs, 4, 8, 25, seed + s, [&](std::size_t, std::size_t b) {
            return std::find(blocks[s].begin(), blocks[s].end(), b) != blocks[s].end();
        });
        for (auto& st : pc.streams) st.doc_id = "s" + std::to_string(s) + st.doc_id;
        all.insert(all.end(), pc.streams.begin(), pc.streams.end());
        per.push_back(pc.streams);
    }
    auto vocab = std::make_shared<const Vocabulary>(build_vocabulary(all, 1, 1.0));
    std::vector<TermDocMatrix> out;
    for (auto& p : per) out.push_back(count_matrix(p, vocab));
    return out;
}

}  // namespace

TEST(WarmStart, KappaZeroEqualsIndependentFits) {
    auto slices = slices_of({{0, 1, 2}, {0, 1, 2}, {0, 1, 2}}, 12, 3);
    LdaOptions o{.k = 3, .iterations = 40, .burn_in = 20, .seed = 6};
    auto warm = warm_start_fit(slices, o, 0.0);
    std::vector<LdaModel> independent;
    for (std::size_t t = 0; t < slices.size(); ++t) {
        LdaOptions so = o;
        so.seed = lda_slice_seed(o.seed, t);
        independent.push_back(lda_fit(slices[t], so));
    }
    auto aligned = align_topics(independent);
    for (std::size_t t = 0; t < slices.size(); ++t) {
        EXPECT_EQ(warm.slice_models[t].phi, aligned.slice_models[t].phi);
        EXPECT_EQ(warm.slice_models[t].theta, aligned.slice_models[t].theta);
        EXPECT_EQ(warm.alignment[t], aligned.alignment[t]);
    }
}

TEST(WarmStart, PriorCarriesAbsentTopic) {
    // slice 0 uses blocks {0,1,2}; slice 1 lacks block 2 entirely
    auto slices = slices_of({{0, 1, 2}, {0, 1}}, 30, 21);
    const auto& vocab = *slices[0].vocab;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        LdaOptions o{.k = 3, .alpha = 0.1, .beta = 1.0, .iterations = 200, .burn_in = 100, .seed = seed};
        auto model = warm_start_fit(slices, o, 0.5);
        auto phi0 = model.canonical_phi(0), phi1 = model.canonical_phi(1);
        // canonical topic whose slice-0 top term is from block 2
        std::size_t c = 99;
        for (Eigen::Index r = 0; r < 3; ++r)
            if (top_terms(phi0.row(r).transpose(), vocab, 1)[0].first[1] == 'c') c = static_cast<std::size_t>(r);
        ASSERT_NE(c, 99u) << "seed " << seed;
        auto prior_top = top_terms(phi0.row(static_cast<Eigen::Index>(c)).transpose(), vocab, 1)[0].first;
        auto later_top = top_terms(phi1.row(static_cast<Eigen::Index>(c)).transpose(), vocab, 1)[0].first;
        EXPECT_EQ(later_top, prior_top) << "seed " << seed;
    }
}

TEST(WarmStart, AlignmentIsBijectionForAnyKappa) {
    auto slices = slices_of({{0, 1}, {1, 2}, {2, 3}}, 10, 5);
    for (double kappa : {0.0, 0.25, 0.5, 1.0}) {
        auto model = warm_start_fit(slices, {.k = 3, .iterations = 30, .burn_in = 10, .seed = 1}, kappa);
        for (auto p : model.alignment) {
            std::sort(p.begin(), p.end());
            EXPECT_EQ(p, (std::vector<std::size_t>{0, 1, 2}));
        }
        for (const auto& m : model.slice_models)
            for (Eigen::Index r = 0; r < m.phi.rows(); ++r) EXPECT_NEAR(m.phi.row(r).sum(), 1.0, 1e-9);
    }
    EXPECT_THROW(warm_start_fit(slices, {.k = 3, .iterations = 30, .burn_in = 10}, 1.5), Error);
}
