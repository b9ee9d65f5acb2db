#include <gtest/gtest.h>

#include <regex>

#include <chronotopic/viz.hpp>

#include "test_util.hpp"

using namespace chronotopic;

namespace {

double dist(const DenseMatrix& c, Eigen::Index i, Eigen::Index j) { return (c.row(i) - c.row(j)).norm(); }

std::vector<std::vector<double>> polylines(const std::string& svg) {
    std::vector<std::vector<double>> out;
    std::regex line("points=\"([^\"]*)\"");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), line); it != std::sregex_iterator(); ++it) {
        std::vector<double> ys;
        std::istringstream pts((*it)[1].str());
        std::string pt;
        while (pts >> pt) ys.push_back(std::stod(pt.substr(pt.find(',') + 1)));
        out.push_back(ys);
    }
    return out;
}

}  // namespace

TEST(IntertopicMap, IdenticalRowsShareCoordinates) {
    DenseMatrix M(3, 4);
    M << 1, 2, 3, 4, 2, 4, 6, 8, 4, 0, 0, 1;
    auto m = intertopic_map(M, {1, 1, 1});
    EXPECT_LT(dist(m.coords, 0, 1), 1e-12);
    EXPECT_GT(dist(m.coords, 0, 2), 0.1);
}

TEST(IntertopicMap, SimplexVertices) {
    // three one-hot rows form an equilateral triangle, which lies in a plane
    DenseMatrix M = DenseMatrix::Zero(3, 5);
    for (int i = 0; i < 3; ++i) M(i, i + 1) = 7.0;
    auto m = intertopic_map(M, {1, 2, 3});
    const double s = std::sqrt(2.0);
    EXPECT_NEAR(dist(m.coords, 0, 1), s, 1e-6);
    EXPECT_NEAR(dist(m.coords, 0, 2), s, 1e-6);
    EXPECT_NEAR(dist(m.coords, 1, 2), s, 1e-6);

    // four vertices cannot be equidistant in 2-D; compare against an independent
    // projection onto the top-2 eigenvectors of the centred Gram matrix instead
    DenseMatrix Q = DenseMatrix::Identity(4, 4);
    auto m4 = intertopic_map(Q, {1, 1, 1, 1});
    DenseMatrix C = Q.rowwise() - Q.colwise().mean();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(C * C.transpose());
    DenseMatrix Y = eig.eigenvectors().rightCols(2) * eig.eigenvalues().tail(2).cwiseSqrt().asDiagonal();
    // the centred simplex has a threefold eigenvalue, so only the projected spread is determined
    EXPECT_NEAR(m4.coords.squaredNorm(), Y.squaredNorm(), 1e-9);
    EXPECT_NEAR(m4.coords.squaredNorm(), 2.0, 1e-9);
}

TEST(IntertopicMap, SharesAndLabels) {
    DenseMatrix M(2, 3);
    M << 3, 1, 0, 0, 1, 3;
    auto vocab = Vocabulary::from_terms({"ager", "bellum", "caelum"});
    auto m = intertopic_map(M, {30, 10}, &vocab);
    EXPECT_EQ(m.shares, (std::vector<double>{0.75, 0.25}));
    EXPECT_EQ(m.coords(0, 1), 0.0);  // k = 2 leaves one axis
    EXPECT_NEAR(dist(m.coords, 0, 1), (M.row(0) / 4 - M.row(1) / 4).norm(), 1e-12);
    EXPECT_EQ(m.labels[0], (std::vector<std::string>{"ager", "bellum"}));
    auto zero = intertopic_map(M, {0, 0});
    EXPECT_EQ(zero.shares, (std::vector<double>{0.5, 0.5}));
    EXPECT_THROW(intertopic_map(M.topRows(1), {1}), Error);
    EXPECT_THROW(intertopic_map(M, {1}), Error);
    auto svg = m.to_svg();
    EXPECT_EQ(svg, intertopic_map(M, {30, 10}, &vocab).to_svg());
    EXPECT_NE(svg.find("<circle"), std::string::npos);
}

TEST(TopicsOverTime, SingleTopicFollowsSliceSizes) {
    Eigen::MatrixXi f(3, 1);
    f << 4, 9, 2;
    auto ts = topics_over_time(f, {0, 10, 20, 30}, {"ager"});
    auto lines = polylines(ts.to_svg());
    ASSERT_EQ(lines.size(), 1u);
    // y = top + h - h * v / ymax with top 40, h 360, ymax 9
    for (int t = 0; t < 3; ++t) EXPECT_NEAR(lines[0][t], 400.0 - 360.0 * f(t, 0) / 9.0, 1e-6);
    EXPECT_EQ(ts.to_csv(), "slice_start,slice_end,topic,count\n0,10,0,4\n10,20,0,9\n20,30,0,2\n");
}

TEST(TopicsOverTime, LateTopicStartsAtZero) {
    Eigen::MatrixXi f = Eigen::MatrixXi::Zero(10, 2);
    for (int t = 0; t < 10; ++t) {
        f(t, 0) = 5;
        if (t >= 5) f(t, 1) = 3;
    }
    std::vector<int> b;
    for (int t = 0; t <= 10; ++t) b.push_back(100 * t);
    auto lines = polylines(topics_over_time(f, b, {}).to_svg());
    ASSERT_EQ(lines.size(), 2u);
    for (int t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(lines[1][t], 400.0);  // baseline
    for (int t = 5; t < 10; ++t) EXPECT_LT(lines[1][t], 400.0);
}

TEST(TopicsOverTime, SingleSliceAndOutliers) {
    Eigen::MatrixXi f(1, 2);
    f << 3, 4;
    auto ts = topics_over_time(f, {1, 2}, {"a", "b"}, {2});
    EXPECT_EQ(ts.to_csv(), "slice_start,slice_end,topic,count\n1,2,0,3\n1,2,1,4\n1,2,-1,2\n");
    auto back = parse_time_series_csv(ts.to_csv());
    EXPECT_EQ(back.counts, f);
    EXPECT_EQ(back.outliers, (std::vector<int>{2}));
    EXPECT_EQ(polylines(ts.to_svg()).size(), 3u);
    EXPECT_THROW(topics_over_time(f, {1, 2, 3}, {}), Error);
}

TEST(TopicsOverTime, CsvRoundTripAndDeterminism) {
    std::mt19937_64 eng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int T = 1 + static_cast<int>(eng() % 12), k = 1 + static_cast<int>(eng() % 6);
        Eigen::MatrixXi f(T, k);
        for (int i = 0; i < f.size(); ++i) f.data()[i] = static_cast<int>(eng() % 50);
        std::vector<int> b{-500};
        for (int t = 0; t < T; ++t) b.push_back(b.back() + 1 + static_cast<int>(eng() % 90));
        auto ts = topics_over_time(f, b, {});
        auto back = parse_time_series_csv(ts.to_csv());
        EXPECT_EQ(back.counts, f);
        EXPECT_EQ(back.boundaries, b);
        EXPECT_EQ(ts.to_svg(), topics_over_time(f, b, {}).to_svg());
    }
}

TEST(TopicsOverTime, SvgNumbersUseSixDecimals) {
    Eigen::MatrixXi f(3, 2);
    f << 1, 2, 3, 4, 5, 6;
    auto svg = topics_over_time(f, {0, 1, 2, 3}, {"x & y", "<z>"}).to_svg();
    EXPECT_NE(svg.find("x &amp; y"), std::string::npos);
    EXPECT_NE(svg.find("&lt;z&gt;"), std::string::npos);
    std::regex num("points=\"([0-9.]+),([0-9.]+)");
    std::smatch m;
    ASSERT_TRUE(std::regex_search(svg, m, num));
    EXPECT_EQ(m[1].str().size() - m[1].str().find('.') - 1, 6u);
}
