#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "core.hpp"
#include "corpus.hpp"
#include "embedcluster.hpp"
#include "matrix.hpp"
#include "nmf.hpp"

namespace chronotopic {

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

}  // namespace detail

struct IntertopicMap {
    DenseMatrix coords;  // k x 2
    std::vector<double> shares;
    std::vector<std::vector<std::string>> labels;  // top-5 terms

    std::size_t k() const { return shares.size(); }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < k(); ++i)
            j.push_back({{"topic", i},
                         {"x", coords(static_cast<Eigen::Index>(i), 0)},
                         {"y", coords(static_cast<Eigen::Index>(i), 1)},
                         {"share", shares[i]},
                         {"terms", labels[i]}});
        return j;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "topic,x,y,share,terms\n";
        for (std::size_t i = 0; i < k(); ++i)
            os << i << ',' << fixed6(coords(static_cast<Eigen::Index>(i), 0)) << ',' << fixed6(coords(static_cast<Eigen::Index>(i), 1))
               << ',' << fixed6(shares[i]) << ',' << detail::join(labels[i], " ") << '\n';
        return os.str();
    }

    /// Circles at the projected coordinates; area proportional to share.
    std::string to_svg(const std::string& title = "Intertopic distance map") const {
        const double W = 640, H = 640, pad = 80, rmax = 60;
        double xmin = coords.col(0).minCoeff(), xmax = coords.col(0).maxCoeff();
        double ymin = coords.col(1).minCoeff(), ymax = coords.col(1).maxCoeff();
        const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
        auto px = [&](double x) { return pad + (x - xmin) / span * (W - 2 * pad); };
        auto py = [&](double y) { return H - pad - (y - ymin) / span * (H - 2 * pad); };
        std::ostringstream os;
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H
           << "\" style=\"font-family:sans-serif;font-size:11px\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
        os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" style=\"font-size:15px\">" << detail::xml_escape(title)
           << "</text>\n";
        os << "<line x1=\"" << pad / 2 << "\" y1=\"" << H / 2 << "\" x2=\"" << W - pad / 2 << "\" y2=\"" << H / 2
           << "\" stroke=\"#cccccc\"/>\n";
        os << "<line x1=\"" << W / 2 << "\" y1=\"" << pad / 2 << "\" x2=\"" << W / 2 << "\" y2=\"" << H - pad / 2
           << "\" stroke=\"#cccccc\"/>\n";
        for (std::size_t i = 0; i < k(); ++i) {
            const double cx = px(coords(static_cast<Eigen::Index>(i), 0)), cy = py(coords(static_cast<Eigen::Index>(i), 1));
            const double r = rmax * std::sqrt(shares[i]);
            os << "<circle cx=\"" << fixed6(cx) << "\" cy=\"" << fixed6(cy) << "\" r=\"" << fixed6(r) << "\" fill=\""
               << detail::palette(i) << "\" fill-opacity=\"0.45\" stroke=\"" << detail::palette(i) << "\"/>\n";
            os << "<text x=\"" << fixed6(cx) << "\" y=\"" << fixed6(cy) << "\" text-anchor=\"middle\">" << i << ": "
               << detail::xml_escape(detail::join(labels[i], ", ")) << "</text>\n";
        }
        os << "</svg>\n";
        return os.str();
    }
};

/// PCA of the renormalised topic-term rows. With k = 2 the second axis is 0.
inline IntertopicMap intertopic_map(const DenseMatrix& topic_term, const std::vector<double>& prevalence,
                                    const Vocabulary* vocab = nullptr) {
    const auto k = static_cast<std::size_t>(topic_term.rows());
    if (k < 2) throw Error("intertopic_map: need at least 2 topics, got " + std::to_string(k));
    if (prevalence.size() != k) throw Error("intertopic_map: prevalence has " + std::to_string(prevalence.size()) + " entries for " +
                                            std::to_string(k) + " topics");
    if ((topic_term.array() < 0).any()) throw Error("intertopic_map: negative topic-term weight");
    DenseMatrix P = topic_term;
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
        const double s = P.row(r).sum();
        if (s > 0) P.row(r) /= s;
    }
    IntertopicMap m;
    const std::size_t d = std::min<std::size_t>({2, k - 1, static_cast<std::size_t>(P.cols())});
    auto pca = pca_fit(P, d);
    m.coords = DenseMatrix::Zero(static_cast<Eigen::Index>(k), 2);
    m.coords.leftCols(static_cast<Eigen::Index>(d)) = pca.project(P);

    double total = 0;
    for (double p : prevalence) {
        if (p < 0) throw Error("intertopic_map: negative prevalence");
        total += p;
    }
    for (double p : prevalence) m.shares.push_back(total > 0 ? p / total : 1.0 / static_cast<double>(k));

    for (std::size_t i = 0; i < k; ++i) {
        std::vector<std::string> terms;
        if (vocab)
            for (const auto& [t, w] : top_terms(P.row(static_cast<Eigen::Index>(i)).transpose(), *vocab, 5))
                if (w > 0) terms.push_back(t);
        m.labels.push_back(std::move(terms));
    }
    return m;
}

struct TopicTimeSeries {
    Eigen::MatrixXi counts;       // T x k
    std::vector<int> boundaries;  // T + 1
    std::vector<std::string> labels;
    std::vector<int> outliers;  // empty unless the model reports them

    std::size_t num_slices() const { return static_cast<std::size_t>(counts.rows()); }
    std::size_t k() const { return static_cast<std::size_t>(counts.cols()); }

    /// slice_end is exclusive, matching the slice boundaries. Outliers appear as topic -1.
    std::string to_csv() const {
        std::ostringstream os;
        os << "slice_start,slice_end,topic,count\n";
        for (std::size_t t = 0; t < num_slices(); ++t) {
            for (std::size_t c = 0; c < k(); ++c)
                os << boundaries[t] << ',' << boundaries[t + 1] << ',' << c << ','
                   << counts(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) << '\n';
            if (!outliers.empty()) os << boundaries[t] << ',' << boundaries[t + 1] << ",-1," << outliers[t] << '\n';
        }
        return os.str();
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["boundaries"] = boundaries;
        j["labels"] = labels;
        auto& rows = j["counts"] = nlohmann::ordered_json::array();
        for (Eigen::Index t = 0; t < counts.rows(); ++t) {
            std::vector<int> row;
            for (Eigen::Index c = 0; c < counts.cols(); ++c) row.push_back(counts(t, c));
            rows.push_back(row);
        }
        if (!outliers.empty()) j["outliers"] = outliers;
        return j;
    }

    /// One polyline per topic over slice midpoints, legend of topic labels.
    std::string to_svg(const std::string& title = "Topic frequency (# documents) over time") const {
        const double W = 800, plot_h = 360, left = 60, right = 20, top = 40;
        const double legend_h = 18.0 * static_cast<double>(k() + (outliers.empty() ? 0 : 1));
        const double H = top + plot_h + 50 + legend_h;
        int ymax = 1;
        if (counts.size() > 0) ymax = std::max(ymax, counts.maxCoeff());
        for (int o : outliers) ymax = std::max(ymax, o);
        const std::size_t T = num_slices();
        auto px = [&](std::size_t t) {
            return T <= 1 ? left + (W - left - right) / 2 : left + (W - left - right) * static_cast<double>(t) / static_cast<double>(T - 1);
        };
        auto py = [&](double v) { return top + plot_h - plot_h * v / ymax; };

        std::ostringstream os;
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << fixed6(H) << "\" viewBox=\"0 0 " << W << ' '
           << fixed6(H) << "\" style=\"font-family:sans-serif;font-size:11px\">\n";
        os << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
        os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" style=\"font-size:15px\">" << detail::xml_escape(title)
           << "</text>\n";
        os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << W - right << "\" y2=\"" << top + plot_h
           << "\" stroke=\"#000000\"/>\n";
        os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h << "\" stroke=\"#000000\"/>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << ymax << "</text>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + plot_h + 4 << "\" text-anchor=\"end\">0</text>\n";
        for (std::size_t t = 0; t < T; ++t)
            os << "<text x=\"" << fixed6(px(t)) << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">" << boundaries[t]
               << "</text>\n";

        auto polyline = [&](auto value_at, const char* color, const char* dash) {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"" << dash << " points=\"";
            for (std::size_t t = 0; t < T; ++t) os << (t ? " " : "") << fixed6(px(t)) << ',' << fixed6(py(value_at(t)));
            os << "\"/>\n";
        };
        for (std::size_t c = 0; c < k(); ++c)
            polyline([&](std::size_t t) { return counts(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)); },
                     detail::palette(c), "");
        if (!outliers.empty()) polyline([&](std::size_t t) { return outliers[t]; }, "#999999", " stroke-dasharray=\"4 3\"");

        double ly = top + plot_h + 40;
        for (std::size_t c = 0; c < k(); ++c, ly += 18) {
            os << "<rect x=\"" << left << "\" y=\"" << fixed6(ly - 9) << "\" width=\"12\" height=\"12\" fill=\"" << detail::palette(c)
               << "\"/>\n";
            os << "<text x=\"" << left + 18 << "\" y=\"" << fixed6(ly + 1) << "\">" << c << ": "
               << detail::xml_escape(c < labels.size() ? labels[c] : "") << "</text>\n";
        }
        if (!outliers.empty())
            os << "<text x=\"" << left + 18 << "\" y=\"" << fixed6(ly + 1) << "\">-1: outliers</text>\n";
        os << "</svg>\n";
        return os.str();
    }
};

inline TopicTimeSeries topics_over_time(const Eigen::MatrixXi& freq, const std::vector<int>& boundaries,
                                        const std::vector<std::string>& labels, const std::vector<int>& outliers = {}) {
    if (boundaries.size() != static_cast<std::size_t>(freq.rows()) + 1)
        throw Error("topics_over_time: " + std::to_string(boundaries.size()) + " boundaries for " + std::to_string(freq.rows()) +
                    " slices");
    if (!labels.empty() && labels.size() != static_cast<std::size_t>(freq.cols()))
        throw Error("topics_over_time: label count does not match topic count");
    if (!outliers.empty() && outliers.size() != static_cast<std::size_t>(freq.rows()))
        throw Error("topics_over_time: outlier series length does not match slice count");
    TopicTimeSeries ts{freq, boundaries, labels, outliers};
    if (ts.labels.empty())
        for (Eigen::Index c = 0; c < freq.cols(); ++c) ts.labels.push_back("topic " + std::to_string(c));
    return ts;
}

/// Inverse of TopicTimeSeries::to_csv.
inline TopicTimeSeries parse_time_series_csv(const std::string& text) {
    auto rows = detail::parse_csv(text, "time series csv");
    if (rows.empty() || rows[0] != std::vector<std::string>{"slice_start", "slice_end", "topic", "count"})
        throw Error("time series csv: unexpected header");
    std::vector<std::array<long, 4>> recs;
    long kmax = -1;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() == 1 && rows[i][0].empty()) continue;
        if (rows[i].size() != 4) throw Error("time series csv: line " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) + " fields");
        std::array<long, 4> r{};
        for (int f = 0; f < 4; ++f) r[f] = std::stol(rows[i][f]);
        kmax = std::max(kmax, r[2]);
        recs.push_back(r);
    }
    TopicTimeSeries ts;
    for (const auto& r : recs) {
        if (ts.boundaries.empty()) {
            ts.boundaries = {static_cast<int>(r[0]), static_cast<int>(r[1])};
        } else if (r[0] != ts.boundaries[ts.boundaries.size() - 2]) {
            if (r[0] != ts.boundaries.back()) throw Error("time series csv: slices are not contiguous at " + std::to_string(r[0]));
            ts.boundaries.push_back(static_cast<int>(r[1]));
        }
    }
    const std::size_t T = ts.boundaries.empty() ? 0 : ts.boundaries.size() - 1;
    ts.counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(T), kmax + 1);
    bool has_outliers = false;
    for (const auto& r : recs) has_outliers |= r[2] == -1;
    if (has_outliers) ts.outliers.assign(T, 0);
    for (const auto& r : recs) {
        const auto t = static_cast<std::size_t>(std::find(ts.boundaries.begin(), ts.boundaries.end(), r[0]) - ts.boundaries.begin());
        if (r[2] < 0)
            ts.outliers[t] = static_cast<int>(r[3]);
        else
            ts.counts(static_cast<Eigen::Index>(t), r[2]) = static_cast<int>(r[3]);
    }
    return ts;
}

}  // namespace chronotopic
