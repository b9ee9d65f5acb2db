#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace chronotopic {

struct Document {
    std::string id;
    std::string text;
    int date = 0;  // signed year, BC negative
    std::string author;
    std::string source_path;

    bool operator==(const Document&) const = default;
};

struct LoadReport {
    std::size_t loaded = 0;
    std::size_t skipped_undated = 0;
    std::size_t split_count = 0;
    std::size_t combined_count = 0;

    bool operator==(const LoadReport&) const = default;

    nlohmann::ordered_json to_json() const {
        return {{"loaded", loaded},
                {"skipped_undated", skipped_undated},
                {"split_count", split_count},
                {"combined_count", combined_count}};
    }
};

struct Corpus {
    std::vector<Document> documents;
    std::string provenance;
    LoadReport report;

    std::size_t size() const { return documents.size(); }
    bool operator==(const Corpus&) const = default;
};

namespace detail {

// RFC 4180 record splitting: commas separate, double quotes escape.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text, const std::string& what) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field.empty()) throw Error(what + ":" + std::to_string(line) + ": stray quote");
                quoted = true;
                field_started = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r':
                break;
            case '\n':
                if (field_started || !field.empty() || !row.empty()) {
                    row.push_back(std::move(field));
                    rows.push_back(std::move(row));
                }
                field.clear();
                row.clear();
                field_started = false;
                ++line;
                break;
            default:
                field += c;
                field_started = true;
        }
    }
    if (quoted) throw Error(what + ": unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<int> parse_year(std::string_view raw) {
    std::string s = trim(raw);
    if (s.empty()) return std::nullopt;
    const char* first = s.data();
    if (*first == '+') ++first;
    int v = 0;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Byte spans [begin, end) of whitespace-separated tokens.
inline std::vector<std::pair<std::size_t, std::size_t>> whitespace_tokens(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i >= text.size()) break;
        std::size_t b = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        spans.emplace_back(b, i);
    }
    return spans;
}

}  // namespace detail

inline std::size_t whitespace_token_count(std::string_view text) {
    return detail::whitespace_tokens(text).size();
}

/// Reads the `id,path,date,author` metadata table and the referenced texts.
/// Rows whose date is empty or unparseable are skipped and counted.
inline Corpus load_corpus(const std::filesystem::path& metadata_path, const std::filesystem::path& text_root) {
    if (!std::filesystem::exists(metadata_path)) throw Error("metadata file not found: " + metadata_path.string());
    auto rows = detail::parse_csv(detail::read_file(metadata_path), metadata_path.string());
    if (rows.empty()) throw Error("metadata file is empty: " + metadata_path.string());

    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[detail::trim(rows[0][i])] = i;
    for (const char* name : {"id", "path", "date"})
        if (!col.count(name))
            throw Error(metadata_path.string() + ": header lacks column '" + name + "'");
    const bool has_author = col.count("author") > 0;

    Corpus corpus;
    corpus.provenance = metadata_path.filename().string();
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        auto cell = [&](const std::string& name) -> std::string {
            auto i = col.at(name);
            return i < row.size() ? row[i] : std::string{};
        };
        auto date = detail::parse_year(cell("date"));
        if (!date) {
            ++corpus.report.skipped_undated;
            continue;
        }
        Document doc;
        doc.id = detail::trim(cell("id"));
        if (doc.id.empty()) throw Error(metadata_path.string() + ": row " + std::to_string(r + 1) + " has an empty id");
        if (!seen.insert(doc.id).second) throw Error(metadata_path.string() + ": duplicate document id '" + doc.id + "'");
        doc.date = *date;
        doc.author = has_author ? detail::trim(cell("author")) : std::string{};
        doc.source_path = detail::trim(cell("path"));
        auto path = text_root / doc.source_path;
        if (!std::filesystem::exists(path)) throw Error("text file not found: " + path.string());
        doc.text = detail::read_file(path);
        if (whitespace_token_count(doc.text) == 0) throw Error("text file is empty: " + path.string());
        corpus.documents.push_back(std::move(doc));
    }
    if (corpus.documents.empty()) throw Error(metadata_path.string() + ": no dated documents");
    corpus.report.loaded = corpus.documents.size();
    return corpus;
}

/// Replaces documents longer than `max_tokens` whitespace tokens by chunks
/// `<id>#1 .. <id>#n`; each chunk is the original text between token boundaries.
inline Corpus split_long_documents(const Corpus& corpus, std::size_t max_tokens) {
    if (max_tokens < 100) throw Error("split_long_documents: max_tokens must be >= 100");
    Corpus out;
    out.provenance = corpus.provenance;
    out.report = corpus.report;
    for (const auto& doc : corpus.documents) {
        auto spans = detail::whitespace_tokens(doc.text);
        if (spans.size() <= max_tokens) {
            out.documents.push_back(doc);
            continue;
        }
        ++out.report.split_count;
        std::size_t chunks = (spans.size() + max_tokens - 1) / max_tokens;
        for (std::size_t k = 0; k < chunks; ++k) {
            std::size_t first = k * max_tokens;
            std::size_t last = std::min(spans.size(), first + max_tokens) - 1;
            Document chunk = doc;
            chunk.id = doc.id + "#" + std::to_string(k + 1);
            chunk.text = doc.text.substr(spans[first].first, spans[last].second - spans[first].first);
            out.documents.push_back(std::move(chunk));
        }
    }
    return out;
}

/// Concatenates small documents sharing author and date into `<author>@<date>`,
/// placed where the first member stood. Authorless documents stay untouched.
inline Corpus combine_small_documents(const Corpus& corpus, std::size_t min_tokens) {
    if (min_tokens < 1) throw Error("combine_small_documents: min_tokens must be >= 1");
    const auto& docs = corpus.documents;
    auto small = [&](const Document& d) { return !d.author.empty() && whitespace_token_count(d.text) < min_tokens; };

    std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < docs.size(); ++i)
        if (small(docs[i])) groups[{docs[i].author, docs[i].date}].push_back(i);

    std::vector<int> leader(docs.size(), -1);  // -1 keep as is, -2 merged away, else group leader
    std::unordered_map<std::size_t, const std::vector<std::size_t>*> members;
    for (const auto& [key, idx] : groups) {
        if (idx.size() < 2) continue;
        leader[idx[0]] = static_cast<int>(idx[0]);
        members[idx[0]] = &idx;
        for (std::size_t j = 1; j < idx.size(); ++j) leader[idx[j]] = -2;
    }

    Corpus out;
    out.provenance = corpus.provenance;
    out.report = corpus.report;
    std::unordered_set<std::string> ids;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (leader[i] == -2) continue;
        if (leader[i] == -1) {
            out.documents.push_back(docs[i]);
        } else {
            const auto& idx = *members.at(i);
            Document merged = docs[i];
            merged.id = docs[i].author + "@" + std::to_string(docs[i].date);
            merged.source_path.clear();
            merged.text.clear();
            for (std::size_t j = 0; j < idx.size(); ++j) {
                if (j) {
                    merged.text += '\n';
                    merged.source_path += ';';
                }
                merged.text += docs[idx[j]].text;
                merged.source_path += docs[idx[j]].source_path;
            }
            out.report.combined_count += idx.size();
            out.documents.push_back(std::move(merged));
        }
    }
    for (const auto& d : out.documents)
        if (!ids.insert(d.id).second) throw Error("combine_small_documents: combined id collides with existing id '" + d.id + "'");
    return out;
}

enum class SliceMode { equal_width, quantile };

struct SliceSet {
    std::vector<int> boundaries;                        // T+1 strictly increasing years, slice t = [b_t, b_{t+1})
    std::vector<std::size_t> slice_of;                  // per corpus document, in corpus order
    std::unordered_map<std::string, std::size_t> assignment;

    std::size_t num_slices() const { return boundaries.empty() ? 0 : boundaries.size() - 1; }

    /// Corpus row indices belonging to slice t, ascending.
    std::vector<std::size_t> members(std::size_t t) const {
        std::vector<std::size_t> m;
        for (std::size_t i = 0; i < slice_of.size(); ++i)
            if (slice_of[i] == t) m.push_back(i);
        return m;
    }

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> n(num_slices(), 0);
        for (auto s : slice_of) ++n[s];
        return n;
    }

    nlohmann::ordered_json to_json(const Corpus& corpus) const {
        nlohmann::ordered_json j;
        j["boundaries"] = boundaries;
        j["sizes"] = sizes();
        auto& a = j["assignment"] = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < corpus.documents.size(); ++i) a[corpus.documents[i].id] = slice_of[i];
        return j;
    }
};

namespace detail {

inline long long ceil_div(long long a, long long b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

inline SliceSet finish_slices(const Corpus& corpus, std::vector<int> boundaries, std::vector<std::size_t> slice_of) {
    SliceSet s;
    s.boundaries = std::move(boundaries);
    s.slice_of = std::move(slice_of);
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) s.assignment[corpus.documents[i].id] = s.slice_of[i];
    auto n = s.sizes();
    for (std::size_t t = 0; t < n.size(); ++t)
        if (n[t] == 0)
            throw Error("time slice " + std::to_string(t) + " [" + std::to_string(s.boundaries[t]) + ", " +
                        std::to_string(s.boundaries[t + 1]) +
                        ") is empty; lower the number of timesteps or switch to quantile slicing");
    return s;
}

}  // namespace detail

/// Partitions the corpus into T contiguous date ranges. Equal-width bins put
/// date d in floor((d - min) * T / (max - min + 1)); quantile mode balances
/// document counts while keeping equal dates together.
inline SliceSet make_slices(const Corpus& corpus, std::size_t T, SliceMode mode = SliceMode::equal_width) {
    if (T < 2) throw Error("make_slices: need at least 2 timesteps");
    const auto& docs = corpus.documents;
    std::vector<int> dates;
    for (const auto& d : docs) dates.push_back(d.date);
    std::vector<int> distinct = dates;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < T)
        throw Error("make_slices: corpus has " + std::to_string(distinct.size()) + " distinct dates, fewer than " +
                    std::to_string(T) + " timesteps; lower the number of timesteps");
    const long long lo = distinct.front(), hi = distinct.back();

    if (mode == SliceMode::equal_width) {
        const long long width = hi - lo + 1;
        std::vector<int> b(T + 1);
        for (std::size_t i = 0; i <= T; ++i)
            b[i] = static_cast<int>(lo + detail::ceil_div(static_cast<long long>(i) * width, static_cast<long long>(T)));
        std::vector<std::size_t> slice_of(docs.size());
        for (std::size_t i = 0; i < docs.size(); ++i)
            slice_of[i] = static_cast<std::size_t>((dates[i] - lo) * static_cast<long long>(T) / width);
        return detail::finish_slices(corpus, std::move(b), std::move(slice_of));
    }

    // Quantile: cut the date-sorted documents near i*N/T, snapping each cut to a date change.
    std::vector<int> sorted = dates;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t N = sorted.size();
    std::vector<int> b{static_cast<int>(lo)};
    for (std::size_t i = 1; i < T; ++i) {
        std::size_t cut = (i * N + T / 2) / T;
        cut = std::clamp<std::size_t>(cut, 1, N - 1);
        while (cut < N && sorted[cut] == sorted[cut - 1]) ++cut;
        int year = cut < N ? sorted[cut] : static_cast<int>(hi) + 1;
        if (year <= b.back()) year = b.back() + 1;
        b.push_back(year);
    }
    b.push_back(static_cast<int>(hi) + 1);
    for (std::size_t i = 1; i < b.size(); ++i)
        if (b[i] <= b[i - 1] || b[i] > hi + 1)
            throw Error("make_slices: quantile slicing produced an empty slice; lower the number of timesteps");
    std::vector<std::size_t> slice_of(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i)
        slice_of[i] = static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), dates[i]) - b.begin() - 1);
    return detail::finish_slices(corpus, std::move(b), std::move(slice_of));
}

}  // namespace chronotopic
