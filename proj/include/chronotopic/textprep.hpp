#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "core.hpp"
#include "corpus.hpp"

namespace chronotopic {

namespace unicode {

// Decodes one UTF-8 sequence at s[i]; malformed bytes decode to U+FFFD.
inline char32_t decode(std::string_view s, std::size_t& i) {
    auto b0 = static_cast<unsigned char>(s[i++]);
    if (b0 < 0x80) return b0;
    int extra = b0 >= 0xF0 ? 3 : b0 >= 0xE0 ? 2 : b0 >= 0xC0 ? 1 : -1;
    if (extra < 0) return 0xFFFD;
    char32_t cp = b0 & (0x3F >> extra);
    for (int k = 0; k < extra; ++k) {
        if (i >= s.size() || (static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) return 0xFFFD;
        cp = (cp << 6) | (static_cast<unsigned char>(s[i++]) & 0x3F);
    }
    return cp;
}

inline void encode(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// Letters of the Latin, Greek and Cyrillic blocks; enough for classical texts.
inline bool is_letter(char32_t c) {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return true;
    if (c == 0xAA || c == 0xB5 || c == 0xBA) return true;
    if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;
    if (c >= 0x370 && c <= 0x3FF) return c != 0x375 && c != 0x37E && c != 0x384 && c != 0x385 && c != 0x387;
    if (c >= 0x400 && c <= 0x481) return true;
    if (c >= 0x48A && c <= 0x52F) return true;
    if (c >= 0x1E00 && c <= 0x1FFF) return true;  // Latin Extended Additional, Greek Extended
    return false;
}

inline char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    if ((c >= 0x100 && c <= 0x137) || (c >= 0x14A && c <= 0x177) || (c >= 0x182 && c <= 0x185) ||
        (c >= 0x1E00 && c <= 0x1E95) || (c >= 0x1EA0 && c <= 0x1EFF))
        return (c % 2 == 0) ? c + 1 : c;
    if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c % 2 == 1) ? c + 1 : c;
    if (c == 0x178) return 0xFF;
    if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

}  // namespace unicode

/// Lowercased maximal runs of letters. With `fold`, v->u and j->i after lowercasing.
inline std::vector<std::string> tokenize(std::string_view text, bool fold = true) {
    std::vector<std::string> tokens;
    std::string cur;
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t c = unicode::decode(text, i);
        if (!unicode::is_letter(c)) {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
            continue;
        }
        c = unicode::to_lower(c);
        if (fold) {
            if (c == 'v') c = 'u';
            if (c == 'j') c = 'i';
        }
        unicode::encode(c, cur);
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0, i = 0;
    while (i < s.size()) {
        unicode::decode(s, i);
        ++n;
    }
    return n;
}

struct LemmaTable {
    std::unordered_map<std::string, std::string> map;

    const std::string& lookup(const std::string& surface) const {
        auto it = map.find(surface);
        return it == map.end() ? surface : it->second;
    }
    std::size_t size() const { return map.size(); }
};

using StopwordSet = std::unordered_set<std::string>;

struct TokenStream {
    std::string doc_id;
    std::vector<std::string> tokens;

    bool operator==(const TokenStream&) const = default;
};

/// Two-column `surface<TAB>lemma` file. Blank lines and `#` comments are ignored.
inline LemmaTable load_lemma_table(const std::filesystem::path& path) {
    auto text = detail::read_file(path);
    LemmaTable table;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        auto where = path.string() + ":" + std::to_string(line_no);
        if (tab == std::string::npos) throw Error(where + ": expected surface<TAB>lemma");
        std::string surface = line.substr(0, tab), lemma = line.substr(tab + 1);
        if (surface.empty() || lemma.empty()) throw Error(where + ": empty surface or lemma");
        if (!table.map.emplace(surface, lemma).second) throw Error(where + ": duplicate surface form '" + surface + "'");
    }
    return table;
}

/// One stopword per line; blank lines and `#` comments are ignored.
inline StopwordSet load_stopwords(const std::filesystem::path& path) {
    auto text = detail::read_file(path);
    StopwordSet set;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto w = detail::trim(line);
        if (!w.empty() && w.back() == '\r') w.pop_back();
        if (w.empty() || w[0] == '#') continue;
        set.insert(w);
    }
    return set;
}

/// Lemma lookup (identity fallback), then stopword removal, then drops
/// tokens shorter than two characters.
inline TokenStream normalize(std::string doc_id, const std::vector<std::string>& stream, const LemmaTable& lemmas,
                             const StopwordSet& stopwords) {
    TokenStream out{std::move(doc_id), {}};
    for (const auto& tok : stream) {
        const auto& lemma = lemmas.lookup(tok);
        if (stopwords.count(lemma)) continue;
        if (utf8_length(lemma) < 2) continue;
        out.tokens.push_back(lemma);
    }
    return out;
}

struct PrepOptions {
    bool fold = true;
};

inline std::vector<TokenStream> preprocess(const Corpus& corpus, const LemmaTable& lemmas, const StopwordSet& stopwords,
                                           const PrepOptions& opts = {}, unsigned threads = 1) {
    std::vector<TokenStream> streams(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        const auto& doc = corpus.documents[i];
        streams[i] = normalize(doc.id, tokenize(doc.text, opts.fold), lemmas, stopwords);
    });
    return streams;
}

}  // namespace chronotopic
