#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "beliefnet/likert.hpp"

namespace beliefnet {

class ParseError : public Error {
public:
    using Error::Error;
};

/// One claimed label occurrence in a response.
struct LabelMatch {
    std::size_t position = 0;
    std::size_t length = 0;
    LikertRating rating = LikertRating::from_value(1);
};

namespace detail {

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

}  // namespace detail

/// All non-overlapping label occurrences, case-insensitive and on word
/// boundaries. Longer phrases claim their span first. Sorted by position.
inline std::vector<LabelMatch> find_label_matches(std::string_view raw, Vocabulary vocab) {
    const auto text = detail::lowercase(raw);
    struct Phrase {
        std::string text;
        LikertRating rating;
    };
    std::vector<Phrase> phrases;
    for (int v : LikertRating::kValues) {
        phrases.push_back({detail::lowercase(LikertRating::label_for(v, vocab)), LikertRating::from_value(v)});
    }
    std::stable_sort(phrases.begin(), phrases.end(),
                     [](const Phrase& a, const Phrase& b) { return a.text.size() > b.text.size(); });

    std::vector<bool> claimed(text.size(), false);
    std::vector<LabelMatch> matches;
    for (const auto& p : phrases) {
        for (auto pos = text.find(p.text); pos != std::string::npos; pos = text.find(p.text, pos + 1)) {
            const auto end = pos + p.text.size();
            if (pos > 0 && detail::is_word_char(text[pos - 1])) continue;
            if (end < text.size() && detail::is_word_char(text[end])) continue;
            if (std::any_of(claimed.begin() + static_cast<std::ptrdiff_t>(pos),
                            claimed.begin() + static_cast<std::ptrdiff_t>(end), [](bool b) { return b; }))
                continue;
            std::fill(claimed.begin() + static_cast<std::ptrdiff_t>(pos),
                      claimed.begin() + static_cast<std::ptrdiff_t>(end), true);
            matches.push_back({pos, p.text.size(), p.rating});
        }
    }
    std::sort(matches.begin(), matches.end(),
              [](const LabelMatch& a, const LabelMatch& b) { return a.position < b.position; });
    return matches;
}

/// The label occurring latest in the text wins, since models often restate
/// the options before answering.
inline LikertRating parse_likert(std::string_view raw, Vocabulary vocab = Vocabulary::InContext) {
    const auto matches = find_label_matches(raw, vocab);
    if (matches.empty()) throw ParseError("no Likert label found in response");
    const auto& last = matches.back();
    for (const auto& m : matches) {
        if (m.position == last.position && m.rating != last.rating) {
            throw ParseError("ambiguous Likert labels at the same position");
        }
    }
    return last.rating;
}

}  // namespace beliefnet
