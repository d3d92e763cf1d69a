// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include "crmlab/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_set>
#include <vector>

namespace crmlab::text {

namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Removes [begin, end) and leaves a single space so neighbors don't fuse.
void blank_range(std::string& s, std::size_t begin, std::size_t end) {
    s.replace(begin, end - begin, " ");
}

// Deletes every region that starts with `open` and ends with `close`
// (inclusive). An unmatched opener swallows the rest of the string.
void strip_delimited(std::string& s, const std::string& open, const std::string& close) {
    std::size_t pos = 0;
    while ((pos = s.find(open, pos)) != std::string::npos) {
        const std::size_t tail = s.find(close, pos + open.size());
        if (tail == std::string::npos) {
            blank_range(s, pos, s.size());
            return;
        }
        blank_range(s, pos, tail + close.size());
        ++pos;
    }
}

void strip_tex_environments(std::string& s) {
    std::size_t pos = 0;
    while ((pos = s.find("\\begin{", pos)) != std::string::npos) {
        const std::size_t end_tag = s.find("\\end{", pos + 7);
        if (end_tag == std::string::npos) {
            blank_range(s, pos, s.size());
            return;
        }
        const std::size_t brace = s.find('}', end_tag + 5);
        if (brace == std::string::npos) {
            blank_range(s, pos, s.size());
            return;
        }
        blank_range(s, pos, brace + 1);
        ++pos;
    }
}

// Inline $...$ after $$...$$ is gone. A lone unpaired dollar is dropped by
// itself.
void strip_inline_math(std::string& s) {
    std::size_t pos = 0;
    while ((pos = s.find('$', pos)) != std::string::npos) {
        const std::size_t tail = s.find('$', pos + 1);
        if (tail == std::string::npos) {
            blank_range(s, pos, pos + 1);
            return;
        }
        blank_range(s, pos, tail + 1);
        ++pos;
    }
}

// UTF-8 curly quotes -> ASCII.
void unify_quotes(std::string& s) {
    static const std::vector<std::pair<std::string, std::string>> kMap = {
        {"\xe2\x80\x9c", "\""}, {"\xe2\x80\x9d", "\""}, {"\xe2\x80\x9e", "\""},
        {"\xe2\x80\x98", "'"},  {"\xe2\x80\x99", "'"},  {"\xe2\x80\x9a", "'"},
    };
    for (const auto& [from, to] : kMap) {
        std::size_t pos = 0;
        while ((pos = s.find(from, pos)) != std::string::npos) {
            s.replace(pos, from.size(), to);
            pos += to.size();
        }
    }
}

}  // namespace

std::string normalize_raw(const std::string& raw) {
    std::string s = raw;
    strip_delimited(s, "```", "```");
    strip_delimited(s, "$$", "$$");
    strip_delimited(s, "\\[", "\\]");
    strip_delimited(s, "\\(", "\\)");
    strip_tex_environments(s);
    strip_inline_math(s);
    unify_quotes(s);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return s;
}

std::vector<std::string> tokenize(const std::string& normalized) {
    std::vector<std::string> tokens;
    const std::size_t n = normalized.size();
    std::size_t i = 0;
    while (i < n) {
        const char c = normalized[i];
        if (is_word_char(c)) {
            std::size_t j = i + 1;
            while (j < n) {
                if (is_word_char(normalized[j])) {
                    ++j;
                } else if (normalized[j] == '\'' && j + 1 < n && is_word_char(normalized[j + 1])) {
                    j += 2;  // apostrophe inside a word ("let's")
                } else {
                    break;
                }
            }
            tokens.emplace_back(normalized.substr(i, j - i));
            i = j;
        } else if (std::ispunct(static_cast<unsigned char>(c)) != 0) {
            tokens.emplace_back(1, c);
            ++i;
        } else {
            ++i;  // whitespace and non-ASCII bytes separate tokens
        }
    }
    return tokens;
}

namespace {

double ngram_repetition(const std::vector<std::string>& tokens, std::size_t n) {
    if (tokens.size() < n) {
        return 0.0;
    }
    const std::size_t total = tokens.size() - n + 1;
    std::unordered_set<std::string> unique;
    unique.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) {
            key += tokens[i + k];
            key += '\x1f';
        }
        unique.insert(std::move(key));
    }
    return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(total);
}

}  // namespace

TokenStream normalize_text(const std::string& raw) {
    TokenStream stream;
    stream.tokens = tokenize(normalize_raw(raw));
    stream.flagged_empty = stream.tokens.empty();
    return stream;
}

double repeat_score(const std::vector<std::string>& tokens) {
    if (tokens.size() < 3) {
        return 0.0;
    }
    return std::max(ngram_repetition(tokens, 2), ngram_repetition(tokens, 3));
}

double repeat_score(const TokenStream& stream) {
    return repeat_score(stream.tokens);
}

const std::vector<std::string>& reflective_expressions() {
    static const std::vector<std::string> kExpressions = {
        "wait",        "recheck",  "retry",       "try again",    "alternatively",
        "however",     "rethink",  "let's check", "let's verify",
    };
    return kExpressions;
}

double self_reflection_score(const std::string& raw) {
    const std::string normalized = normalize_raw(raw);
    const std::vector<std::string> tokens = tokenize(normalized);
    if (tokens.empty()) {
        return 0.0;
    }
    std::size_t count = 0;
    for (const std::string& expr : reflective_expressions()) {
        std::size_t pos = 0;
        while ((pos = normalized.find(expr, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !is_word_char(normalized[pos - 1]);
            const std::size_t end = pos + expr.size();
            const bool right_ok = end >= normalized.size() || !is_word_char(normalized[end]);
            if (left_ok && right_ok) {
                ++count;
            }
            ++pos;  // overlapping occurrences count
        }
    }
    return static_cast<double>(count) / static_cast<double>(tokens.size()) * 1000.0;
}

}  // namespace crmlab::text
