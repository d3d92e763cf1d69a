// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace crmlab::text {

// Lowercases, strips fenced code blocks and TeX math ($...$, $$...$$,
// \(...\), \[...\], \begin{...}...\end{...}), and maps curly quotes to
// their ASCII forms.
std::string normalize_raw(const std::string& raw);

// Tokens after normalize_raw: alphanumeric runs (apostrophes kept when
// flanked by alphanumerics, so "let's" is one token) plus single-character
// punctuation tokens. Everything else separates.
std::vector<std::string> tokenize(const std::string& normalized);

struct TokenStream {
    std::vector<std::string> tokens;
    bool flagged_empty = false;  // set when normalization removed everything
};

// normalize_raw followed by tokenize.
TokenStream normalize_text(const std::string& raw);

// max over n in {2, 3} of (1 - unique n-grams / total n-grams).
// Fewer than 3 tokens: 0.
double repeat_score(const std::vector<std::string>& tokens);
double repeat_score(const TokenStream& stream);

// Occurrences of reflective expressions per 1000 tokens. Matching is
// word-boundary aware and counts overlapping occurrences; the denominator
// is the token count of the normalized text. Empty text: 0.
double self_reflection_score(const std::string& raw);

const std::vector<std::string>& reflective_expressions();

}  // namespace crmlab::text
