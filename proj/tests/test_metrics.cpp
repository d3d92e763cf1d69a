// Copyright (c) 2026 crmlab authors
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <string>
#include <vector>

#include "crmlab/metrics.hpp"
#include "doctest.h"

using namespace crmlab::text;

TEST_SUITE("text metrics") {

TEST_CASE("repeat score of a b a b a b is 0.6") {
    // 2-grams: 5 total, 2 distinct -> 0.6; 3-grams: 4 total, 2 distinct -> 0.5.
    CHECK(repeat_score({"a", "b", "a", "b", "a", "b"}) ==
          doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("all-distinct tokens score 0") {
    CHECK(repeat_score({"a", "b", "c", "d"}) == doctest::Approx(0.0));
}

TEST_CASE("ten copies of one token score 8/9") {
    const std::vector<std::string> tokens(10, "again");
    CHECK(repeat_score(tokens) == doctest::Approx(0.8888888888888888).epsilon(1e-12));
}

TEST_CASE("fewer than three tokens score 0") {
    CHECK(repeat_score(std::vector<std::string>{}) == doctest::Approx(0.0));
    CHECK(repeat_score({"solo"}) == doctest::Approx(0.0));
    CHECK(repeat_score({"two", "two"}) == doctest::Approx(0.0));
}

TEST_CASE("duplicating a text never decreases its repeat score") {
    const std::vector<std::string> base = {"check", "the", "sign", "of", "x"};
    std::vector<std::string> doubled = base;
    doubled.insert(doubled.end(), base.begin(), base.end());
    CHECK(repeat_score(doubled) >= repeat_score(base));

    std::vector<std::string> tripled = doubled;
    tripled.insert(tripled.end(), base.begin(), base.end());
    CHECK(repeat_score(tripled) >= repeat_score(doubled));
}

TEST_CASE("normalization lowercases and keeps in-word apostrophes") {
    const TokenStream s = normalize_text("Let's CHECK");
    REQUIRE(s.tokens.size() == 2);
    CHECK(s.tokens[0] == "let's");
    CHECK(s.tokens[1] == "check");
    CHECK_FALSE(s.flagged_empty);
}

TEST_CASE("punctuation becomes single-character tokens") {
    const TokenStream s = normalize_text("however, however.");
    REQUIRE(s.tokens.size() == 4);
    CHECK(s.tokens[0] == "however");
    CHECK(s.tokens[1] == ",");
    CHECK(s.tokens[2] == "however");
    CHECK(s.tokens[3] == ".");
}

TEST_CASE("code fences and TeX math are stripped") {
    CHECK(normalize_text("```\nx = y\n```").flagged_empty);
    const TokenStream s = normalize_text("so $x^2 + 1$ holds");
    REQUIRE(s.tokens.size() == 2);
    CHECK(s.tokens[0] == "so");
    CHECK(s.tokens[1] == "holds");
    const TokenStream disp = normalize_text("\\[ a = b \\] done \\(c\\) too");
    REQUIRE(disp.tokens.size() == 2);
    CHECK(disp.tokens[0] == "done");
    CHECK(disp.tokens[1] == "too");
    const TokenStream env =
        normalize_text("\\begin{align} x &= 1 \\end{align} after");
    REQUIRE(env.tokens.size() == 1);
    CHECK(env.tokens[0] == "after");
}

TEST_CASE("curly quotes are unified before tokenizing") {
    // U+2019 folds into the word; U+201C/U+201D become ASCII '"' tokens.
    const TokenStream s = normalize_text("let’s “check”");
    REQUIRE(s.tokens.size() == 4);
    CHECK(s.tokens[0] == "let's");
    CHECK(s.tokens[1] == "\"");
    CHECK(s.tokens[2] == "check");
    CHECK(s.tokens[3] == "\"");
    // Straight-quote input tokenizes identically.
    CHECK(normalize_text("let's \"check\"").tokens == s.tokens);
}

TEST_CASE("repeat score ignores case and separator choice") {
    const double plain = repeat_score(normalize_text("go go go go"));
    const double shouty = repeat_score(normalize_text("GO go GO go"));
    CHECK(plain == doctest::Approx(shouty).epsilon(1e-15));
}

TEST_CASE("reflection score: 'however, however.' is 500 per 1000 tokens") {
    CHECK(self_reflection_score("however, however.") ==
          doctest::Approx(500.0).epsilon(1e-12));
}

TEST_CASE("reflection score: 2 expressions in 500 tokens is 4.0") {
    std::string text = "wait ;";  // tokens: [wait][;]
    // Pad with distinct filler and a second expression for exactly 500 tokens.
    for (int i = 0; i < 497; ++i) {
        text += " t" + std::to_string(i);
    }
    text += " recheck";
    const TokenStream s = normalize_text(text);
    REQUIRE(s.tokens.size() == 500);
    CHECK(self_reflection_score(text) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("multi-word expressions and boundaries") {
    // "try again" is one expression; "retry" must not fire inside "retrying".
    CHECK(self_reflection_score("try again now") ==
          doctest::Approx(1000.0 / 3.0).epsilon(1e-9));
    CHECK(self_reflection_score("retrying forever here") == doctest::Approx(0.0));
    // "let's verify" matches through the apostrophe.
    CHECK(self_reflection_score("ok let's verify this") > 0.0);
}

TEST_CASE("empty or fully stripped text scores 0") {
    CHECK(self_reflection_score("") == doctest::Approx(0.0));
    CHECK(self_reflection_score("$x + y$") == doctest::Approx(0.0));
}

TEST_CASE("expression list is nonempty and normalized") {
    const auto& exprs = reflective_expressions();
    CHECK(exprs.size() >= 5);
    for (const auto& e : exprs) {
        CHECK_FALSE(e.empty());
        for (char c : e) {
            CHECK_FALSE(static_cast<bool>(std::isupper(static_cast<unsigned char>(c))));
        }
    }
}

}  // TEST_SUITE
