// SPDX-License-Identifier: Apache-2.0
#include <map>
#include <sstream>

#include "hlm/io.hpp"
#include "hlm/segment.hpp"
#include "testutil.hpp"

using namespace hlm;

TEST_CASE("clitic splitting") {
    REQUIRE(split_words("don't") == std::vector<std::string>{"do", "n't"});
    REQUIRE(split_words("Don't") == std::vector<std::string>{"Do", "n't"});
    REQUIRE(split_words("they're") == std::vector<std::string>{"they", "'re"});
    REQUIRE(split_words("it's") == std::vector<std::string>{"it", "'s"});
    REQUIRE(split_words("we'll") == std::vector<std::string>{"we", "'ll"});
    REQUIRE(split_words("I'd've") == std::vector<std::string>{"I'd", "'ve"});
    REQUIRE(split_words("o'clock") == std::vector<std::string>{"o'clock"});
}

TEST_CASE("empty input yields empty list") {
    REQUIRE(split_words("").empty());
    REQUIRE(split_words("   \t\n ").empty());
}

TEST_CASE("punctuation peels into single-character words") {
    REQUIRE(split_words("Hello, world!") == std::vector<std::string>{"Hello", ",", "world", "!"});
    REQUIRE(split_words("(don't!)") == std::vector<std::string>{"(", "do", "n't", "!", ")"});
    REQUIRE(split_words("...") == std::vector<std::string>{".", ".", "."});
    REQUIRE(split_words("dogs'") == std::vector<std::string>{"dogs", "'"});
}

TEST_CASE("split_words is idempotent") {
    std::vector<std::string> samples = {
        "don't",          "Hello, world!",   "they're can't won't I'm you've we'd",
        "(a) [b] {c}!",   "o'clock 'tis",    "x90's \"quoted\" trail...",
        "unicode \xE2\x98\x83 ok",  // snowman
    };
    for (const auto& s : samples) {
        for (const auto& w : split_words(s)) {
            INFO("word: " << w << " from: " << s);
            REQUIRE(split_words(w) == std::vector<std::string>{w});
        }
    }
}

TEST_CASE("segmentation preserves the multiset of non-space characters") {
    Rng rng(3);
    const std::string alphabet = "abcXYZ0',.!-? \t";
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        int64_t len = rng.uniform_int(0, 40);
        for (int64_t i = 0; i < len; ++i)
            text += alphabet[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(alphabet.size()) - 1))];
        std::map<char, int> before, after;
        for (char c : text)
            if (c != ' ' && c != '\t') ++before[c];
        for (const auto& w : split_words(text))
            for (char c : w) ++after[c];
        REQUIRE(before == after);
    }
}

TEST_CASE("source spans reconstruct the input") {
    std::string text = "She said: \"don't stop!\"";
    std::vector<uint32_t> cps = decode_utf8(text);
    auto spans = split_word_spans(cps);
    // spans are ordered, non-overlapping, and cover every non-space codepoint
    size_t covered = 0;
    size_t prev_end = 0;
    for (const auto& s : spans) {
        REQUIRE(s.begin >= prev_end);
        for (size_t i = prev_end; i < s.begin; ++i) REQUIRE(is_space_cp(cps[i]));
        covered += s.end - s.begin;
        prev_end = s.end;
    }
    size_t nonspace = 0;
    for (uint32_t cp : cps) nonspace += !is_space_cp(cp);
    REQUIRE(covered == nonspace);
}

TEST_CASE("build_vocab frequency order and codepoint tie-break") {
    {
        std::stringstream ss("aaab");
        CharVocab v = build_vocab(ss, 8);
        REQUIRE(v.num_chars() == 2);
        REQUIRE(v.encode('a') == tok::kNumSpecial);
        REQUIRE(v.encode('b') == tok::kNumSpecial + 1);
    }
    {
        std::stringstream ss("ab");
        CharVocab v = build_vocab(ss, 8);
        REQUIRE(v.encode('a') == tok::kNumSpecial);  // tie broken by codepoint
        REQUIRE(v.encode('b') == tok::kNumSpecial + 1);
    }
}

TEST_CASE("vocab smaller than capacity is not padded") {
    std::stringstream ss("ab");
    CharVocab v = build_vocab(ss, 100);
    REQUIRE(v.size() == tok::kNumSpecial + 2);
}

TEST_CASE("vocab capacity below 7 is rejected") {
    std::unordered_map<uint32_t, uint64_t> counts{{'a', 1}};
    REQUIRE_THROWS_AS(CharVocab::from_counts(counts, 6), UsageError);
}

TEST_CASE("encode_word maps unseen characters to UNK and round trips otherwise") {
    std::stringstream ss("abc abc");
    CharVocab v = build_vocab(ss, 16);
    auto ids = encode_word("a\xE2\x98\x83", v);  // 'a' + unseen snowman
    REQUIRE(ids.size() == 2);
    REQUIRE(ids[0] == v.encode('a'));
    REQUIRE(ids[1] == tok::kUnk);

    for (const std::string w : {"abc", "cab", "bbbb"}) {
        REQUIRE(decode_word(encode_word(w, v), v) == w);
    }
}

TEST_CASE("vocab file format and byte-identical rebuilds") {
    auto corpus = [] {
        std::string text;
        Rng rng(77);
        for (int i = 0; i < 500; ++i) {
            text += std::string(1, static_cast<char>('a' + rng.uniform_int(0, 25)));
            if (rng.bernoulli(0.2)) text += ' ';
        }
        return text;
    }();

    std::stringstream s1(corpus), s2(corpus);
    CharVocab v1 = build_vocab(s1, 20);
    CharVocab v2 = build_vocab(s2, 20);
    v1.save("/tmp/hlm_vocab_a.txt");
    v2.save("/tmp/hlm_vocab_b.txt");
    REQUIRE(read_file("/tmp/hlm_vocab_a.txt") == read_file("/tmp/hlm_vocab_b.txt"));

    auto lines = read_lines("/tmp/hlm_vocab_a.txt");
    REQUIRE(lines.size() >= 7);
    REQUIRE(lines[0] == "PAD");
    REQUIRE(lines[5] == "UNK");
    // line k after the header holds the decimal codepoint for id k+6
    CharVocab loaded = CharVocab::load("/tmp/hlm_vocab_a.txt");
    for (int id = tok::kNumSpecial; id < loaded.size(); ++id)
        REQUIRE(std::to_string(loaded.decode(id)) == lines[static_cast<size_t>(id - tok::kNumSpecial + 6)]);
    REQUIRE(loaded.size() == v1.size());
}

TEST_CASE("vocab loader rejects malformed files") {
    write_file("/tmp/hlm_vocab_bad.txt", "PAD\nCLS\nSEP\nMASK\nWRONG\nUNK\n97\n");
    REQUIRE_THROWS_AS(CharVocab::load("/tmp/hlm_vocab_bad.txt"), DataError);
    REQUIRE_THROWS_AS(CharVocab::load("/tmp/does_not_exist.vocab"), DataError);
}

TEST_CASE("a frequency-built vocab covers a heavy-tailed corpus") {
    // ~1 MB sample with a Zipf head of 1000 symbols (symbol k appears 80000/k
    // times) plus 400 singleton stragglers. 1400 distinct characters exceed
    // the 1018 slots of a 1024-capacity vocab, so the build must truncate,
    // and the frequency ordering must keep coverage at or above 99.9%.
    std::string corpus;
    std::vector<uint32_t> occurrences;
    int col = 0;
    auto emit = [&](uint32_t cp) {
        occurrences.push_back(cp);
        append_utf8(corpus, cp);
        if (++col % 12 == 0) corpus += ' ';
    };
    for (uint32_t k = 1; k <= 1000; ++k) {
        int64_t count = 80000 / static_cast<int64_t>(k);
        for (int64_t i = 0; i < count; ++i) emit(0x100 + k);
    }
    for (uint32_t r = 0; r < 400; ++r) emit(0x1000 + r);

    std::stringstream ss(corpus);
    CharVocab v = build_vocab(ss, 1024);
    REQUIRE(v.num_chars() == 1018);  // truncation actually happened
    int64_t covered = 0;
    for (uint32_t cp : occurrences) covered += v.contains(cp);
    double coverage = static_cast<double>(covered) / static_cast<double>(occurrences.size());
    REQUIRE(coverage >= 0.999);
}
