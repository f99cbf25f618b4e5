// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include "hlm/vocab.hpp"

namespace hlm {

// Rule-based word splitting. Three rules, applied in order:
//   R1  split on runs of whitespace (whitespace dropped)
//   R2  peel leading/trailing punctuation or symbol characters off each chunk
//       as single-character words
//   R3  English clitic rule: a chunk ending in '<apostrophe>{t,s,re,ve,ll,d,m}'
//       splits before the n of a trailing "n't", otherwise at the apostrophe
// R2 leaves standalone clitic tokens ("'s", "'re", ...) intact so the split is
// idempotent. Characters are never inserted or deleted, only boundaries added.

struct WordSpan {
    size_t begin;  // codepoint offsets into the input
    size_t end;
};

namespace detail {

inline bool is_apostrophe(uint32_t cp) { return cp == '\'' || cp == 0x2019; }

// The recognized suffix set after an apostrophe: t, s, d, m, re, ve, ll.
inline bool is_clitic_suffix_range(const std::vector<uint32_t>& cps, size_t from, size_t end) {
    size_t n = end - from;
    if (n == 1) {
        uint32_t c = to_lower_ascii(cps[from]);
        return c == 't' || c == 's' || c == 'd' || c == 'm';
    }
    if (n == 2) {
        uint32_t a = to_lower_ascii(cps[from]), b = to_lower_ascii(cps[from + 1]);
        return (a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l');
    }
    return false;
}

// Emits word spans for one whitespace-delimited chunk [begin, end).
inline void split_chunk(const std::vector<uint32_t>& cps, size_t begin, size_t end,
                        std::vector<WordSpan>& out) {
    // R2 exception: keep standalone clitics whole ("'re" must resplit to itself).
    if (end - begin >= 2 && is_apostrophe(cps[begin]) && is_clitic_suffix_range(cps, begin + 1, end)) {
        out.push_back({begin, end});
        return;
    }
    // R2: peel leading punctuation.
    while (begin < end && is_punct_cp(cps[begin])) {
        if (end - begin >= 2 && is_apostrophe(cps[begin]) && is_clitic_suffix_range(cps, begin + 1, end)) break;
        out.push_back({begin, begin + 1});
        ++begin;
    }
    // R2: find trailing punctuation run (emitted after the core).
    size_t tail = end;
    while (tail > begin && is_punct_cp(cps[tail - 1])) {
        if (tail - begin >= 2 && is_apostrophe(cps[begin]) && is_clitic_suffix_range(cps, begin + 1, tail)) break;
        --tail;
    }
    // R3 on the core [begin, tail).
    if (tail > begin) {
        size_t apos = tail;
        for (size_t i = tail; i-- > begin;) {
            if (is_apostrophe(cps[i])) {
                apos = i;
                break;
            }
        }
        size_t split_at = tail;  // no split by default
        if (apos != tail && apos > begin && apos + 1 < tail && is_clitic_suffix_range(cps, apos + 1, tail)) {
            bool nt = tail - apos == 2 && to_lower_ascii(cps[apos + 1]) == 't' && apos >= 1 &&
                      to_lower_ascii(cps[apos - 1]) == 'n';
            split_at = nt ? apos - 1 : apos;
        }
        if (split_at > begin && split_at < tail) {
            out.push_back({begin, split_at});
            out.push_back({split_at, tail});
        } else {
            out.push_back({begin, tail});
        }
    }
    for (size_t i = tail; i < end; ++i) out.push_back({i, i + 1});
}

}  // namespace detail

// Word boundaries as codepoint spans; concatenating spans plus the skipped
// whitespace reconstructs the input exactly.
inline std::vector<WordSpan> split_word_spans(const std::vector<uint32_t>& cps) {
    std::vector<WordSpan> out;
    size_t i = 0;
    while (i < cps.size()) {
        while (i < cps.size() && is_space_cp(cps[i])) ++i;
        size_t begin = i;
        while (i < cps.size() && !is_space_cp(cps[i])) ++i;
        if (i > begin) detail::split_chunk(cps, begin, i, out);
    }
    return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<uint32_t> cps = decode_utf8(text);
    std::vector<std::string> out;
    for (const WordSpan& w : split_word_spans(cps)) {
        std::string s;
        for (size_t i = w.begin; i < w.end; ++i) append_utf8(s, cps[i]);
        out.push_back(std::move(s));
    }
    return out;
}

// A sentence as an ordered list of words, each a list of character ids;
// WORD_CLS is not yet inserted (that happens at packing time).
struct SegmentedSequence {
    std::vector<std::vector<int32_t>> words;
    std::vector<WordSpan> spans;  // codepoint offsets into the source text

    bool empty() const { return words.empty(); }
};

inline std::vector<int32_t> encode_word(std::string_view word, const CharVocab& vocab) {
    std::vector<int32_t> ids;
    std::vector<uint32_t> cps = decode_utf8(word);
    ids.reserve(cps.size());
    for (uint32_t cp : cps) ids.push_back(vocab.encode(cp));
    return ids;
}

inline std::string decode_word(const std::vector<int32_t>& ids, const CharVocab& vocab) {
    std::string out;
    for (int32_t id : ids) append_utf8(out, vocab.decode(id));
    return out;
}

inline SegmentedSequence segment(std::string_view text, const CharVocab& vocab) {
    std::vector<uint32_t> cps = decode_utf8(text);
    SegmentedSequence seq;
    for (const WordSpan& w : split_word_spans(cps)) {
        std::vector<int32_t> ids;
        ids.reserve(w.end - w.begin);
        for (size_t i = w.begin; i < w.end; ++i) ids.push_back(vocab.encode(cps[i]));
        seq.words.push_back(std::move(ids));
        seq.spans.push_back(w);
    }
    return seq;
}

// Counts characters that survive segmentation (all non-whitespace codepoints)
// and keeps the most frequent. Deterministic for a fixed corpus.
inline CharVocab build_vocab(std::istream& corpus, int capacity) {
    std::unordered_map<uint32_t, uint64_t> counts;
    std::string line;
    while (std::getline(corpus, line)) {
        std::vector<uint32_t> cps = decode_utf8(line);
        for (const WordSpan& w : split_word_spans(cps))
            for (size_t i = w.begin; i < w.end; ++i) ++counts[cps[i]];
    }
    return CharVocab::from_counts(counts, capacity);
}

}  // namespace hlm
