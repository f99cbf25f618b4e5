// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hlm/rng.hpp"

namespace hlm {

// Desk-scale synthetic corpora: a 50-word template grammar for pre-training
// convergence checks and derived labeled tasks for exercising the fine-tune
// and ablation paths. Everything is deterministic under a seed.

namespace toydata {

inline const std::vector<std::string>& determiners() {
    static const std::vector<std::string> v = {"the", "a", "one", "some", "this"};
    return v;
}
inline const std::vector<std::string>& adjectives() {
    static const std::vector<std::string> v = {"red",  "big",  "odd",  "tiny", "calm",
                                               "dark", "warm", "cold", "loud", "soft"};
    return v;
}
inline const std::vector<std::string>& nouns() {
    static const std::vector<std::string> v = {"cat",  "dog",  "bird", "fish", "tree",
                                               "rock", "ship", "star", "book", "lamp"};
    return v;
}
inline const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v = {"sees",  "holds", "finds", "likes", "moves",
                                               "lifts", "drops", "meets", "calls", "keeps"};
    return v;
}
inline const std::vector<std::string>& adverbs() {
    static const std::vector<std::string> v = {"fast",  "slow",  "well",  "here",  "there",
                                               "now",   "often", "never", "again", "far"};
    return v;
}
inline const std::vector<std::string>& prepositions() {
    static const std::vector<std::string> v = {"near", "under", "over", "with", "by"};
    return v;
}

inline const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
    return v[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(v.size()) - 1))];
}

// Noun phrase: Det [Adj] Noun.
inline std::string noun_phrase(Rng& rng) {
    std::string s = pick(determiners(), rng);
    if (rng.bernoulli(0.5)) s += " " + pick(adjectives(), rng);
    s += " " + pick(nouns(), rng);
    return s;
}

// S -> NP V (NP | Adv | Prep NP)
inline std::string sentence(Rng& rng) {
    std::string s = noun_phrase(rng) + " " + pick(verbs(), rng);
    double u = rng.uniform();
    if (u < 0.4)
        s += " " + noun_phrase(rng);
    else if (u < 0.7)
        s += " " + pick(adverbs(), rng);
    else
        s += " " + pick(prepositions(), rng) + " " + noun_phrase(rng);
    return s;
}

}  // namespace toydata

inline std::vector<std::string> toy_grammar_corpus(int64_t sentences, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(sentences));
    for (int64_t i = 0; i < sentences; ++i) out.push_back(toydata::sentence(rng));
    return out;
}

struct LabeledExample {
    std::string text_a;
    std::string text_b;  // empty for single-sentence tasks
    int32_t label = 0;
};

// Sentence-pair entailment stand-in: the hypothesis repeats the premise's
// subject noun (label 1) or a different noun (label 0).
inline std::vector<LabeledExample> toy_entailment_dataset(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledExample> out;
    out.reserve(static_cast<size_t>(n));
    const auto& ns = toydata::nouns();
    for (int64_t i = 0; i < n; ++i) {
        const std::string& subject = toydata::pick(ns, rng);
        std::string premise = toydata::pick(toydata::determiners(), rng) + " " + subject + " " +
                              toydata::pick(toydata::verbs(), rng) + " " + toydata::pick(toydata::adverbs(), rng);
        bool positive = rng.bernoulli(0.5);
        std::string hyp_noun = subject;
        if (!positive) {
            do {
                hyp_noun = toydata::pick(ns, rng);
            } while (hyp_noun == subject);
        }
        std::string hypothesis = "the " + hyp_noun + " " + toydata::pick(toydata::adverbs(), rng);
        out.push_back({premise, hypothesis, positive ? 1 : 0});
    }
    return out;
}

// Linearly separable single-sentence task: the class is announced by the
// first word.
inline std::vector<LabeledExample> toy_classification_dataset(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledExample> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        bool positive = rng.bernoulli(0.5);
        std::string marker = positive ? "zordak" : "quimble";
        out.push_back({marker + " " + toydata::sentence(rng), "", positive ? 1 : 0});
    }
    return out;
}

inline std::string to_tsv(const LabeledExample& e) {
    if (e.text_b.empty()) return e.text_a + "\t" + std::to_string(e.label);
    return e.text_a + "\t" + e.text_b + "\t" + std::to_string(e.label);
}

}  // namespace hlm
