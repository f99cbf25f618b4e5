// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "hlm/common.hpp"
#include "hlm/rng.hpp"
#include "hlm/utf8.hpp"

namespace hlm {

// Synthetic corruption generators. All of them operate on codepoints ("10% of
// characters" counts spaces and punctuation), select exactly
// round(rate * length) positions without replacement, and are pure functions
// of (text, rng state).

struct PerturbSpec {
    enum class Kind { drop, repeat, case_flip, mixed };
    enum class ApplyTo { finetune_and_eval, eval_only };

    Kind kind = Kind::drop;
    double rate = 0.10;
    uint64_t seed = 0;
    ApplyTo apply_to = ApplyTo::finetune_and_eval;

    void validate() const {
        if (rate < 0.0 || rate > 1.0) throw UsageError("perturb: rate must be in [0, 1]");
    }
};

inline const char* to_string(PerturbSpec::Kind k) {
    switch (k) {
        case PerturbSpec::Kind::drop: return "drop";
        case PerturbSpec::Kind::repeat: return "repeat";
        case PerturbSpec::Kind::case_flip: return "case";
        default: return "mixed";
    }
}

inline PerturbSpec::Kind perturb_kind_from_string(const std::string& s) {
    if (s == "drop") return PerturbSpec::Kind::drop;
    if (s == "repeat") return PerturbSpec::Kind::repeat;
    if (s == "case") return PerturbSpec::Kind::case_flip;
    if (s == "mixed") return PerturbSpec::Kind::mixed;
    throw UsageError("unknown perturbation kind: " + s);
}

namespace detail {

inline int64_t round_count(double rate, size_t len) {
    return std::llround(rate * static_cast<double>(len));
}

// Exactly n distinct positions in [0, len), via partial Fisher-Yates.
inline std::vector<uint8_t> pick_positions(size_t len, int64_t n, Rng& rng) {
    std::vector<uint8_t> chosen(len, 0);
    if (n <= 0) return chosen;
    std::vector<uint32_t> idx(len);
    for (size_t i = 0; i < len; ++i) idx[i] = static_cast<uint32_t>(i);
    for (int64_t i = 0; i < n; ++i) {
        int64_t j = rng.uniform_int(i, static_cast<int64_t>(len) - 1);
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        chosen[idx[static_cast<size_t>(i)]] = 1;
    }
    return chosen;
}

}  // namespace detail

// Deletes exactly round(rate * len) characters at uniform positions.
inline std::string random_drop(std::string_view text, double rate, Rng& rng) {
    std::vector<uint32_t> cps = decode_utf8(text);
    auto chosen = detail::pick_positions(cps.size(), detail::round_count(rate, cps.size()), rng);
    std::string out;
    out.reserve(text.size());
    for (size_t i = 0; i < cps.size(); ++i)
        if (!chosen[i]) append_utf8(out, cps[i]);
    return out;
}

namespace detail {

// Shared body for random_repeat; RepFn returns the repetition count for a
// selected character (tests pin it, production draws uniform {1,2,3}).
template <typename RepFn>
std::string repeat_with(std::string_view text, double rate, Rng& rng, RepFn&& reps) {
    std::vector<uint32_t> cps = decode_utf8(text);
    auto chosen = pick_positions(cps.size(), round_count(rate, cps.size()), rng);
    std::string out;
    out.reserve(text.size() * 2);
    for (size_t i = 0; i < cps.size(); ++i) {
        append_utf8(out, cps[i]);
        if (chosen[i]) {
            int64_t k = reps();
            for (int64_t r = 0; r < k; ++r) append_utf8(out, cps[i]);
        }
    }
    return out;
}

}  // namespace detail

// Appends 1-3 repetitions (uniform) after each of round(rate * len) selected
// characters.
inline std::string random_repeat(std::string_view text, double rate, Rng& rng) {
    return detail::repeat_with(text, rate, rng, [&rng] { return rng.uniform_int(1, 3); });
}

// Independently sets every ASCII-cased character to upper or lower with
// p = 0.5; uncased characters pass through and consume no randomness.
inline std::string random_case(std::string_view text, Rng& rng) {
    std::vector<uint32_t> cps = decode_utf8(text);
    std::string out;
    out.reserve(text.size());
    for (uint32_t cp : cps) {
        if (is_ascii_letter(cp)) cp = rng.bernoulli(0.5) ? to_upper_ascii(cp) : to_lower_ascii(cp);
        append_utf8(out, cp);
    }
    return out;
}

// Variable-rate sweep corruption: each selected character is dropped or
// repeated (1-3 copies) with equal probability.
inline std::string mixed_drop_repeat(std::string_view text, double rate, Rng& rng) {
    std::vector<uint32_t> cps = decode_utf8(text);
    auto chosen = detail::pick_positions(cps.size(), detail::round_count(rate, cps.size()), rng);
    std::string out;
    out.reserve(text.size() * 2);
    for (size_t i = 0; i < cps.size(); ++i) {
        if (!chosen[i]) {
            append_utf8(out, cps[i]);
            continue;
        }
        if (rng.bernoulli(0.5)) continue;  // drop
        int64_t k = rng.uniform_int(1, 3);
        for (int64_t r = 0; r <= k; ++r) append_utf8(out, cps[i]);
    }
    return out;
}

inline std::string perturb_text(std::string_view text, const PerturbSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case PerturbSpec::Kind::drop: return random_drop(text, spec.rate, rng);
        case PerturbSpec::Kind::repeat: return random_repeat(text, spec.rate, rng);
        case PerturbSpec::Kind::case_flip: return random_case(text, rng);
        default: return mixed_drop_repeat(text, spec.rate, rng);
    }
}

// Applies the spec to each line under a per-line derived seed
// (derive(seed, line_index)), so the result is independent of traversal order
// and safe to parallelize.
inline std::vector<std::string> perturb_lines(const std::vector<std::string>& lines, const PerturbSpec& spec) {
    spec.validate();
    std::vector<std::string> out(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        Rng rng(Rng::derive(spec.seed, i));
        out[i] = perturb_text(lines[i], spec, rng);
    }
    return out;
}

// Per-field variant for tab-separated datasets (e.g. perturb the question but
// not the context). Fields outside `fields` pass through untouched; an empty
// fields list means every field.
inline std::vector<std::string> perturb_tsv_lines(const std::vector<std::string>& lines,
                                                  const PerturbSpec& spec, const std::vector<int>& fields) {
    spec.validate();
    std::vector<std::string> out(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        Rng rng(Rng::derive(spec.seed, i));
        std::vector<std::string> cols;
        size_t start = 0;
        const std::string& line = lines[i];
        for (;;) {
            size_t t = line.find('\t', start);
            cols.push_back(line.substr(start, t == std::string::npos ? std::string::npos : t - start));
            if (t == std::string::npos) break;
            start = t + 1;
        }
        for (size_t c = 0; c < cols.size(); ++c) {
            bool apply = fields.empty();
            for (int fi : fields) apply = apply || fi == static_cast<int>(c);
            if (apply) cols[c] = perturb_text(cols[c], spec, rng);
        }
        std::string joined;
        for (size_t c = 0; c < cols.size(); ++c) {
            if (c) joined += '\t';
            joined += cols[c];
        }
        out[i] = std::move(joined);
    }
    return out;
}

struct SweepOutput {
    double rate;
    std::vector<std::string> lines;
};

// Variable-rate sweep: one mixed-corruption copy of the dataset per rate.
inline std::vector<SweepOutput> sweep(const std::vector<std::string>& lines,
                                      const std::vector<double>& rates = {0.05, 0.10, 0.15, 0.20},
                                      uint64_t seed = 0) {
    std::vector<SweepOutput> out;
    out.reserve(rates.size());
    for (double rate : rates) {
        PerturbSpec spec;
        spec.kind = PerturbSpec::Kind::mixed;
        spec.rate = rate;
        // rate folded into the derived seed keeps the per-rate streams independent
        spec.seed = Rng::derive(seed, static_cast<uint64_t>(std::llround(rate * 1e6)));
        out.push_back({rate, perturb_lines(lines, spec)});
    }
    return out;
}

// Manifest describing one perturbed artifact; written next to the output.
inline void write_perturb_manifest(const std::string& path, const PerturbSpec& spec,
                                   const std::string& input, const std::string& output,
                                   const std::vector<int>& fields = {}) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write manifest: " + path);
    f << "kind=" << to_string(spec.kind) << "\n";
    f << "rate=" << spec.rate << "\n";
    f << "seed=" << spec.seed << "\n";
    f << "apply_to=" << (spec.apply_to == PerturbSpec::ApplyTo::eval_only ? "eval_only" : "finetune_and_eval")
      << "\n";
    f << "input=" << input << "\n";
    f << "output=" << output << "\n";
    if (!fields.empty()) {
        f << "fields=";
        for (size_t i = 0; i < fields.size(); ++i) f << (i ? "," : "") << fields[i];
        f << "\n";
    }
}

}  // namespace hlm
