// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <string_view>

#include "hlm/checkpoint.hpp"
#include "hlm/model.hpp"

namespace hlm {

// ---------------------------------------------------------------------------
// Exact attention-cost accounting, hierarchical vs dense baseline
// ---------------------------------------------------------------------------

// Per-layer attention score entries (query, key pairs) for a synthetic batch
// of uniform M-character words totalling N characters:
//   intra  (N/M) * (M+1)^2      (+1 = the WORD_CLS slot; CLS/SEP blocks are
//                                tracked separately as pseudo overhead)
//   inter  (N/M + 2)^2          (+2 = the CLS/SEP pseudo-words)
//   dense  N^2
// Leading-order forms N*M, (N/M)^2 and N^2 are reported alongside.
struct CostReport {
    int64_t n = 0, m = 0;
    int64_t words = 0;  // n / m

    int64_t measured_intra = 0;   // per layer, real-word blocks
    int64_t measured_pseudo = 0;  // per layer, CLS/SEP intra blocks (excluded above)
    int64_t measured_inter = 0;   // per layer
    int64_t measured_dense = 0;   // per layer

    int64_t predicted_intra = 0, predicted_inter = 0, predicted_dense = 0;
    int64_t lead_intra = 0, lead_inter = 0, lead_dense = 0;
    double ratio_intra = 0, ratio_inter = 0, ratio_dense = 0;  // measured / leading order

    int64_t intra_layers = 0, inter_layers = 0, dense_layers = 0;
};

namespace detail {

inline PackedBatch uniform_word_batch(int64_t n, int64_t m, int64_t batch) {
    SegmentedSequence seq;
    for (int64_t w = 0; w < n / m; ++w)
        seq.words.push_back(std::vector<int32_t>(static_cast<size_t>(m),
                                                 tok::kNumSpecial + static_cast<int32_t>(w % 7)));
    std::vector<SegmentedSequence> seqs(static_cast<size_t>(batch), seq);
    return pack_batch(seqs, static_cast<int>(m), static_cast<int>(n / m) + 2);
}

inline int64_t per_layer_count(const AttnCounter& counter, AttnScope scope, int64_t expect_calls,
                               int64_t* pseudo_out, int64_t blocks, int64_t pseudo_a, int64_t pseudo_b) {
    int64_t per_layer = -1;
    int64_t pseudo_per_layer = 0;
    int64_t calls = 0;
    for (const auto& call : counter.calls) {
        if (call.scope != scope) continue;
        ++calls;
        if (static_cast<int64_t>(call.permitted_per_block.size()) != blocks)
            throw NumericError("attention counter: unexpected block count");
        int64_t real = 0, pseudo = 0;
        for (int64_t b = 0; b < blocks; ++b) {
            if (b == pseudo_a || b == pseudo_b)
                pseudo += call.permitted_per_block[static_cast<size_t>(b)];
            else
                real += call.permitted_per_block[static_cast<size_t>(b)];
        }
        if (per_layer < 0) {
            per_layer = real;
            pseudo_per_layer = pseudo;
        } else if (per_layer != real || pseudo_per_layer != pseudo) {
            throw NumericError("attention counter: layers disagree within one stack");
        }
    }
    if (calls != expect_calls) throw NumericError("attention counter: missing layer calls");
    if (pseudo_out) *pseudo_out = pseudo_per_layer;
    return per_layer < 0 ? 0 : per_layer;
}

}  // namespace detail

// Runs instrumented forwards over a single uniform-word sequence and reports
// measured vs closed-form attention pair counts. Sequence limits are widened
// locally so the synthetic batch is never truncated; counts do not depend on
// hidden sizes.
inline CostReport count_attention_flops(const ModelConfig& base_cfg, int64_t n, int64_t m,
                                        uint64_t seed = 1) {
    if (n < 1 || m < 1 || n % m != 0)
        throw UsageError("count_attention_flops: N must be a positive multiple of M");
    ModelConfig cfg = base_cfg;
    cfg.max_chars = std::max(cfg.max_chars, m);
    cfg.max_words = std::max(cfg.max_words, n / m + 2);
    cfg.dropout = 0.0;
    cfg.validate();

    CostReport report;
    report.n = n;
    report.m = m;
    report.words = n / m;
    report.intra_layers = cfg.intra_layers;
    report.inter_layers = cfg.inter_layers;
    report.dense_layers = cfg.intra_layers + cfg.inter_layers;

    Rng rng(seed);
    AttnCounter counter;
    NoGradGuard no_grad;
    {
        ModelParams<float> params = ModelParams<float>::init(cfg, rng);
        PackedBatch batch = detail::uniform_word_batch(n, m, 1);
        BatchMasks<float> masks = build_masks<float>(batch);
        attn_counter() = &counter;
        hlm_encode(batch, masks, params, cfg);
        attn_counter() = nullptr;
    }
    {
        DenseParams<float> dense = DenseParams<float>::init(cfg, rng);
        IntArray ids({1, n}, std::vector<int32_t>(static_cast<size_t>(n), tok::kNumSpecial));
        Tensor<float> mask3 = dense_mask<float>(std::vector<uint8_t>(static_cast<size_t>(n), 1), 1, n);
        attn_counter() = &counter;
        dense_char_encode(ids, mask3, dense, cfg);
        attn_counter() = nullptr;
    }

    int64_t words_with_pseudo = report.words + 2;
    report.measured_intra = detail::per_layer_count(counter, AttnScope::intra, cfg.intra_layers,
                                                    &report.measured_pseudo, words_with_pseudo, 0,
                                                    words_with_pseudo - 1);
    report.measured_inter =
        detail::per_layer_count(counter, AttnScope::inter, cfg.inter_layers, nullptr, 1, -1, -1);
    report.measured_dense = detail::per_layer_count(counter, AttnScope::dense, report.dense_layers,
                                                    nullptr, 1, -1, -1);

    report.predicted_intra = report.words * (m + 1) * (m + 1);
    report.predicted_inter = words_with_pseudo * words_with_pseudo;
    report.predicted_dense = n * n;
    report.lead_intra = n * m;
    report.lead_inter = report.words * report.words;
    report.lead_dense = n * n;
    report.ratio_intra = static_cast<double>(report.measured_intra) / static_cast<double>(report.lead_intra);
    report.ratio_inter = static_cast<double>(report.measured_inter) / static_cast<double>(report.lead_inter);
    report.ratio_dense = static_cast<double>(report.measured_dense) / static_cast<double>(report.lead_dense);
    return report;
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<int64_t>& xs, const std::vector<int64_t>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw UsageError("loglog_slope: need matching series");
    double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double lx = std::log(static_cast<double>(xs[i]));
        double ly = std::log(static_cast<double>(ys[i]));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Wall-clock throughput
// ---------------------------------------------------------------------------

struct Timing {
    double mean_sps = 0;  // samples / second
    double std_sps = 0;
    std::vector<double> reps;
};

// Forward-only timing: one warm-up pass, then `reps` timed passes of
// `run_pass` covering `samples` examples each.
template <typename F>
Timing measure_throughput(F&& run_pass, int64_t samples, int reps = 5) {
    if (samples <= 0) throw UsageError("measure_throughput: empty dataset");
    if (reps < 1) throw UsageError("measure_throughput: need at least one repetition");
    run_pass();
    Timing t;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        run_pass();
        std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        t.reps.push_back(static_cast<double>(samples) / dt.count());
    }
    for (double v : t.reps) t.mean_sps += v;
    t.mean_sps /= static_cast<double>(t.reps.size());
    if (t.reps.size() > 1) {
        double ss = 0;
        for (double v : t.reps) ss += (v - t.mean_sps) * (v - t.mean_sps);
        t.std_sps = std::sqrt(ss / static_cast<double>(t.reps.size() - 1));
    }
    return t;
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string short_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(8, '0');
    for (int i = 7; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

inline std::string build_id() { return short_hex(fnv1a(std::string(__DATE__) + __TIME__ + __VERSION__)); }

inline std::string config_fingerprint(const ModelConfig& cfg) {
    std::string text;
    for (const auto& [k, v] : config_meta(cfg)) text += k + "=" + v + ";";
    return short_hex(fnv1a(text));
}

struct ThroughputReport {
    int64_t n = 0, m = 0;
    int64_t batch = 0;
    int reps = 0;
    Timing hier, dense;
    std::string fingerprint, build;
};

// Hierarchical vs dense forward throughput on a synthetic uniform-word batch
// at equal total depth. Inference mode, single precision; kernels pin to one
// thread unless multithread is set (timings then carry that caveat).
inline ThroughputReport bench_throughput(const ModelConfig& base_cfg, int64_t n, int64_t m, int64_t batch,
                                         int reps = 5, uint64_t seed = 1, bool multithread = false) {
    if (n < 1 || m < 1 || n % m != 0)
        throw UsageError("bench_throughput: N must be a positive multiple of M");
    if (batch < 1) throw UsageError("bench_throughput: empty dataset");
    ModelConfig cfg = base_cfg;
    cfg.max_chars = std::max(cfg.max_chars, m);
    cfg.max_words = std::max(cfg.max_words, n / m + 2);
    cfg.dropout = 0.0;
    cfg.validate();

    int prev_threads = kernel_threads();
    if (!multithread) set_kernel_threads(1);

    ThroughputReport report;
    report.n = n;
    report.m = m;
    report.batch = batch;
    report.reps = reps;
    report.fingerprint = config_fingerprint(cfg);
    report.build = build_id();

    Rng rng(seed);
    NoGradGuard no_grad;
    {
        ModelParams<float> params = ModelParams<float>::init(cfg, rng);
        PackedBatch packed = detail::uniform_word_batch(n, m, batch);
        BatchMasks<float> masks = build_masks<float>(packed);
        report.hier = measure_throughput(
            [&] {
                EncodeResult<float> enc = hlm_encode(packed, masks, params, cfg);
                downstream_features(enc.r, enc.w, params, cfg);
            },
            batch, reps);
    }
    {
        DenseParams<float> dense = DenseParams<float>::init(cfg, rng);
        std::vector<int32_t> ids(static_cast<size_t>(batch * n));
        for (size_t i = 0; i < ids.size(); ++i)
            ids[i] = tok::kNumSpecial + static_cast<int32_t>(i % 7);
        IntArray id_arr({batch, n}, std::move(ids));
        // all sequences share one full-attention mask block
        Tensor<float> mask3 = dense_mask<float>(std::vector<uint8_t>(static_cast<size_t>(n), 1), 1, n);
        report.dense = measure_throughput(
            [&] { dense_char_encode(id_arr, mask3, dense, cfg); }, batch, reps);
    }

    set_kernel_threads(prev_threads);
    return report;
}

}  // namespace hlm
