// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hlm/ops.hpp"
#include "hlm/packing.hpp"

namespace hlm {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Aggregation { word_cls, mean_pool, max_pool };

inline const char* to_string(Aggregation a) {
    switch (a) {
        case Aggregation::word_cls: return "word_cls";
        case Aggregation::mean_pool: return "mean_pool";
        default: return "max_pool";
    }
}

inline Aggregation aggregation_from_string(const std::string& s) {
    if (s == "word_cls") return Aggregation::word_cls;
    if (s == "mean_pool") return Aggregation::mean_pool;
    if (s == "max_pool") return Aggregation::max_pool;
    throw UsageError("unknown aggregation mode: " + s);
}

struct ModelConfig {
    int64_t hidden = 768;
    int64_t heads = 12;
    int64_t intra_layers = 4;
    int64_t inter_layers = 12;
    int64_t head_layers = 1;
    int64_t intra_ff = 1536;
    int64_t inter_ff = 3072;
    int64_t vocab_size = 1024;
    int64_t max_chars = 20;
    int64_t max_words = 512;
    double dropout = 0.1;
    Aggregation aggregation = Aggregation::word_cls;
    int64_t rel_pos_clip_intra = 20;
    int64_t rel_pos_clip_inter = 64;
    bool word_residual = false;
    int64_t fusion_layers = 1;
    int64_t pad_multiple = 1;  // pack W/C up to this multiple (8 helps dense kernels)

    void validate() const {
        if (hidden < 1 || heads < 1 || hidden % heads != 0)
            throw UsageError("model: hidden must be a positive multiple of heads");
        if (intra_layers < 0 || inter_layers < 0 || head_layers < 0)
            throw UsageError("model: negative layer count");
        if (intra_ff < 1 || inter_ff < 1) throw UsageError("model: feed-forward dims must be positive");
        if (vocab_size < tok::kNumSpecial + 1) throw UsageError("model: vocab_size must be at least 7");
        if (max_chars < 1 || max_words < 3) throw UsageError("model: sequence limits too small");
        if (dropout < 0.0 || dropout >= 1.0) throw UsageError("model: dropout must be in [0, 1)");
        if (rel_pos_clip_intra < 0 || rel_pos_clip_inter < 0) throw UsageError("model: negative position clip");
        if (fusion_layers < 1) throw UsageError("model: fusion_layers must be >= 1");
        if (pad_multiple < 1) throw UsageError("model: pad_multiple must be >= 1");
    }

    // Paper-scale base model.
    static ModelConfig base() { return ModelConfig{}; }

    // Scaled-up preset; shipped for instantiation and shape tests only.
    static ModelConfig large() {
        ModelConfig c;
        c.hidden = 1024;
        c.heads = 16;
        c.inter_layers = 24;
        c.intra_ff = 2048;
        c.inter_ff = 4096;
        return c;
    }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct ForwardCtx {
    bool train = false;
    Rng* rng = nullptr;  // required when train and dropout > 0
};

template <typename S>
struct TransformerLayerParams {
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor<S> w1, b1, w2, b2;
};

template <typename S>
struct StackParams {
    std::vector<TransformerLayerParams<S>> layers;
    Tensor<S> rel_bias;  // [heads, 2*clip+1], shared by every layer in the stack
    Tensor<S> final_g, final_b;
};

namespace detail {

constexpr double kInitStd = 0.02;

template <typename S>
Tensor<S> weight(Shape shape, Rng& rng) {
    return Tensor<S>::randn(std::move(shape), rng, static_cast<S>(kInitStd), true);
}

template <typename S>
Tensor<S> bias(int64_t n) {
    return Tensor<S>::zeros({n}, true);
}

template <typename S>
Tensor<S> ones(int64_t n) {
    return Tensor<S>::full({n}, S(1), true);
}

template <typename S>
TransformerLayerParams<S> init_layer(int64_t hidden, int64_t ff, Rng& rng) {
    TransformerLayerParams<S> p;
    p.wq = weight<S>({hidden, hidden}, rng);
    p.bq = bias<S>(hidden);
    p.wk = weight<S>({hidden, hidden}, rng);
    p.bk = bias<S>(hidden);
    p.wv = weight<S>({hidden, hidden}, rng);
    p.bv = bias<S>(hidden);
    p.wo = weight<S>({hidden, hidden}, rng);
    p.bo = bias<S>(hidden);
    p.ln1_g = ones<S>(hidden);
    p.ln1_b = bias<S>(hidden);
    p.ln2_g = ones<S>(hidden);
    p.ln2_b = bias<S>(hidden);
    p.w1 = weight<S>({hidden, ff}, rng);
    p.b1 = bias<S>(ff);
    p.w2 = weight<S>({ff, hidden}, rng);
    p.b2 = bias<S>(hidden);
    return p;
}

template <typename S>
StackParams<S> init_stack(int64_t layers, int64_t hidden, int64_t ff, int64_t heads, int64_t clip, Rng& rng) {
    StackParams<S> s;
    s.layers.reserve(static_cast<size_t>(layers));
    for (int64_t i = 0; i < layers; ++i) s.layers.push_back(init_layer<S>(hidden, ff, rng));
    s.rel_bias = Tensor<S>::zeros({heads, 2 * clip + 1}, true);
    s.final_g = ones<S>(hidden);
    s.final_b = bias<S>(hidden);
    return s;
}

}  // namespace detail

// All weights of the three-part encoder plus the prediction and fusion heads.
template <typename S>
struct ModelParams {
    Tensor<S> char_embedding;  // [vocab, hidden]
    StackParams<S> intra, inter, head;
    Tensor<S> out_w, out_b;                              // hidden -> vocab projection
    std::vector<std::pair<Tensor<S>, Tensor<S>>> fuse;   // [2H->H], then [H->H]...

    static ModelParams init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        ModelParams p;
        p.char_embedding = detail::weight<S>({cfg.vocab_size, cfg.hidden}, rng);
        p.intra = detail::init_stack<S>(cfg.intra_layers, cfg.hidden, cfg.intra_ff, cfg.heads,
                                        cfg.rel_pos_clip_intra, rng);
        p.inter = detail::init_stack<S>(cfg.inter_layers, cfg.hidden, cfg.inter_ff, cfg.heads,
                                        cfg.rel_pos_clip_inter, rng);
        p.head = detail::init_stack<S>(cfg.head_layers, cfg.hidden, cfg.intra_ff, cfg.heads,
                                       cfg.rel_pos_clip_intra, rng);
        p.out_w = detail::weight<S>({cfg.hidden, cfg.vocab_size}, rng);
        p.out_b = detail::bias<S>(cfg.vocab_size);
        for (int64_t i = 0; i < cfg.fusion_layers; ++i) {
            int64_t in = i == 0 ? 2 * cfg.hidden : cfg.hidden;
            p.fuse.emplace_back(detail::weight<S>({in, cfg.hidden}, rng), detail::bias<S>(cfg.hidden));
        }
        return p;
    }
};

// Flat character-level baseline with dense self-attention (bench only).
template <typename S>
struct DenseParams {
    Tensor<S> char_embedding;
    StackParams<S> stack;

    static DenseParams init(const ModelConfig& cfg, Rng& rng) {
        DenseParams p;
        p.char_embedding = detail::weight<S>({cfg.vocab_size, cfg.hidden}, rng);
        p.stack = detail::init_stack<S>(cfg.intra_layers + cfg.inter_layers, cfg.hidden, cfg.inter_ff,
                                        cfg.heads, cfg.rel_pos_clip_inter, rng);
        return p;
    }
};

// Visits every parameter as (name, tensor, decay); decay marks weight matrices
// that take decoupled weight decay (layer norms, biases and the relative
// position tables do not).
template <typename S, typename F>
void for_each_param(StackParams<S>& s, const std::string& prefix, F&& f) {
    for (size_t i = 0; i < s.layers.size(); ++i) {
        auto& l = s.layers[i];
        std::string base = prefix + ".layer" + std::to_string(i) + ".";
        f(base + "wq", l.wq, true);
        f(base + "bq", l.bq, false);
        f(base + "wk", l.wk, true);
        f(base + "bk", l.bk, false);
        f(base + "wv", l.wv, true);
        f(base + "bv", l.bv, false);
        f(base + "wo", l.wo, true);
        f(base + "bo", l.bo, false);
        f(base + "ln1_g", l.ln1_g, false);
        f(base + "ln1_b", l.ln1_b, false);
        f(base + "ln2_g", l.ln2_g, false);
        f(base + "ln2_b", l.ln2_b, false);
        f(base + "ffn_w1", l.w1, true);
        f(base + "ffn_b1", l.b1, false);
        f(base + "ffn_w2", l.w2, true);
        f(base + "ffn_b2", l.b2, false);
    }
    f(prefix + ".rel_bias", s.rel_bias, false);
    f(prefix + ".final_g", s.final_g, false);
    f(prefix + ".final_b", s.final_b, false);
}

template <typename S, typename F>
void for_each_param(ModelParams<S>& p, F&& f) {
    f("char_embedding", p.char_embedding, true);
    for_each_param(p.intra, "intra", f);
    for_each_param(p.inter, "inter", f);
    for_each_param(p.head, "head", f);
    f("out_w", p.out_w, true);
    f("out_b", p.out_b, false);
    for (size_t i = 0; i < p.fuse.size(); ++i) {
        f("fuse." + std::to_string(i) + ".w", p.fuse[i].first, true);
        f("fuse." + std::to_string(i) + ".b", p.fuse[i].second, false);
    }
}

template <typename S, typename F>
void for_each_param(DenseParams<S>& p, F&& f) {
    f("char_embedding", p.char_embedding, true);
    for_each_param(p.stack, "dense", f);
}

template <typename S>
int64_t count_params(ModelParams<S>& p) {
    int64_t n = 0;
    for_each_param(p, [&](const std::string&, Tensor<S>& t, bool) { n += t.numel(); });
    return n;
}

// ---------------------------------------------------------------------------
// Attention instrumentation (used by the complexity benchmark)
// ---------------------------------------------------------------------------

enum class AttnScope { none, intra, inter, head, dense };

// One record per attention score matmul: how many (query, key) pairs the mask
// permitted in each block, head-independent. The value matmul shares the same
// pair structure by construction.
struct AttnCallRecord {
    AttnScope scope;
    std::vector<int64_t> permitted_per_block;  // one entry per mask block
    int64_t score_batch;                       // leading batch dim of the scores
    int64_t mask_blocks;                       // leading dim of the mask (1 if broadcast/absent)
};

struct AttnCounter {
    std::vector<AttnCallRecord> calls;
};

inline AttnCounter*& attn_counter() {
    thread_local AttnCounter* c = nullptr;
    return c;
}

inline AttnScope& attn_scope() {
    thread_local AttnScope s = AttnScope::none;
    return s;
}

struct AttnScopeGuard {
    AttnScope prev;
    explicit AttnScopeGuard(AttnScope s) : prev(attn_scope()) { attn_scope() = s; }
    ~AttnScopeGuard() { attn_scope() = prev; }
};

// ---------------------------------------------------------------------------
// Transformer building blocks (pre-norm, learned relative attention bias)
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
Tensor<S> maybe_dropout(const Tensor<S>& x, double p, const ForwardCtx& ctx) {
    if (!ctx.train || p <= 0.0) return x;
    if (!ctx.rng) throw UsageError("training forward pass requires an RNG handle for dropout");
    return dropout(x, p, *ctx.rng, true);
}

// Additive per-head bias on attention logits indexed by clipped signed
// distance: [1, heads, T, T] built from the stack's [heads, 2*clip+1] table.
template <typename S>
Tensor<S> rel_bias_matrix(const Tensor<S>& table, int64_t t, int64_t clip) {
    int64_t heads = table.dim(0);
    std::vector<int32_t> idx(static_cast<size_t>(t * t));
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = 0; j < t; ++j) {
            int64_t d = std::clamp<int64_t>(j - i, -clip, clip) + clip;
            idx[static_cast<size_t>(i * t + j)] = static_cast<int32_t>(d);
        }
    Tensor<S> by_dist = permute(table, {1, 0});                      // [2*clip+1, heads]
    Tensor<S> gathered = embedding(by_dist, IntArray({t, t}, idx));  // [T, T, heads]
    return reshape(permute(gathered, {2, 0, 1}), {1, heads, t, t});
}

template <typename S>
void record_attention(const Tensor<S>& mask3, int64_t score_batch, int64_t t) {
    AttnCounter* counter = attn_counter();
    if (!counter) return;
    AttnCallRecord rec;
    rec.scope = attn_scope();
    rec.score_batch = score_batch;
    if (mask3.defined()) {
        int64_t blocks = mask3.dim(0);
        rec.mask_blocks = blocks;
        rec.permitted_per_block.resize(static_cast<size_t>(blocks));
        const S* m = mask3.value().data();
        for (int64_t b = 0; b < blocks; ++b) {
            int64_t n = 0;
            const S* block = m + b * t * t;
            for (int64_t i = 0; i < t * t; ++i) n += block[i] == S(0);
            rec.permitted_per_block[static_cast<size_t>(b)] = n;
        }
    } else {
        rec.mask_blocks = 1;
        rec.permitted_per_block = {t * t};
    }
    counter->calls.push_back(std::move(rec));
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
    return add(matmul(x, w), b);
}

// Multi-head self-attention over x [N, T, H]; mask3 [N, T, T] additive or
// undefined; bias4 [1, heads, T, T] additive or undefined.
template <typename S>
Tensor<S> attention(const Tensor<S>& x, const Tensor<S>& mask3, const Tensor<S>& bias4,
                    const TransformerLayerParams<S>& p, int64_t heads, double drop_p,
                    const ForwardCtx& ctx) {
    int64_t n = x.dim(0), t = x.dim(1), h = x.dim(2);
    int64_t dh = h / heads;
    auto split_heads = [&](const Tensor<S>& v) {
        return permute(reshape(v, {n, t, heads, dh}), {0, 2, 1, 3});  // [N, heads, T, dh]
    };
    Tensor<S> q = split_heads(linear(x, p.wq, p.bq));
    Tensor<S> k = split_heads(linear(x, p.wk, p.bk));
    Tensor<S> v = split_heads(linear(x, p.wv, p.bv));

    Tensor<S> scores = scale(matmul_nt(q, k), static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh))));
    if (bias4.defined()) scores = add(scores, bias4);
    record_attention(mask3, n, t);
    // mask3 leading dim may be 1 (shared block) or n; softmax broadcasts both.
    Tensor<S> mask4 = mask3.defined() ? reshape(mask3, {mask3.dim(0), 1, t, t}) : Tensor<S>();
    Tensor<S> probs = maybe_dropout(softmax_masked(scores, mask4), drop_p, ctx);
    Tensor<S> context = reshape(permute(matmul(probs, v), {0, 2, 1, 3}), {n, t, h});
    return linear(context, p.wo, p.bo);
}

template <typename S>
Tensor<S> transformer_layer(const Tensor<S>& x, const Tensor<S>& mask3, const Tensor<S>& bias4,
                            const TransformerLayerParams<S>& p, int64_t heads, double drop_p,
                            const ForwardCtx& ctx) {
    Tensor<S> a = attention(layer_norm(x, p.ln1_g, p.ln1_b), mask3, bias4, p, heads, drop_p, ctx);
    Tensor<S> x1 = add(x, maybe_dropout(a, drop_p, ctx));
    Tensor<S> f = linear(gelu(linear(layer_norm(x1, p.ln2_g, p.ln2_b), p.w1, p.b1)), p.w2, p.b2);
    return add(x1, maybe_dropout(f, drop_p, ctx));
}

// Pre-norm stack with a final layer norm. A zero-layer stack is the identity
// (degenerate configs used by tests).
template <typename S>
Tensor<S> run_stack(Tensor<S> x, const Tensor<S>& mask3, const StackParams<S>& stack, int64_t heads,
                    int64_t clip, double drop_p, const ForwardCtx& ctx) {
    if (stack.layers.empty()) return x;
    Tensor<S> bias4 = rel_bias_matrix(stack.rel_bias, x.dim(1), clip);
    for (const auto& layer : stack.layers) x = transformer_layer(x, mask3, bias4, layer, heads, drop_p, ctx);
    return layer_norm(x, stack.final_g, stack.final_b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Encoder operations
// ---------------------------------------------------------------------------

// Shallow character-level encoder. Output position 0 of every word is the
// WORD_CLS slot; the block mask keeps words fully independent here.
template <typename S>
Tensor<S> intra_word_encode(const PackedBatch& batch, const BatchMasks<S>& masks,
                            const ModelParams<S>& params, const ModelConfig& cfg,
                            const ForwardCtx& ctx = {}) {
    if (batch.C > cfg.max_chars + 1)
        throw UsageError("intra_word_encode: batch has " + std::to_string(batch.C) +
                         " character slots, limit is " + std::to_string(cfg.max_chars + 1));
    AttnScopeGuard scope(AttnScope::intra);
    IntArray flat({batch.B * batch.W, batch.C}, batch.ids);
    Tensor<S> emb = embedding(params.char_embedding, flat);
    return detail::run_stack(emb, masks.intra, params.intra, cfg.heads, cfg.rel_pos_clip_intra,
                             cfg.dropout, ctx);
}

// Word-level representations r from contextualized character states h.
// word_cls reads the WORD_CLS slot; mean/max pool over real characters
// excluding WORD_CLS (the slot those modes replace).
template <typename S>
Tensor<S> aggregate(const Tensor<S>& h, const PackedBatch& batch, Aggregation mode) {
    int64_t hid = h.dim(2);
    if (h.dim(0) != batch.B * batch.W || h.dim(1) != batch.C)
        throw ShapeError("aggregate: h shape " + shape_str(h.shape()) + " does not match batch [" +
                         std::to_string(batch.B) + ", " + std::to_string(batch.W) + ", " +
                         std::to_string(batch.C) + "]");
    switch (mode) {
        case Aggregation::word_cls:
            return reshape(slice(h, 1, 0, 1), {batch.B, batch.W, hid});
        case Aggregation::mean_pool: {
            Tensor<S> weights = Tensor<S>::zeros({batch.B * batch.W, 1, batch.C});
            auto& wv = weights.value();
            for (int64_t bw = 0; bw < batch.B * batch.W; ++bw) {
                int64_t count = 0;
                for (int64_t c = 1; c < batch.C; ++c) count += batch.char_mask[static_cast<size_t>(bw * batch.C + c)];
                if (count == 0) {
                    if (batch.word_mask[static_cast<size_t>(bw)])
                        throw ShapeError("aggregate: real word with zero real characters at slot " +
                                         std::to_string(bw));
                    continue;
                }
                S inv = S(1) / static_cast<S>(count);
                for (int64_t c = 1; c < batch.C; ++c)
                    if (batch.char_mask[static_cast<size_t>(bw * batch.C + c)])
                        wv[static_cast<size_t>(bw * batch.C + c)] = inv;
            }
            return reshape(matmul(weights, h), {batch.B, batch.W, hid});
        }
        case Aggregation::max_pool: {
            std::vector<uint8_t> col_mask(batch.char_mask);
            for (int64_t bw = 0; bw < batch.B * batch.W; ++bw) col_mask[static_cast<size_t>(bw * batch.C)] = 0;
            return reshape(masked_max_rows(h, col_mask, batch.word_mask), {batch.B, batch.W, hid});
        }
    }
    throw UsageError("aggregate: bad mode");
}

// Deep word-level encoder attending across the whole sequence.
template <typename S>
Tensor<S> inter_word_encode(const Tensor<S>& r, const PackedBatch& batch, const BatchMasks<S>& masks,
                            const ModelParams<S>& params, const ModelConfig& cfg,
                            const ForwardCtx& ctx = {}) {
    if (batch.W > cfg.max_words)
        throw UsageError("inter_word_encode: batch has " + std::to_string(batch.W) + " word slots, limit is " +
                         std::to_string(cfg.max_words));
    AttnScopeGuard scope(AttnScope::inter);
    return detail::run_stack(Tensor<S>(r), masks.inter, params.inter, cfg.heads, cfg.rel_pos_clip_inter,
                             cfg.dropout, ctx);
}

// Intra-word prediction head: per word, the WORD_CLS slot is replaced by the
// contextualized word vector (plus the initial word embedding when
// word_residual is set), one more intra-masked layer runs, and hidden states
// project to character logits. Pre-training only.
template <typename S>
Tensor<S> mlm_head(const Tensor<S>& w, const Tensor<S>& h, const Tensor<S>& r, const PackedBatch& batch,
                   const BatchMasks<S>& masks, const ModelParams<S>& params, const ModelConfig& cfg,
                   const ForwardCtx& ctx = {}) {
    int64_t hid = h.dim(2);
    Tensor<S> word = cfg.word_residual ? add(w, r) : w;
    Tensor<S> word_rows = reshape(word, {batch.B * batch.W, 1, hid});
    Tensor<S> seq = concat<S>({word_rows, slice(h, 1, 1, batch.C - 1)}, 1);
    Tensor<S> x;
    {
        AttnScopeGuard scope(AttnScope::head);
        x = detail::run_stack(seq, masks.intra, params.head, cfg.heads, cfg.rel_pos_clip_intra,
                              cfg.dropout, ctx);
    }
    Tensor<S> logits = detail::linear(x, params.out_w, params.out_b);
    return reshape(logits, {batch.B, batch.W, batch.C, cfg.vocab_size});
}

// Downstream fusion of low-level (r) and high-level (w) word features.
template <typename S>
Tensor<S> downstream_features(const Tensor<S>& r, const Tensor<S>& w, const ModelParams<S>& params,
                              const ModelConfig& cfg, const ForwardCtx& ctx = {}) {
    Tensor<S> x = concat<S>({r, w}, 2);
    for (const auto& [fw, fb] : params.fuse)
        x = detail::maybe_dropout(gelu(detail::linear(x, fw, fb)), cfg.dropout, ctx);
    return x;
}

// Dense character baseline: full self-attention over the flat character
// sequence at the hierarchical model's total depth. Bench only.
template <typename S>
Tensor<S> dense_char_encode(const IntArray& ids, const Tensor<S>& mask3, const DenseParams<S>& params,
                            const ModelConfig& cfg, const ForwardCtx& ctx = {}) {
    if (ids.shape.size() != 2) throw ShapeError("dense_char_encode: ids must be [B, N]");
    AttnScopeGuard scope(AttnScope::dense);
    Tensor<S> emb = embedding(params.char_embedding, ids);
    return detail::run_stack(emb, mask3, params.stack, cfg.heads, cfg.rel_pos_clip_inter, cfg.dropout, ctx);
}

// Dense-baseline mask from a per-position validity vector [B, N]; pass B=1 to
// share one mask across a uniform batch.
template <typename S>
Tensor<S> dense_mask(const std::vector<uint8_t>& valid, int64_t b, int64_t n) {
    Tensor<S> mask = Tensor<S>::full({b, n, n}, static_cast<S>(kMaskFill));
    auto& mv = mask.value();
    for (int64_t bi = 0; bi < b; ++bi) {
        const uint8_t* row = valid.data() + bi * n;
        S* block = mv.data() + bi * n * n;
        for (int64_t i = 0; i < n; ++i) {
            if (!row[i]) continue;
            for (int64_t j = 0; j < n; ++j)
                if (row[j]) block[i * n + j] = S(0);
        }
    }
    return mask;
}

// Full hierarchical encode: intra, aggregate, inter.
template <typename S>
struct EncodeResult {
    Tensor<S> h;  // [B*W, C, hidden]
    Tensor<S> r;  // [B, W, hidden]
    Tensor<S> w;  // [B, W, hidden]
};

template <typename S>
EncodeResult<S> hlm_encode(const PackedBatch& batch, const BatchMasks<S>& masks,
                           const ModelParams<S>& params, const ModelConfig& cfg,
                           const ForwardCtx& ctx = {}) {
    EncodeResult<S> out;
    out.h = intra_word_encode(batch, masks, params, cfg, ctx);
    out.r = aggregate(out.h, batch, cfg.aggregation);
    out.w = inter_word_encode(out.r, batch, masks, params, cfg, ctx);
    return out;
}

}  // namespace hlm
