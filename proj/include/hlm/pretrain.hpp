// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "hlm/adamw.hpp"
#include "hlm/model.hpp"

namespace hlm {

// ---------------------------------------------------------------------------
// Whole-word masked character modeling
// ---------------------------------------------------------------------------

enum class MaskAction : uint8_t { mask_all, randomize, keep };

// Per-word corruption decisions. Labels hold the original ids at real
// character positions (never WORD_CLS) of selected words and the ignore index
// everywhere else, so keep/randomize words still contribute loss terms.
struct MaskingPlan {
    int64_t B = 0, W = 0, C = 0;
    std::vector<uint8_t> selected;    // B*W
    std::vector<MaskAction> actions;  // B*W, meaningful where selected
    IntArray labels;                  // [B, W, C]
    int64_t label_count = 0;
    int64_t selected_words = 0;
    int64_t candidate_words = 0;  // real words excluding CLS/SEP pseudo-words

    bool is_selected(int64_t b, int64_t w) const { return selected[static_cast<size_t>(b * W + w)]; }
    MaskAction action(int64_t b, int64_t w) const { return actions[static_cast<size_t>(b * W + w)]; }
};

struct TrainConfig {
    double lr = 5e-5;
    int64_t warmup_steps = 10000;
    double weight_decay = 0.01;
    int64_t batch_size = 16;
    int64_t total_steps = 0;
    uint64_t seed = 0;
    double mask_ratio = 0.15;
    double prob_mask = 0.8;
    double prob_random = 0.1;
    double prob_keep = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int64_t checkpoint_every = 0;  // 0 = final checkpoint only

    void validate() const {
        if (lr <= 0.0) throw UsageError("train: lr must be positive");
        if (total_steps < 1) throw UsageError("train: total_steps must be >= 1");
        if (warmup_steps < 0 || warmup_steps > total_steps)
            throw UsageError("train: warmup_steps must lie in [0, total_steps]");
        if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
        if (mask_ratio < 0.0 || mask_ratio > 1.0) throw UsageError("train: mask_ratio must be in [0, 1]");
        double s = prob_mask + prob_random + prob_keep;
        if (std::abs(s - 1.0) > 1e-9)
            throw UsageError("train: action probabilities must sum to 1, got " + std::to_string(s));
        if (prob_mask < 0 || prob_random < 0 || prob_keep < 0)
            throw UsageError("train: action probabilities must be non-negative");
        if (checkpoint_every < 0) throw UsageError("train: checkpoint_every must be >= 0");
    }
};

// Selects each real non-pseudo word independently with p = mask_ratio and
// assigns it a whole-word action (mask_all / randomize / keep). CLS and SEP
// pseudo-words are never candidates.
inline MaskingPlan make_masking_plan(const PackedBatch& batch, Rng& rng, const TrainConfig& cfg) {
    MaskingPlan plan;
    plan.B = batch.B;
    plan.W = batch.W;
    plan.C = batch.C;
    plan.selected.assign(static_cast<size_t>(batch.B * batch.W), 0);
    plan.actions.assign(static_cast<size_t>(batch.B * batch.W), MaskAction::keep);
    plan.labels = IntArray({batch.B, batch.W, batch.C},
                           std::vector<int32_t>(static_cast<size_t>(batch.B * batch.W * batch.C), kIgnoreIndex));
    for (int64_t b = 0; b < batch.B; ++b) {
        for (int64_t w = 0; w < batch.W; ++w) {
            if (!batch.wmask(b, w) || batch.is_pseudo_word(b, w)) continue;
            ++plan.candidate_words;
            if (!rng.bernoulli(cfg.mask_ratio)) continue;
            plan.selected[static_cast<size_t>(b * batch.W + w)] = 1;
            ++plan.selected_words;
            double u = rng.uniform();
            MaskAction act = u < cfg.prob_mask                    ? MaskAction::mask_all
                             : u < cfg.prob_mask + cfg.prob_random ? MaskAction::randomize
                                                                   : MaskAction::keep;
            plan.actions[static_cast<size_t>(b * batch.W + w)] = act;
            for (int64_t c = 1; c < batch.C; ++c) {
                if (!batch.cmask(b, w, c)) continue;
                plan.labels.data[static_cast<size_t>((b * batch.W + w) * batch.C + c)] = batch.id(b, w, c);
                ++plan.label_count;
            }
        }
    }
    return plan;
}

// Applies the plan: mask_all replaces every character of the word with MASK,
// randomize draws uniform non-special vocabulary ids, keep leaves it alone.
// WORD_CLS, CLS, SEP and PAD positions are untouched in all cases.
inline PackedBatch apply_masking(const PackedBatch& batch, const MaskingPlan& plan, const CharVocab& vocab,
                                 Rng& rng) {
    if (plan.B != batch.B || plan.W != batch.W || plan.C != batch.C)
        throw ShapeError("apply_masking: plan built for a different batch");
    PackedBatch out = batch;
    for (int64_t b = 0; b < batch.B; ++b) {
        for (int64_t w = 0; w < batch.W; ++w) {
            if (!plan.is_selected(b, w)) continue;
            MaskAction act = plan.action(b, w);
            if (act == MaskAction::keep) continue;
            if (act == MaskAction::randomize && vocab.num_chars() == 0)
                throw DataError("apply_masking: vocabulary has no character entries to draw from");
            for (int64_t c = 1; c < batch.C; ++c) {
                if (!batch.cmask(b, w, c)) continue;
                out.id(b, w, c) =
                    act == MaskAction::mask_all
                        ? tok::kMask
                        : static_cast<int32_t>(tok::kNumSpecial + rng.uniform_int(0, vocab.num_chars() - 1));
            }
        }
    }
    return out;
}

// Mean cross entropy over label positions only. A batch with no labels
// contributes zero loss (callers track a warning counter).
template <typename S>
Tensor<S> mlm_loss(const Tensor<S>& logits, const MaskingPlan& plan) {
    return cross_entropy(logits, plan.labels);
}

// Fraction of label positions where the argmax prediction restores the
// original character.
template <typename S>
double masked_accuracy(const Tensor<S>& logits, const MaskingPlan& plan) {
    if (plan.label_count == 0) return 0.0;
    IntArray pred = argmax_last(logits);
    int64_t hit = 0;
    for (size_t i = 0; i < plan.labels.data.size(); ++i) {
        if (plan.labels.data[i] == kIgnoreIndex) continue;
        hit += pred.data[i] == plan.labels.data[i];
    }
    return static_cast<double>(hit) / static_cast<double>(plan.label_count);
}

// Accuracy of the best constant character predictor on this corpus, counted
// over the characters packing would keep (per-word truncation applied). The
// trained model has to beat this to demonstrate it learned anything.
inline double char_unigram_oracle_accuracy(const std::vector<SegmentedSequence>& corpus,
                                           int max_chars = kMaxCharsDefault) {
    std::unordered_map<int32_t, int64_t> counts;
    int64_t total = 0;
    for (const auto& seq : corpus)
        for (const auto& word : seq.words) {
            size_t n = std::min(word.size(), static_cast<size_t>(max_chars));
            for (size_t i = 0; i < n; ++i) {
                ++counts[word[i]];
                ++total;
            }
        }
    int64_t best = 0;
    for (const auto& [id, n] : counts) best = std::max(best, n);
    return total == 0 ? 0.0 : static_cast<double>(best) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct StepRecord {
    int64_t step;
    double loss;
    double masked_acc;
    double lr;
};

struct PretrainResult {
    double first_loss = 0.0;
    double final_loss = 0.0;
    double final_masked_acc = 0.0;
    int64_t steps = 0;
    int64_t empty_label_steps = 0;
    std::vector<std::string> checkpoints;
};

inline std::string format_step_record(const StepRecord& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "step=%lld loss=%.6f masked_acc=%.6f lr=%.8f",
                  static_cast<long long>(r.step), r.loss, r.masked_acc, r.lr);
    return buf;
}

inline std::vector<SegmentedSequence> segment_corpus(const std::vector<std::string>& lines,
                                                     const CharVocab& vocab) {
    std::vector<SegmentedSequence> out;
    out.reserve(lines.size());
    for (const auto& line : lines) out.push_back(segment(line, vocab));
    return out;
}

// One pre-training run: shuffle, pack, corrupt, forward, backward, AdamW.
// Deterministic under (seed, config): the metrics stream is byte-identical
// across runs. Aborts with the step number and learning rate on a non-finite
// loss.
template <typename S>
PretrainResult pretrain(const std::vector<SegmentedSequence>& corpus, const CharVocab& vocab,
                        ModelParams<S>& params, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        std::ostream* metrics = nullptr, const std::string& ckpt_prefix = {}) {
    mcfg.validate();
    tcfg.validate();
    if (corpus.empty()) throw DataError("pretrain: empty corpus");

    Rng rng(tcfg.seed);
    auto model_params = collect_params<S>(params);
    AdamW<S> opt(tcfg.beta1, tcfg.beta2, tcfg.adam_eps, tcfg.weight_decay);
    ForwardCtx ctx{true, &rng};

    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();  // triggers a shuffle before the first batch

    PretrainResult result;
    for (int64_t step = 1; step <= tcfg.total_steps; ++step) {
        std::vector<SegmentedSequence> batch_seqs;
        batch_seqs.reserve(static_cast<size_t>(tcfg.batch_size));
        for (int64_t i = 0; i < tcfg.batch_size; ++i) {
            if (cursor == order.size()) {
                for (size_t j = order.size(); j > 1; --j)
                    std::swap(order[j - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(j) - 1))]);
                cursor = 0;
            }
            batch_seqs.push_back(corpus[order[cursor++]]);
        }

        PackedBatch clean = pack_batch(batch_seqs, static_cast<int>(mcfg.max_chars),
                                       static_cast<int>(mcfg.max_words), static_cast<int>(mcfg.pad_multiple));
        MaskingPlan plan = make_masking_plan(clean, rng, tcfg);
        PackedBatch corrupted = apply_masking(clean, plan, vocab, rng);
        BatchMasks<S> masks = build_masks<S>(corrupted);

        EncodeResult<S> enc = hlm_encode(corrupted, masks, params, mcfg, ctx);
        Tensor<S> logits = mlm_head(enc.w, enc.h, enc.r, corrupted, masks, params, mcfg, ctx);
        Tensor<S> loss = mlm_loss(logits, plan);
        if (plan.label_count == 0) ++result.empty_label_steps;

        double loss_v = static_cast<double>(loss.item());
        double lr = lr_at_step(step, tcfg.total_steps, tcfg.warmup_steps, tcfg.lr);
        if (!std::isfinite(loss_v))
            throw NumericError("pretrain: non-finite loss at step " + std::to_string(step) +
                               " (lr=" + std::to_string(lr) + ")");

        for (auto& p : model_params) p.tensor.zero_grad();
        backward(loss);
        opt.step(model_params, lr);

        StepRecord rec{step, loss_v, masked_accuracy(logits, plan), lr};
        if (metrics) (*metrics) << format_step_record(rec) << "\n";
        if (step == 1) result.first_loss = loss_v;
        result.final_loss = loss_v;
        result.final_masked_acc = rec.masked_acc;
        result.steps = step;

        bool periodic = tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0;
        if (!ckpt_prefix.empty() && (periodic || step == tcfg.total_steps)) {
            std::string path = ckpt_prefix + (step == tcfg.total_steps ? "-final.ckpt"
                                                                       : "-step" + std::to_string(step) + ".ckpt");
            save_model(path, params, mcfg, {{"optimizer.step", std::to_string(opt.step_count())}},
                       opt.state_tensors(model_params));
            result.checkpoints.push_back(path);
        }
    }
    return result;
}

}  // namespace hlm
