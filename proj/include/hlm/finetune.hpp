// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "hlm/adamw.hpp"
#include "hlm/io.hpp"
#include "hlm/pretrain.hpp"
#include "hlm/toydata.hpp"

namespace hlm {

struct FinetuneConfig {
    int64_t num_classes = 2;
    int64_t steps = 200;
    double lr = 1e-3;
    int64_t batch_size = 16;
    int64_t warmup_steps = 0;
    double weight_decay = 0.01;
    uint64_t seed = 0;

    void validate() const {
        if (num_classes < 2) throw UsageError("finetune: num_classes must be >= 2");
        if (steps < 1) throw UsageError("finetune: steps must be >= 1");
        if (lr <= 0.0) throw UsageError("finetune: lr must be positive");
        if (batch_size < 1) throw UsageError("finetune: batch_size must be >= 1");
        if (warmup_steps < 0 || warmup_steps > steps)
            throw UsageError("finetune: warmup_steps must lie in [0, steps]");
    }
};

template <typename S>
struct ClassifierParams {
    Tensor<S> w, b;  // [hidden, classes]

    static ClassifierParams init(int64_t hidden, int64_t classes, Rng& rng) {
        ClassifierParams p;
        p.w = detail::weight<S>({hidden, classes}, rng);
        p.b = detail::bias<S>(classes);
        return p;
    }
};

template <typename S, typename F>
void for_each_param(ClassifierParams<S>& p, F&& f) {
    f("classifier.w", p.w, true);
    f("classifier.b", p.b, false);
}

// Sentence pairs pack as CLS a SEP b SEP: the mid separator is an ordinary
// word slot holding the SEP id, which packing then treats as a pseudo-word.
inline SegmentedSequence segment_example(const LabeledExample& e, const CharVocab& vocab) {
    SegmentedSequence seq = segment(e.text_a, vocab);
    if (!e.text_b.empty()) {
        seq.words.push_back({tok::kSep});
        seq.spans.push_back({0, 0});
        SegmentedSequence b = segment(e.text_b, vocab);
        for (auto& w : b.words) seq.words.push_back(std::move(w));
        for (auto& s : b.spans) seq.spans.push_back(s);
    }
    return seq;
}

// Class logits read the fused features at the CLS slot.
template <typename S>
Tensor<S> classify_logits(const PackedBatch& batch, const BatchMasks<S>& masks, const ModelParams<S>& params,
                          const ClassifierParams<S>& clf, const ModelConfig& cfg, const ForwardCtx& ctx = {}) {
    EncodeResult<S> enc = hlm_encode(batch, masks, params, cfg, ctx);
    Tensor<S> fused = downstream_features(enc.r, enc.w, params, cfg, ctx);
    Tensor<S> cls = reshape(slice(fused, 1, 0, 1), {batch.B, cfg.hidden});
    return detail::linear(cls, clf.w, clf.b);
}

namespace detail {

template <typename S>
PackedBatch pack_examples(const std::vector<const LabeledExample*>& batch, const CharVocab& vocab,
                          const ModelConfig& cfg, IntArray* labels_out) {
    std::vector<SegmentedSequence> seqs;
    seqs.reserve(batch.size());
    std::vector<int32_t> labels;
    labels.reserve(batch.size());
    for (const LabeledExample* e : batch) {
        seqs.push_back(segment_example(*e, vocab));
        labels.push_back(e->label);
    }
    if (labels_out) *labels_out = IntArray({static_cast<int64_t>(batch.size())}, std::move(labels));
    return pack_batch(seqs, static_cast<int>(cfg.max_chars), static_cast<int>(cfg.max_words),
                      static_cast<int>(cfg.pad_multiple));
}

}  // namespace detail

struct FinetuneResult {
    double final_loss = 0.0;
    double train_accuracy = 0.0;  // over the last pass through the data
    int64_t steps = 0;
};

// Joint fine-tuning of the encoder, fusion head and classifier with AdamW and
// the linear schedule. Deterministic under (seed, config).
template <typename S>
FinetuneResult finetune_classifier(const std::vector<LabeledExample>& examples, const CharVocab& vocab,
                                   ModelParams<S>& params, ClassifierParams<S>& clf, const ModelConfig& mcfg,
                                   const FinetuneConfig& fcfg, std::ostream* metrics = nullptr) {
    mcfg.validate();
    fcfg.validate();
    if (examples.empty()) throw DataError("finetune: empty dataset");
    for (const auto& e : examples)
        if (e.label < 0 || e.label >= fcfg.num_classes)
            throw DataError("finetune: label " + std::to_string(e.label) + " outside " +
                            std::to_string(fcfg.num_classes) + " classes");

    Rng rng(fcfg.seed);
    ForwardCtx ctx{true, &rng};
    auto refs = collect_params<S>(params);
    for_each_param(clf, [&](const std::string& name, Tensor<S>& t, bool decay) {
        refs.push_back({name, t, decay});
    });
    AdamW<S> opt(0.9, 0.999, 1e-8, fcfg.weight_decay);

    std::vector<size_t> order(examples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t cursor = order.size();

    FinetuneResult result;
    int64_t window_hits = 0, window_total = 0;
    for (int64_t step = 1; step <= fcfg.steps; ++step) {
        std::vector<const LabeledExample*> batch;
        batch.reserve(static_cast<size_t>(fcfg.batch_size));
        for (int64_t i = 0; i < fcfg.batch_size; ++i) {
            if (cursor == order.size()) {
                for (size_t j = order.size(); j > 1; --j)
                    std::swap(order[j - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(j) - 1))]);
                cursor = 0;
                window_hits = 0;
                window_total = 0;
            }
            batch.push_back(&examples[order[cursor++]]);
        }
        IntArray labels;
        PackedBatch packed = detail::pack_examples<S>(batch, vocab, mcfg, &labels);
        BatchMasks<S> masks = build_masks<S>(packed);
        Tensor<S> logits = classify_logits(packed, masks, params, clf, mcfg, ctx);
        Tensor<S> loss = cross_entropy(logits, labels);
        double loss_v = static_cast<double>(loss.item());
        double lr = lr_at_step(step, fcfg.steps, fcfg.warmup_steps, fcfg.lr);
        if (!std::isfinite(loss_v))
            throw NumericError("finetune: non-finite loss at step " + std::to_string(step) +
                               " (lr=" + std::to_string(lr) + ")");

        IntArray pred = argmax_last(logits);
        for (size_t i = 0; i < labels.data.size(); ++i) {
            window_hits += pred.data[i] == labels.data[i];
            ++window_total;
        }

        for (auto& p : refs) p.tensor.zero_grad();
        backward(loss);
        opt.step(refs, lr);

        if (metrics) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "step=%lld loss=%.6f lr=%.8f", static_cast<long long>(step),
                          loss_v, lr);
            (*metrics) << buf << "\n";
        }
        result.final_loss = loss_v;
        result.steps = step;
    }
    result.train_accuracy =
        window_total == 0 ? 0.0 : static_cast<double>(window_hits) / static_cast<double>(window_total);
    return result;
}

// Inference-mode accuracy on a labeled dataset.
template <typename S>
double evaluate_classifier(const std::vector<LabeledExample>& examples, const CharVocab& vocab,
                           const ModelParams<S>& params, const ClassifierParams<S>& clf,
                           const ModelConfig& mcfg, int64_t batch_size = 32) {
    if (examples.empty()) throw DataError("evaluate: empty dataset");
    NoGradGuard no_grad;
    int64_t hits = 0;
    for (size_t at = 0; at < examples.size(); at += static_cast<size_t>(batch_size)) {
        std::vector<const LabeledExample*> batch;
        for (size_t i = at; i < examples.size() && i < at + static_cast<size_t>(batch_size); ++i)
            batch.push_back(&examples[i]);
        IntArray labels;
        PackedBatch packed = detail::pack_examples<S>(batch, vocab, mcfg, &labels);
        BatchMasks<S> masks = build_masks<S>(packed);
        Tensor<S> logits = classify_logits(packed, masks, params, clf, mcfg);
        IntArray pred = argmax_last(logits);
        for (size_t i = 0; i < labels.data.size(); ++i) hits += pred.data[i] == labels.data[i];
    }
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Aggregation ablation
// ---------------------------------------------------------------------------

struct AblationRow {
    Aggregation mode;
    double accuracy;
};

// Runs the identical fine-tune/evaluate recipe under each aggregation mode.
// Fresh parameters per mode from the same seed, so the runs differ only in
// the aggregation path.
template <typename S>
std::vector<AblationRow> ablate_pooling(const std::vector<LabeledExample>& train,
                                        const std::vector<LabeledExample>& eval,
                                        const CharVocab& vocab, const ModelConfig& base_cfg,
                                        const FinetuneConfig& fcfg,
                                        const Checkpoint* init_checkpoint = nullptr) {
    std::vector<AblationRow> rows;
    for (Aggregation mode : {Aggregation::word_cls, Aggregation::mean_pool, Aggregation::max_pool}) {
        ModelConfig cfg = base_cfg;
        cfg.aggregation = mode;
        Rng init_rng(fcfg.seed + 17);
        ModelParams<S> params = ModelParams<S>::init(cfg, init_rng);
        if (init_checkpoint) load_model(params, *init_checkpoint, "<init checkpoint>");
        ClassifierParams<S> clf = ClassifierParams<S>::init(cfg.hidden, fcfg.num_classes, init_rng);
        finetune_classifier(train, vocab, params, clf, cfg, fcfg);
        rows.push_back({mode, evaluate_classifier(eval, vocab, params, clf, cfg)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// TSV datasets (text [tab text] tab label)
// ---------------------------------------------------------------------------

inline std::vector<LabeledExample> parse_tsv_examples(const std::vector<std::string>& lines,
                                                      const std::string& origin) {
    std::vector<LabeledExample> out;
    out.reserve(lines.size());
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        std::vector<std::string> cols = split_tabs(lines[i]);
        if (cols.size() != 2 && cols.size() != 3)
            throw DataError(origin + ":" + std::to_string(i + 1) + ": expected 2 or 3 tab-separated fields");
        LabeledExample e;
        e.text_a = cols[0];
        e.text_b = cols.size() == 3 ? cols[1] : "";
        try {
            size_t used = 0;
            e.label = std::stoi(cols.back(), &used);
            if (used != cols.back().size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw DataError(origin + ":" + std::to_string(i + 1) + ": bad label '" + cols.back() + "'");
        }
        out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<LabeledExample> read_tsv_examples(const std::string& path) {
    return parse_tsv_examples(read_lines(path), path);
}

}  // namespace hlm
