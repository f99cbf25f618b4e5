// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "hlm/pretrain.hpp"
#include "hlm/toydata.hpp"
#include "testutil.hpp"

using namespace hlm;
using Catch::Approx;

namespace {

SegmentedSequence seq_of(std::vector<std::vector<int32_t>> words) {
    SegmentedSequence s;
    s.words = std::move(words);
    return s;
}

CharVocab small_vocab() {
    std::unordered_map<uint32_t, uint64_t> counts;
    for (uint32_t c = 'a'; c <= 'z'; ++c) counts[c] = 100 - (c - 'a');
    return CharVocab::from_counts(counts, 32);
}

TrainConfig stats_config(double ratio = 0.15) {
    TrainConfig cfg;
    cfg.mask_ratio = ratio;
    cfg.total_steps = 1;
    return cfg;
}

}  // namespace

TEST_CASE("masking plan selection statistics") {
    Rng rng(101);
    TrainConfig cfg = stats_config();
    int64_t candidates = 0, selected = 0;
    int64_t acts[3] = {0, 0, 0};
    // ~30k candidate words
    for (int batch_i = 0; batch_i < 1500; ++batch_i) {
        std::vector<SegmentedSequence> seqs;
        for (int s = 0; s < 4; ++s) {
            SegmentedSequence seq;
            for (int w = 0; w < 5; ++w) seq.words.push_back({10, 11, 12});
            seqs.push_back(seq);
        }
        PackedBatch batch = pack_batch(seqs);
        MaskingPlan plan = make_masking_plan(batch, rng, cfg);
        candidates += plan.candidate_words;
        selected += plan.selected_words;
        for (int64_t b = 0; b < batch.B; ++b)
            for (int64_t w = 0; w < batch.W; ++w)
                if (plan.is_selected(b, w)) ++acts[static_cast<int>(plan.action(b, w))];
    }
    REQUIRE(candidates == 30000);
    double sel_frac = static_cast<double>(selected) / static_cast<double>(candidates);
    REQUIRE(sel_frac > 0.14);
    REQUIRE(sel_frac < 0.16);
    double mask_frac = static_cast<double>(acts[0]) / static_cast<double>(selected);
    double rand_frac = static_cast<double>(acts[1]) / static_cast<double>(selected);
    double keep_frac = static_cast<double>(acts[2]) / static_cast<double>(selected);
    REQUIRE(std::abs(mask_frac - 0.8) < 0.015);
    REQUIRE(std::abs(rand_frac - 0.1) < 0.015);
    REQUIRE(std::abs(keep_frac - 0.1) < 0.015);
}

TEST_CASE("mask ratio 0 selects nothing; ratio 1 with mask-only corrupts every character") {
    Rng rng(5);
    PackedBatch batch = pack_batch({seq_of({{10, 11}, {12}})});
    TrainConfig none = stats_config(0.0);
    MaskingPlan p0 = make_masking_plan(batch, rng, none);
    REQUIRE(p0.selected_words == 0);
    REQUIRE(p0.label_count == 0);

    TrainConfig all = stats_config(1.0);
    all.prob_mask = 1.0;
    all.prob_random = 0.0;
    all.prob_keep = 0.0;
    MaskingPlan p1 = make_masking_plan(batch, rng, all);
    REQUIRE(p1.selected_words == p1.candidate_words);
    CharVocab vocab = small_vocab();
    PackedBatch corrupted = apply_masking(batch, p1, vocab, rng);
    for (int64_t b = 0; b < batch.B; ++b)
        for (int64_t w = 0; w < batch.W; ++w) {
            if (!batch.wmask(b, w) || batch.is_pseudo_word(b, w)) continue;
            for (int64_t c = 1; c < batch.C; ++c)
                if (batch.cmask(b, w, c)) REQUIRE(corrupted.id(b, w, c) == tok::kMask);
        }
}

TEST_CASE("whole-word action consistency and the three corruption modes") {
    Rng rng(7);
    CharVocab vocab = small_vocab();
    TrainConfig cfg = stats_config(1.0);
    cfg.prob_mask = 0.5;
    cfg.prob_random = 0.5;
    cfg.prob_keep = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SegmentedSequence> seqs{seq_of({{10, 11, 12}, {13, 14}, {15, 16, 17, 18}})};
        PackedBatch batch = pack_batch(seqs);
        MaskingPlan plan = make_masking_plan(batch, rng, cfg);
        PackedBatch corrupted = apply_masking(batch, plan, vocab, rng);
        for (int64_t w = 0; w < batch.W; ++w) {
            if (!plan.is_selected(0, w)) continue;
            bool all_mask = true, all_random = true;
            for (int64_t c = 1; c < batch.C; ++c) {
                if (!batch.cmask(0, w, c)) continue;
                all_mask = all_mask && corrupted.id(0, w, c) == tok::kMask;
                all_random = all_random && corrupted.id(0, w, c) >= tok::kNumSpecial;
            }
            REQUIRE((all_mask || all_random));  // never a mixed word
        }
    }
}

TEST_CASE("apply_masking word-level semantics") {
    Rng rng(11);
    CharVocab vocab = small_vocab();
    PackedBatch batch = pack_batch({seq_of({{10, 11, 12}})});  // one 3-char word

    TrainConfig cfg = stats_config(1.0);
    SECTION("mask_all turns the word into WORD_CLS MASK MASK MASK") {
        cfg.prob_mask = 1.0;
        cfg.prob_random = 0.0;
        cfg.prob_keep = 0.0;
        MaskingPlan plan = make_masking_plan(batch, rng, cfg);
        PackedBatch out = apply_masking(batch, plan, vocab, rng);
        REQUIRE(out.id(0, 1, 0) == tok::kWordCls);
        REQUIRE(out.id(0, 1, 1) == tok::kMask);
        REQUIRE(out.id(0, 1, 2) == tok::kMask);
        REQUIRE(out.id(0, 1, 3) == tok::kMask);
    }
    SECTION("keep leaves the word byte-identical") {
        cfg.prob_mask = 0.0;
        cfg.prob_random = 0.0;
        cfg.prob_keep = 1.0;
        MaskingPlan plan = make_masking_plan(batch, rng, cfg);
        PackedBatch out = apply_masking(batch, plan, vocab, rng);
        REQUIRE(out.ids == batch.ids);
        REQUIRE(plan.label_count == 3);  // labels recorded regardless of action
    }
    SECTION("randomize never produces special ids") {
        cfg.prob_mask = 0.0;
        cfg.prob_random = 1.0;
        cfg.prob_keep = 0.0;
        for (int trial = 0; trial < 300; ++trial) {
            MaskingPlan plan = make_masking_plan(batch, rng, cfg);
            PackedBatch out = apply_masking(batch, plan, vocab, rng);
            for (int64_t c = 1; c <= 3; ++c) {
                REQUIRE(out.id(0, 1, c) >= tok::kNumSpecial);
                REQUIRE(out.id(0, 1, c) < vocab.size());
            }
        }
    }
}

TEST_CASE("masking never touches WORD_CLS, CLS, SEP or PAD positions") {
    Rng rng(13);
    CharVocab vocab = small_vocab();
    TrainConfig cfg = stats_config(1.0);
    for (int trial = 0; trial < 100; ++trial) {
        PackedBatch batch = pack_batch({seq_of({{10, 11}, {12}}), seq_of({{13, 14, 15}})});
        MaskingPlan plan = make_masking_plan(batch, rng, cfg);
        PackedBatch out = apply_masking(batch, plan, vocab, rng);
        for (int64_t b = 0; b < batch.B; ++b)
            for (int64_t w = 0; w < batch.W; ++w) {
                REQUIRE(out.id(b, w, 0) == batch.id(b, w, 0));  // WORD_CLS or PAD
                if (batch.is_pseudo_word(b, w)) {
                    for (int64_t c = 0; c < batch.C; ++c) REQUIRE(out.id(b, w, c) == batch.id(b, w, c));
                    REQUIRE_FALSE(plan.is_selected(b, w));
                }
                for (int64_t c = 0; c < batch.C; ++c)
                    if (!batch.cmask(b, w, c)) REQUIRE(out.id(b, w, c) == tok::kPad);
            }
    }
}

TEST_CASE("labels cover exactly the real character positions of selected words") {
    Rng rng(17);
    TrainConfig cfg = stats_config(0.5);
    PackedBatch batch = pack_batch({seq_of({{10, 11}, {12, 13, 14}})});
    MaskingPlan plan = make_masking_plan(batch, rng, cfg);
    for (int64_t b = 0; b < batch.B; ++b)
        for (int64_t w = 0; w < batch.W; ++w)
            for (int64_t c = 0; c < batch.C; ++c) {
                int32_t label = plan.labels.data[static_cast<size_t>((b * batch.W + w) * batch.C + c)];
                bool expect = plan.is_selected(b, w) && c >= 1 && batch.cmask(b, w, c);
                if (expect)
                    REQUIRE(label == batch.id(b, w, c));
                else
                    REQUIRE(label == kIgnoreIndex);
            }
}

TEST_CASE("mlm_loss analytic values") {
    PackedBatch batch = pack_batch({seq_of({{10, 11, 12}})});
    Rng rng(19);
    TrainConfig cfg = stats_config(1.0);
    MaskingPlan plan = make_masking_plan(batch, rng, cfg);
    REQUIRE(plan.label_count == 3);

    auto uniform = Tensor<float>::zeros({batch.B, batch.W, batch.C, 1024});
    REQUIRE(mlm_loss(uniform, plan).item() == Approx(std::log(1024.0)).epsilon(1e-6));
    REQUIRE(mlm_loss(uniform, plan).item() == Approx(6.9314718).epsilon(1e-5));

    // perfect one-hot logits at the labels
    auto perfect = Tensor<float>::zeros({batch.B, batch.W, batch.C, 1024});
    for (int64_t c = 1; c <= 3; ++c) {
        int32_t y = plan.labels.data[static_cast<size_t>((0 * batch.W + 1) * batch.C + c)];
        perfect.value()[static_cast<size_t>(((0 * batch.W + 1) * batch.C + c) * 1024 + y)] = 60.0f;
    }
    REQUIRE(mlm_loss(perfect, plan).item() < 1e-9);

    // loss is invariant to logits at non-label positions
    auto noisy = Tensor<float>::from_data(perfect.shape(), perfect.value());
    for (int64_t v = 0; v < 1024; ++v)
        noisy.value()[static_cast<size_t>(((0 * batch.W + 0) * batch.C + 1) * 1024 + v)] = -3.5f;
    REQUIRE(mlm_loss(noisy, plan).item() == Approx(mlm_loss(perfect, plan).item()).margin(1e-12));

    // gradient w.r.t. non-label logits is exactly zero
    auto logits = Tensor<float>::zeros({batch.B, batch.W, batch.C, 1024}, true);
    auto loss = mlm_loss(logits, plan);
    backward(loss);
    for (int64_t v = 0; v < 1024; ++v)
        REQUIRE(logits.grad()[static_cast<size_t>(((0 * batch.W + 0) * batch.C + 0) * 1024 + v)] == 0.0f);
}

TEST_CASE("AdamW with zero lr and zero decay leaves parameters bit-identical") {
    Rng rng(23);
    auto t = testutil::random_tensor({4, 4}, rng);
    auto tf = Tensor<float>::zeros({4, 4}, true);
    for (size_t i = 0; i < tf.value().size(); ++i) tf.value()[i] = static_cast<float>(t.value()[i]);
    std::vector<float> before = tf.value();
    for (auto& g : tf.grad()) g = 0.123f;
    std::vector<ParamRef<float>> refs{{"w", tf, true}};
    AdamW<float> opt(0.9, 0.999, 1e-8, 0.0);
    opt.step(refs, 0.0);
    opt.step(refs, 0.0);
    REQUIRE(std::memcmp(before.data(), tf.value().data(), before.size() * sizeof(float)) == 0);
}

TEST_CASE("learning rate schedule hits the pinned points exactly") {
    REQUIRE(lr_at_step(10000, 100000, 10000, 5e-5) == 5e-5);
    REQUIRE(lr_at_step(100000, 100000, 10000, 5e-5) == 0.0);
    REQUIRE(lr_at_step(5000, 100000, 10000, 5e-5) == Approx(2.5e-5));
    REQUIRE(lr_at_step(55000, 100000, 10000, 5e-5) == Approx(2.5e-5));
    // no warmup
    REQUIRE(lr_at_step(1, 100, 0, 1e-3) == Approx(1e-3 * 99.0 / 100.0));
}

TEST_CASE("pretrain is deterministic: identical seeds give identical metric logs") {
    auto corpus_lines = toy_grammar_corpus(60, 3);
    std::stringstream vs;
    for (const auto& l : corpus_lines) vs << l << "\n";
    CharVocab vocab = build_vocab(vs, 64);
    auto corpus = segment_corpus(corpus_lines, vocab);

    ModelConfig mcfg;
    mcfg.hidden = 16;
    mcfg.heads = 2;
    mcfg.intra_layers = 1;
    mcfg.inter_layers = 1;
    mcfg.intra_ff = 32;
    mcfg.inter_ff = 32;
    mcfg.vocab_size = 64;
    mcfg.dropout = 0.1;
    TrainConfig tcfg;
    tcfg.total_steps = 12;
    tcfg.warmup_steps = 3;
    tcfg.batch_size = 4;
    tcfg.seed = 99;

    auto run = [&] {
        Rng init(tcfg.seed);
        auto params = ModelParams<float>::init(mcfg, init);
        std::stringstream metrics;
        pretrain(corpus, vocab, params, mcfg, tcfg, &metrics);
        return metrics.str();
    };
    std::string a = run();
    std::string b = run();
    REQUIRE(a == b);
    REQUIRE_FALSE(a.empty());

    tcfg.seed = 100;
    Rng init(tcfg.seed);
    auto params = ModelParams<float>::init(mcfg, init);
    std::stringstream metrics;
    pretrain(corpus, vocab, params, mcfg, tcfg, &metrics);
    REQUIRE(metrics.str() != a);  // different seed, different trajectory
}

TEST_CASE("short pretraining run reduces the loss on the toy grammar") {
    auto corpus_lines = toy_grammar_corpus(200, 11);
    std::stringstream vs;
    for (const auto& l : corpus_lines) vs << l << "\n";
    CharVocab vocab = build_vocab(vs, 64);
    auto corpus = segment_corpus(corpus_lines, vocab);

    ModelConfig mcfg;
    mcfg.hidden = 32;
    mcfg.heads = 2;
    mcfg.intra_layers = 1;
    mcfg.inter_layers = 2;
    mcfg.intra_ff = 64;
    mcfg.inter_ff = 64;
    mcfg.vocab_size = 64;
    mcfg.dropout = 0.0;
    TrainConfig tcfg;
    tcfg.total_steps = 150;
    tcfg.warmup_steps = 15;
    tcfg.batch_size = 8;
    tcfg.seed = 4;
    tcfg.lr = 3e-3;

    Rng init(tcfg.seed);
    auto params = ModelParams<float>::init(mcfg, init);
    PretrainResult res = pretrain(corpus, vocab, params, mcfg, tcfg);
    REQUIRE(res.final_loss < res.first_loss);
}

TEST_CASE("unigram oracle accuracy is the modal character frequency") {
    CharVocab vocab = small_vocab();
    std::vector<SegmentedSequence> corpus{seq_of({encode_word("aab", vocab), encode_word("ac", vocab)})};
    // chars: a a b a c -> modal 'a' with 3/5
    REQUIRE(char_unigram_oracle_accuracy(corpus) == Approx(0.6));
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.total_steps = 10;
    cfg.warmup_steps = 20;
    REQUIRE_THROWS_AS(cfg.validate(), UsageError);
    cfg.warmup_steps = 5;
    cfg.prob_mask = 0.9;
    REQUIRE_THROWS_AS(cfg.validate(), UsageError);
    cfg.prob_mask = 0.8;
    REQUIRE_NOTHROW(cfg.validate());
}
