// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include "hlm/finetune.hpp"
#include "testutil.hpp"

using namespace hlm;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.hidden = 32;
    cfg.heads = 2;
    cfg.intra_layers = 1;
    cfg.inter_layers = 1;
    cfg.intra_ff = 64;
    cfg.inter_ff = 64;
    cfg.vocab_size = 64;
    cfg.dropout = 0.0;
    return cfg;
}

CharVocab vocab_for(const std::vector<LabeledExample>& examples) {
    std::stringstream ss;
    for (const auto& e : examples) {
        ss << e.text_a << "\n";
        if (!e.text_b.empty()) ss << e.text_b << "\n";
    }
    return build_vocab(ss, 64);
}

}  // namespace

TEST_CASE("sentence pairs pack as CLS a SEP b SEP") {
    std::vector<LabeledExample> one{{"big cat", "tiny dog", 1}};
    CharVocab vocab = vocab_for(one);
    SegmentedSequence seq = segment_example(one[0], vocab);
    PackedBatch batch = pack_batch({seq});
    // words: CLS big cat SEP tiny dog SEP
    REQUIRE(batch.W == 7);
    REQUIRE(batch.id(0, 0, 1) == tok::kCls);
    REQUIRE(batch.id(0, 3, 1) == tok::kSep);
    REQUIRE(batch.id(0, 6, 1) == tok::kSep);
    REQUIRE(batch.is_pseudo_word(0, 3));
    // the mid separator must never become a masking candidate
    Rng rng(1);
    TrainConfig tcfg;
    tcfg.total_steps = 1;
    tcfg.mask_ratio = 1.0;
    MaskingPlan plan = make_masking_plan(batch, rng, tcfg);
    REQUIRE(plan.candidate_words == 4);
    REQUIRE_FALSE(plan.is_selected(0, 3));
}

TEST_CASE("toy two-class task trains to perfect accuracy within 200 steps") {
    auto train = toy_classification_dataset(128, 5);
    auto eval = toy_classification_dataset(64, 6);
    CharVocab vocab = vocab_for(train);

    ModelConfig cfg = toy_config();
    FinetuneConfig fcfg;
    fcfg.steps = 200;
    fcfg.batch_size = 16;
    fcfg.lr = 1e-3;
    fcfg.warmup_steps = 20;
    fcfg.seed = 3;

    Rng init(fcfg.seed + 17);
    auto params = ModelParams<float>::init(cfg, init);
    auto clf = ClassifierParams<float>::init(cfg.hidden, fcfg.num_classes, init);
    FinetuneResult res = finetune_classifier(train, vocab, params, clf, cfg, fcfg);
    REQUIRE(res.steps == 200);
    double acc = evaluate_classifier(eval, vocab, params, clf, cfg);
    REQUIRE(acc == 1.0);
}

TEST_CASE("ablation harness runs all three aggregation modes") {
    auto train = toy_entailment_dataset(64, 9);
    auto eval = toy_entailment_dataset(32, 10);
    CharVocab vocab = vocab_for(train);

    ModelConfig cfg = toy_config();
    FinetuneConfig fcfg;
    fcfg.steps = 12;
    fcfg.batch_size = 8;
    fcfg.seed = 4;

    auto rows = ablate_pooling<float>(train, eval, vocab, cfg, fcfg);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].mode == Aggregation::word_cls);
    REQUIRE(rows[1].mode == Aggregation::mean_pool);
    REQUIRE(rows[2].mode == Aggregation::max_pool);
    for (const auto& row : rows) {
        REQUIRE(row.accuracy >= 0.0);
        REQUIRE(row.accuracy <= 1.0);
    }
}

TEST_CASE("finetune rejects labels outside the class count") {
    std::vector<LabeledExample> bad{{"hello", "", 5}};
    CharVocab vocab = vocab_for(bad);
    ModelConfig cfg = toy_config();
    FinetuneConfig fcfg;
    Rng init(1);
    auto params = ModelParams<float>::init(cfg, init);
    auto clf = ClassifierParams<float>::init(cfg.hidden, fcfg.num_classes, init);
    REQUIRE_THROWS_AS(finetune_classifier(bad, vocab, params, clf, cfg, fcfg), DataError);
}

TEST_CASE("TSV example parsing") {
    auto rows = parse_tsv_examples({"premise\thypothesis\t1", "single text\t0", ""}, "<mem>");
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].text_a == "premise");
    REQUIRE(rows[0].text_b == "hypothesis");
    REQUIRE(rows[0].label == 1);
    REQUIRE(rows[1].text_b.empty());
    REQUIRE_THROWS_AS(parse_tsv_examples({"no label here"}, "<mem>"), DataError);
    REQUIRE_THROWS_AS(parse_tsv_examples({"text\tnot_a_number"}, "<mem>"), DataError);
}

TEST_CASE("toy dataset generators are deterministic and balanced") {
    auto a = toy_entailment_dataset(200, 42);
    auto b = toy_entailment_dataset(200, 42);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].text_a == b[i].text_a);
        REQUIRE(a[i].text_b == b[i].text_b);
        REQUIRE(a[i].label == b[i].label);
    }
    int64_t pos = 0;
    for (const auto& e : a) pos += e.label;
    REQUIRE(pos > 60);
    REQUIRE(pos < 140);

    // positives share the subject noun, negatives never do
    for (const auto& e : a) {
        auto words_a = split_words(e.text_a);
        auto words_b = split_words(e.text_b);
        bool shared = std::find(words_b.begin(), words_b.end(), words_a[1]) != words_b.end();
        REQUIRE(shared == (e.label == 1));
    }
}
