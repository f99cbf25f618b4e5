// SPDX-License-Identifier: Apache-2.0
#include "hlm/packing.hpp"
#include "testutil.hpp"

using namespace hlm;

namespace {

SegmentedSequence seq_of(std::vector<std::vector<int32_t>> words) {
    SegmentedSequence s;
    s.words = std::move(words);
    return s;
}

std::vector<int32_t> word_of(int64_t len, int32_t fill = 10) {
    return std::vector<int32_t>(static_cast<size_t>(len), fill);
}

}  // namespace

TEST_CASE("pack shapes follow the batch maxima") {
    // words "hi" (2 chars) and "yo" (2)... shapes: CLS + 2 words + SEP = 4
    // word slots; C = 1 + max(payload) = 3
    auto batch = pack_batch({seq_of({{10, 11}, {12, 13}})});
    REQUIRE(batch.B == 1);
    REQUIRE(batch.W == 4);
    REQUIRE(batch.C == 3);

    // spec arithmetic example with 1- and 2-char words
    auto b2 = pack_batch({seq_of({{10}, {12, 13}})});
    REQUIRE(b2.W == 4);
    REQUIRE(b2.C == 3);
}

TEST_CASE("every real word starts with WORD_CLS; wrappers are CLS/SEP") {
    auto batch = pack_batch({seq_of({{10, 11}, {12}})});
    for (int64_t w = 0; w < batch.W; ++w) {
        if (!batch.wmask(0, w)) continue;
        REQUIRE(batch.id(0, w, 0) == tok::kWordCls);
    }
    REQUIRE(batch.id(0, 0, 1) == tok::kCls);
    REQUIRE(batch.id(0, batch.W - 1, 1) == tok::kSep);
    REQUIRE(batch.is_pseudo_word(0, 0));
    REQUIRE(batch.is_pseudo_word(0, batch.W - 1));
    REQUIRE_FALSE(batch.is_pseudo_word(0, 1));
}

TEST_CASE("a 25-character word keeps exactly 20 characters plus WORD_CLS") {
    auto batch = pack_batch({seq_of({word_of(25)})});
    REQUIRE(batch.C == 21);
    REQUIRE(batch.chars_in_word(0, 1) == 20);
    // head truncation: the surviving ids are the first 20
    std::vector<int32_t> expect(20, 10);
    std::vector<int32_t> got;
    for (int64_t c = 1; c <= 20; ++c) got.push_back(batch.id(0, 1, c));
    REQUIRE(got == expect);
}

TEST_CASE("empty sequence packs as CLS SEP only") {
    auto batch = pack_batch({seq_of({})});
    REQUIRE(batch.W == 2);
    REQUIRE(batch.id(0, 0, 1) == tok::kCls);
    REQUIRE(batch.id(0, 1, 1) == tok::kSep);
    REQUIRE(unpack_batch(batch)[0].empty());
}

TEST_CASE("padding slots carry PAD and zero masks; char mask implies word mask") {
    auto batch = pack_batch({seq_of({{10, 11, 12}}), seq_of({{10}, {11}, {12}, {13}})});
    for (int64_t b = 0; b < batch.B; ++b)
        for (int64_t w = 0; w < batch.W; ++w)
            for (int64_t c = 0; c < batch.C; ++c) {
                if (!batch.cmask(b, w, c)) {
                    REQUIRE(batch.id(b, w, c) == tok::kPad);
                } else {
                    REQUIRE(batch.wmask(b, w) == 1);
                }
            }
}

TEST_CASE("pack then unpack returns the truncated word lists") {
    Rng rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        int64_t n_seq = rng.uniform_int(1, 3);
        std::vector<SegmentedSequence> seqs;
        std::vector<std::vector<std::vector<int32_t>>> expected;
        for (int64_t s = 0; s < n_seq; ++s) {
            SegmentedSequence seq;
            std::vector<std::vector<int32_t>> truncated;
            int64_t words = rng.uniform_int(0, trial % 97 == 0 ? 600 : 12);
            for (int64_t w = 0; w < words; ++w) {
                int64_t len = rng.uniform_int(1, trial % 13 == 0 ? 30 : 8);
                std::vector<int32_t> word;
                for (int64_t c = 0; c < len; ++c)
                    word.push_back(static_cast<int32_t>(rng.uniform_int(6, 80)));
                seq.words.push_back(word);
                if (static_cast<int64_t>(truncated.size()) < kMaxWordsDefault - 2) {
                    word.resize(std::min<size_t>(word.size(), kMaxCharsDefault));
                    truncated.push_back(word);
                }
            }
            seqs.push_back(std::move(seq));
            expected.push_back(std::move(truncated));
        }
        PackedBatch batch = pack_batch(seqs);
        REQUIRE(batch.W <= kMaxWordsDefault);
        REQUIRE(batch.C <= kMaxCharsDefault + 1);
        REQUIRE(unpack_batch(batch) == expected);
    }
}

TEST_CASE("optional padding to multiples of 8") {
    auto batch = pack_batch({seq_of({{10, 11}, {12, 13}})}, 20, 512, 8);
    REQUIRE(batch.W == 8);
    REQUIRE(batch.C == 8);
    REQUIRE(unpack_batch(batch) == std::vector<std::vector<std::vector<int32_t>>>{{{10, 11}, {12, 13}}});
}

TEST_CASE("intra mask permits only real-to-real pairs within a word") {
    auto batch = pack_batch({seq_of({{10, 11, 12}, {13}})});
    auto masks = build_masks<float>(batch);
    REQUIRE(masks.intra.shape() == Shape{batch.B * batch.W, batch.C, batch.C});
    const auto& m = masks.intra.value();
    // word slot 1 has 4 real tokens of C=4 -> all-zero 4x4 block
    int64_t c = batch.C;
    REQUIRE(c == 4);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) REQUIRE(m[static_cast<size_t>((1 * c + i) * c + j)] == 0.0f);
    // word slot 2 has 2 real of 4: rows/cols 2,3 fully masked
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            float v = m[static_cast<size_t>((2 * c + i) * c + j)];
            if (i < 2 && j < 2)
                REQUIRE(v == 0.0f);
            else
                REQUIRE(v == kMaskFill);
        }
}

TEST_CASE("padded word slots are fully masked at both levels") {
    auto batch = pack_batch({seq_of({{10}}), seq_of({{10}, {11}})});
    auto masks = build_masks<float>(batch);
    // sequence 0 has W=4 slots but only 3 real words
    int64_t pad_slot = 3;
    const auto& intra = masks.intra.value();
    for (int64_t i = 0; i < batch.C; ++i)
        for (int64_t j = 0; j < batch.C; ++j)
            REQUIRE(intra[static_cast<size_t>(((0 * batch.W + pad_slot) * batch.C + i) * batch.C + j)] ==
                    kMaskFill);
    const auto& inter = masks.inter.value();
    for (int64_t i = 0; i < batch.W; ++i) {
        REQUIRE(inter[static_cast<size_t>((i * batch.W) + pad_slot)] == kMaskFill);
        REQUIRE(inter[static_cast<size_t>((pad_slot * batch.W) + i)] == kMaskFill);
    }
}

TEST_CASE("packing is deterministic and order-preserving") {
    auto seqs = std::vector<SegmentedSequence>{seq_of({{10, 11}, {12}}), seq_of({{13}})};
    auto a = pack_batch(seqs);
    auto b = pack_batch(seqs);
    REQUIRE(a.ids == b.ids);
    REQUIRE(a.char_mask == b.char_mask);
    REQUIRE(a.word_mask == b.word_mask);
    REQUIRE(a.id(0, 1, 1) == 10);
    REQUIRE(a.id(0, 2, 1) == 12);
    REQUIRE(a.id(1, 1, 1) == 13);
}

TEST_CASE("empty batch is rejected") {
    REQUIRE_THROWS_AS(pack_batch({}), UsageError);
}
