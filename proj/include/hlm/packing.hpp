// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "hlm/segment.hpp"
#include "hlm/tensor.hpp"

namespace hlm {

inline constexpr int kMaxCharsDefault = 20;
inline constexpr int kMaxWordsDefault = 512;

// Rank-3 padded batch [B, W, C]: every real word starts with WORD_CLS, every
// sequence is wrapped in CLS/SEP pseudo-words (one payload character each),
// padded slots carry PAD with zero masks.
struct PackedBatch {
    int64_t B = 0, W = 0, C = 0;
    std::vector<int32_t> ids;        // B*W*C
    std::vector<uint8_t> char_mask;  // B*W*C; 1 = real token incl. WORD_CLS
    std::vector<uint8_t> word_mask;  // B*W;   1 = real word incl. CLS/SEP

    int32_t& id(int64_t b, int64_t w, int64_t c) { return ids[static_cast<size_t>((b * W + w) * C + c)]; }
    int32_t id(int64_t b, int64_t w, int64_t c) const { return ids[static_cast<size_t>((b * W + w) * C + c)]; }
    uint8_t cmask(int64_t b, int64_t w, int64_t c) const {
        return char_mask[static_cast<size_t>((b * W + w) * C + c)];
    }
    uint8_t wmask(int64_t b, int64_t w) const { return word_mask[static_cast<size_t>(b * W + w)]; }

    // CLS/SEP wrapper words (and any mid-sequence SEP used for sentence pairs).
    bool is_pseudo_word(int64_t b, int64_t w) const {
        if (!wmask(b, w)) return false;
        int32_t first = id(b, w, 1);
        return first == tok::kCls || first == tok::kSep;
    }

    IntArray id_array() const { return IntArray({B, W, C}, ids); }

    // Real characters per word, excluding the WORD_CLS slot.
    int64_t chars_in_word(int64_t b, int64_t w) const {
        int64_t n = 0;
        for (int64_t c = 1; c < C; ++c) n += cmask(b, w, c);
        return n;
    }
};

// Packs segmented sequences per the reshape-friendly layout: truncate each
// word to max_chars then prefix WORD_CLS; wrap in CLS/SEP pseudo-words;
// truncate to max_words counting the wrappers; pad W and C to the batch
// maxima (optionally rounded up to pad_multiple for kernel-friendly shapes).
inline PackedBatch pack_batch(const std::vector<SegmentedSequence>& sequences,
                              int max_chars = kMaxCharsDefault, int max_words = kMaxWordsDefault,
                              int pad_multiple = 1) {
    if (sequences.empty()) throw UsageError("pack_batch: empty batch");
    if (max_chars < 1 || max_words < 3) throw UsageError("pack_batch: limits too small");

    struct Row {
        std::vector<std::vector<int32_t>> words;  // payload chars, truncated, no WORD_CLS yet
    };
    std::vector<Row> rows;
    rows.reserve(sequences.size());
    int64_t maxw = 0, maxc = 0;
    for (const auto& seq : sequences) {
        Row row;
        row.words.push_back({tok::kCls});
        int64_t budget = max_words - 2;
        for (const auto& word : seq.words) {
            if (budget == 0) break;
            --budget;
            std::vector<int32_t> w(word.begin(),
                                   word.begin() + std::min<size_t>(word.size(), static_cast<size_t>(max_chars)));
            row.words.push_back(std::move(w));
        }
        row.words.push_back({tok::kSep});
        maxw = std::max<int64_t>(maxw, static_cast<int64_t>(row.words.size()));
        for (const auto& w : row.words) maxc = std::max<int64_t>(maxc, static_cast<int64_t>(w.size()) + 1);
        rows.push_back(std::move(row));
    }
    if (pad_multiple > 1) {
        auto round_up = [pad_multiple](int64_t v) {
            return (v + pad_multiple - 1) / pad_multiple * pad_multiple;
        };
        maxw = round_up(maxw);
        maxc = round_up(maxc);
    }

    PackedBatch batch;
    batch.B = static_cast<int64_t>(rows.size());
    batch.W = maxw;
    batch.C = maxc;
    batch.ids.assign(static_cast<size_t>(batch.B * batch.W * batch.C), tok::kPad);
    batch.char_mask.assign(batch.ids.size(), 0);
    batch.word_mask.assign(static_cast<size_t>(batch.B * batch.W), 0);
    for (int64_t b = 0; b < batch.B; ++b) {
        const Row& row = rows[static_cast<size_t>(b)];
        for (int64_t w = 0; w < static_cast<int64_t>(row.words.size()); ++w) {
            batch.word_mask[static_cast<size_t>(b * batch.W + w)] = 1;
            batch.id(b, w, 0) = tok::kWordCls;
            batch.char_mask[static_cast<size_t>((b * batch.W + w) * batch.C)] = 1;
            const auto& chars = row.words[static_cast<size_t>(w)];
            for (int64_t c = 0; c < static_cast<int64_t>(chars.size()); ++c) {
                batch.id(b, w, c + 1) = chars[static_cast<size_t>(c)];
                batch.char_mask[static_cast<size_t>((b * batch.W + w) * batch.C + c + 1)] = 1;
            }
        }
    }
    return batch;
}

// Reverses pack_batch: drops padding, strips WORD_CLS and the CLS/SEP
// wrappers, and returns per-sequence word id lists.
inline std::vector<std::vector<std::vector<int32_t>>> unpack_batch(const PackedBatch& batch) {
    std::vector<std::vector<std::vector<int32_t>>> out(static_cast<size_t>(batch.B));
    for (int64_t b = 0; b < batch.B; ++b) {
        for (int64_t w = 0; w < batch.W; ++w) {
            if (!batch.wmask(b, w) || batch.is_pseudo_word(b, w)) continue;
            std::vector<int32_t> word;
            for (int64_t c = 1; c < batch.C; ++c)
                if (batch.cmask(b, w, c)) word.push_back(batch.id(b, w, c));
            out[static_cast<size_t>(b)].push_back(std::move(word));
        }
    }
    return out;
}

// Additive attention masks: 0 where attention is permitted, -1e9 elsewhere.
template <typename S>
struct BatchMasks {
    Tensor<S> intra;  // [B*W, C, C]  characters attend within their word only
    Tensor<S> inter;  // [B, W, W]    real words attend to real words
};

template <typename S>
BatchMasks<S> build_masks(const PackedBatch& batch) {
    const S fill = static_cast<S>(kMaskFill);
    Tensor<S> intra = Tensor<S>::full({batch.B * batch.W, batch.C, batch.C}, fill);
    Tensor<S> inter = Tensor<S>::full({batch.B, batch.W, batch.W}, fill);
    auto& iv = intra.value();
    for (int64_t b = 0; b < batch.B; ++b)
        for (int64_t w = 0; w < batch.W; ++w) {
            const uint8_t* cm = batch.char_mask.data() + (b * batch.W + w) * batch.C;
            S* block = iv.data() + (b * batch.W + w) * batch.C * batch.C;
            for (int64_t i = 0; i < batch.C; ++i) {
                if (!cm[i]) continue;
                for (int64_t j = 0; j < batch.C; ++j)
                    if (cm[j]) block[i * batch.C + j] = S(0);
            }
        }
    auto& ev = inter.value();
    for (int64_t b = 0; b < batch.B; ++b) {
        const uint8_t* wm = batch.word_mask.data() + b * batch.W;
        S* block = ev.data() + b * batch.W * batch.W;
        for (int64_t i = 0; i < batch.W; ++i) {
            if (!wm[i]) continue;
            for (int64_t j = 0; j < batch.W; ++j)
                if (wm[j]) block[i * batch.W + j] = S(0);
        }
    }
    return {intra, inter};
}

}  // namespace hlm
