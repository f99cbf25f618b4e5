// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hlm/common.hpp"
#include "hlm/utf8.hpp"

namespace hlm {

// Special token ids. Ids 0-5 are reserved and never map to text characters.
namespace tok {
inline constexpr int32_t kPad = 0;
inline constexpr int32_t kCls = 1;
inline constexpr int32_t kSep = 2;
inline constexpr int32_t kMask = 3;
inline constexpr int32_t kWordCls = 4;
inline constexpr int32_t kUnk = 5;
inline constexpr int32_t kNumSpecial = 6;
}  // namespace tok

// Case-sensitive character vocabulary: a bijection between codepoints and ids
// 6..size-1 ordered by corpus frequency (ties by ascending codepoint).
// Immutable once built.
class CharVocab {
  public:
    CharVocab() = default;

    // Keeps the (capacity - 6) most frequent characters. A corpus with fewer
    // distinct characters yields a smaller vocabulary, never a padded one.
    static CharVocab from_counts(const std::unordered_map<uint32_t, uint64_t>& counts, int capacity) {
        if (capacity < tok::kNumSpecial + 1)
            throw UsageError("vocab capacity must be at least 7, got " + std::to_string(capacity));
        std::vector<std::pair<uint32_t, uint64_t>> ranked(counts.begin(), counts.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        size_t keep = std::min(ranked.size(), static_cast<size_t>(capacity - tok::kNumSpecial));
        CharVocab v;
        v.id_to_char_.reserve(keep);
        for (size_t i = 0; i < keep; ++i) {
            v.id_to_char_.push_back(ranked[i].first);
            v.char_to_id_.emplace(ranked[i].first, static_cast<int32_t>(tok::kNumSpecial + i));
        }
        return v;
    }

    int32_t encode(uint32_t cp) const {
        auto it = char_to_id_.find(cp);
        return it == char_to_id_.end() ? tok::kUnk : it->second;
    }

    bool contains(uint32_t cp) const { return char_to_id_.count(cp) != 0; }

    // Codepoint for a non-special id.
    uint32_t decode(int32_t id) const {
        if (id < tok::kNumSpecial || id >= size())
            throw DataError("vocab: id " + std::to_string(id) + " is not a character id");
        return id_to_char_[static_cast<size_t>(id - tok::kNumSpecial)];
    }

    int size() const { return tok::kNumSpecial + static_cast<int>(id_to_char_.size()); }
    int num_chars() const { return static_cast<int>(id_to_char_.size()); }

    // Line-oriented file format: a 6-line header naming the special tokens,
    // then one decimal codepoint per line, line k holding the character for
    // id k+6. Byte-identical output for a given vocabulary.
    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot write vocab file: " + path);
        f << "PAD\nCLS\nSEP\nMASK\nWORD_CLS\nUNK\n";
        for (uint32_t cp : id_to_char_) f << cp << "\n";
    }

    static CharVocab load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("cannot open vocab file: " + path);
        static const char* header[] = {"PAD", "CLS", "SEP", "MASK", "WORD_CLS", "UNK"};
        std::string line;
        for (const char* want : header) {
            if (!std::getline(f, line) || line != want)
                throw DataError("malformed vocab file " + path + ": expected header line '" + want + "'");
        }
        CharVocab v;
        int32_t id = tok::kNumSpecial;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            uint32_t cp = 0;
            try {
                cp = static_cast<uint32_t>(std::stoul(line));
            } catch (const std::exception&) {
                throw DataError("malformed vocab file " + path + ": bad codepoint line '" + line + "'");
            }
            if (!v.char_to_id_.emplace(cp, id).second)
                throw DataError("malformed vocab file " + path + ": duplicate codepoint " + line);
            v.id_to_char_.push_back(cp);
            ++id;
        }
        return v;
    }

  private:
    std::unordered_map<uint32_t, int32_t> char_to_id_;
    std::vector<uint32_t> id_to_char_;
};

}  // namespace hlm
