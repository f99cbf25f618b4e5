// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hlm {

// Minimal UTF-8 codec. Invalid byte sequences decode to U+FFFD one byte at a
// time; no normalization is applied anywhere (bytes as given).

inline void append_utf8(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode_utf8(const std::vector<uint32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (uint32_t cp : cps) append_utf8(out, cp);
    return out;
}

// Decodes one codepoint starting at byte i; advances i past it.
inline uint32_t next_codepoint(std::string_view s, size_t& i) {
    uint8_t b0 = static_cast<uint8_t>(s[i]);
    auto cont = [&](size_t k) {
        return i + k < s.size() && (static_cast<uint8_t>(s[i + k]) & 0xC0) == 0x80;
    };
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0 && cont(1)) {
        uint32_t cp = (static_cast<uint32_t>(b0 & 0x1F) << 6) | (static_cast<uint8_t>(s[i + 1]) & 0x3F);
        i += 2;
        return cp >= 0x80 ? cp : 0xFFFD;
    }
    if ((b0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        uint32_t cp = (static_cast<uint32_t>(b0 & 0x0F) << 12) |
                      (static_cast<uint32_t>(static_cast<uint8_t>(s[i + 1]) & 0x3F) << 6) |
                      (static_cast<uint8_t>(s[i + 2]) & 0x3F);
        i += 3;
        return cp >= 0x800 ? cp : 0xFFFD;
    }
    if ((b0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        uint32_t cp = (static_cast<uint32_t>(b0 & 0x07) << 18) |
                      (static_cast<uint32_t>(static_cast<uint8_t>(s[i + 1]) & 0x3F) << 12) |
                      (static_cast<uint32_t>(static_cast<uint8_t>(s[i + 2]) & 0x3F) << 6) |
                      (static_cast<uint8_t>(s[i + 3]) & 0x3F);
        i += 4;
        return cp >= 0x10000 && cp <= 0x10FFFF ? cp : 0xFFFD;
    }
    ++i;
    return 0xFFFD;
}

inline std::vector<uint32_t> decode_utf8(std::string_view s) {
    std::vector<uint32_t> cps;
    cps.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) cps.push_back(next_codepoint(s, i));
    return cps;
}

// Character classes used by segmentation and the perturbation generators.
// ASCII-complete; a small table covers common non-ASCII punctuation. Kept
// deliberately locale-free so results never depend on the host environment.

inline bool is_space_cp(uint32_t cp) {
    switch (cp) {
        case ' ':
        case '\t':
        case '\n':
        case '\r':
        case '\f':
        case '\v':
        case 0x00A0:
        case 0x1680:
        case 0x2028:
        case 0x2029:
        case 0x202F:
        case 0x205F:
        case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline bool is_punct_cp(uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') || (cp >= '[' && cp <= '`') ||
               (cp >= '{' && cp <= '~');
    }
    switch (cp) {
        case 0x00A1:  // inverted exclamation
        case 0x00AB:  // left guillemet
        case 0x00BB:  // right guillemet
        case 0x00BF:  // inverted question
        case 0x2010:
        case 0x2011:
        case 0x2012:
        case 0x2013:
        case 0x2014:
        case 0x2015:
        case 0x2018:
        case 0x2019:
        case 0x201A:
        case 0x201B:
        case 0x201C:
        case 0x201D:
        case 0x201E:
        case 0x2026:
        case 0x2030:
        case 0x2039:
        case 0x203A:
            return true;
        default:
            return false;
    }
}

inline bool is_ascii_letter(uint32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

inline uint32_t to_lower_ascii(uint32_t cp) { return cp >= 'A' && cp <= 'Z' ? cp + 32 : cp; }
inline uint32_t to_upper_ascii(uint32_t cp) { return cp >= 'a' && cp <= 'z' ? cp - 32 : cp; }

}  // namespace hlm
