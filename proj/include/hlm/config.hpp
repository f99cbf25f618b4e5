// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "hlm/finetune.hpp"
#include "hlm/io.hpp"
#include "hlm/model.hpp"
#include "hlm/pretrain.hpp"

namespace hlm {

// Flat key=value run configuration with [model] / [train] / [finetune]
// sections. Unknown and duplicate keys are rejected, and a config always
// round-trips losslessly through serialize + parse.

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    FinetuneConfig finetune;
};

namespace cfgdetail {

inline int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int64_t r = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' wants an integer, got '" + v + "'");
    }
}

inline uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        uint64_t r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' wants an unsigned integer, got '" + v + "'");
    }
}

inline double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return r;
    } catch (const std::exception&) {
        throw UsageError("config: key '" + key + "' wants a number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw UsageError("config: key '" + key + "' wants a boolean (0/1/true/false), got '" + v + "'");
}

inline std::string fmt_f64(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = []() {
        std::vector<Field> f;
        auto add_i64 = [&f](const std::string& key, auto get_ref) {
            f.push_back({key,
                         [key, get_ref](RunConfig& c, const std::string& v) { get_ref(c) = to_i64(key, v); },
                         [get_ref](const RunConfig& c) {
                             return std::to_string(get_ref(const_cast<RunConfig&>(c)));
                         }});
        };
        auto add_u64 = [&f](const std::string& key, auto get_ref) {
            f.push_back({key,
                         [key, get_ref](RunConfig& c, const std::string& v) { get_ref(c) = to_u64(key, v); },
                         [get_ref](const RunConfig& c) {
                             return std::to_string(get_ref(const_cast<RunConfig&>(c)));
                         }});
        };
        auto add_f64 = [&f](const std::string& key, auto get_ref) {
            f.push_back({key,
                         [key, get_ref](RunConfig& c, const std::string& v) { get_ref(c) = to_f64(key, v); },
                         [get_ref](const RunConfig& c) {
                             return fmt_f64(get_ref(const_cast<RunConfig&>(c)));
                         }});
        };
        auto add_bool = [&f](const std::string& key, auto get_ref) {
            f.push_back({key,
                         [key, get_ref](RunConfig& c, const std::string& v) { get_ref(c) = to_bool(key, v); },
                         [get_ref](const RunConfig& c) {
                             return get_ref(const_cast<RunConfig&>(c)) ? "1" : "0";
                         }});
        };

        add_i64("model.hidden", [](RunConfig& c) -> int64_t& { return c.model.hidden; });
        add_i64("model.heads", [](RunConfig& c) -> int64_t& { return c.model.heads; });
        add_i64("model.intra_layers", [](RunConfig& c) -> int64_t& { return c.model.intra_layers; });
        add_i64("model.inter_layers", [](RunConfig& c) -> int64_t& { return c.model.inter_layers; });
        add_i64("model.head_layers", [](RunConfig& c) -> int64_t& { return c.model.head_layers; });
        add_i64("model.intra_ff", [](RunConfig& c) -> int64_t& { return c.model.intra_ff; });
        add_i64("model.inter_ff", [](RunConfig& c) -> int64_t& { return c.model.inter_ff; });
        add_i64("model.vocab_size", [](RunConfig& c) -> int64_t& { return c.model.vocab_size; });
        add_i64("model.max_chars", [](RunConfig& c) -> int64_t& { return c.model.max_chars; });
        add_i64("model.max_words", [](RunConfig& c) -> int64_t& { return c.model.max_words; });
        add_f64("model.dropout", [](RunConfig& c) -> double& { return c.model.dropout; });
        f.push_back({"model.aggregation",
                     [](RunConfig& c, const std::string& v) { c.model.aggregation = aggregation_from_string(v); },
                     [](const RunConfig& c) { return std::string(to_string(c.model.aggregation)); }});
        add_i64("model.rel_pos_clip_intra", [](RunConfig& c) -> int64_t& { return c.model.rel_pos_clip_intra; });
        add_i64("model.rel_pos_clip_inter", [](RunConfig& c) -> int64_t& { return c.model.rel_pos_clip_inter; });
        add_bool("model.word_residual", [](RunConfig& c) -> bool& { return c.model.word_residual; });
        add_i64("model.fusion_layers", [](RunConfig& c) -> int64_t& { return c.model.fusion_layers; });
        add_i64("model.pad_multiple", [](RunConfig& c) -> int64_t& { return c.model.pad_multiple; });

        add_f64("train.lr", [](RunConfig& c) -> double& { return c.train.lr; });
        add_i64("train.warmup_steps", [](RunConfig& c) -> int64_t& { return c.train.warmup_steps; });
        add_f64("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; });
        add_i64("train.batch_size", [](RunConfig& c) -> int64_t& { return c.train.batch_size; });
        add_i64("train.total_steps", [](RunConfig& c) -> int64_t& { return c.train.total_steps; });
        add_u64("train.seed", [](RunConfig& c) -> uint64_t& { return c.train.seed; });
        add_f64("train.mask_ratio", [](RunConfig& c) -> double& { return c.train.mask_ratio; });
        add_f64("train.prob_mask", [](RunConfig& c) -> double& { return c.train.prob_mask; });
        add_f64("train.prob_random", [](RunConfig& c) -> double& { return c.train.prob_random; });
        add_f64("train.prob_keep", [](RunConfig& c) -> double& { return c.train.prob_keep; });
        add_f64("train.beta1", [](RunConfig& c) -> double& { return c.train.beta1; });
        add_f64("train.beta2", [](RunConfig& c) -> double& { return c.train.beta2; });
        add_f64("train.adam_eps", [](RunConfig& c) -> double& { return c.train.adam_eps; });
        add_i64("train.checkpoint_every", [](RunConfig& c) -> int64_t& { return c.train.checkpoint_every; });

        add_i64("finetune.num_classes", [](RunConfig& c) -> int64_t& { return c.finetune.num_classes; });
        add_i64("finetune.steps", [](RunConfig& c) -> int64_t& { return c.finetune.steps; });
        add_f64("finetune.lr", [](RunConfig& c) -> double& { return c.finetune.lr; });
        add_i64("finetune.batch_size", [](RunConfig& c) -> int64_t& { return c.finetune.batch_size; });
        add_i64("finetune.warmup_steps", [](RunConfig& c) -> int64_t& { return c.finetune.warmup_steps; });
        add_f64("finetune.weight_decay", [](RunConfig& c) -> double& { return c.finetune.weight_decay; });
        add_u64("finetune.seed", [](RunConfig& c) -> uint64_t& { return c.finetune.seed; });
        return f;
    }();
    return table;
}

inline const Field& find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw UsageError("config: unknown key '" + key + "'");
}

}  // namespace cfgdetail

// Parses "[section]" headers plus key=value lines into section-qualified
// entries. '#' starts a comment; blank lines are skipped.
inline std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                          const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string section;
    size_t pos = 0;
    int lineno = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) {
            if (pos > text.size()) break;
            continue;
        }
        line = line.substr(start);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw UsageError(origin + ":" + std::to_string(lineno) + ": malformed section header '" + line + "'");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        size_t vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        if (key.empty()) throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
        entries.emplace_back(section.empty() ? key : section + "." + key, value);
    }
    return entries;
}

inline void apply_config_entries(RunConfig& cfg,
                                 const std::vector<std::pair<std::string, std::string>>& entries) {
    std::vector<std::string> seen;
    for (const auto& [key, value] : entries) {
        for (const auto& s : seen)
            if (s == key) throw UsageError("config: duplicate key '" + key + "'");
        seen.push_back(key);
        cfgdetail::find_field(key).set(cfg, value);
    }
}

// One "section.key=value" override (the --set flag).
inline void apply_config_override(RunConfig& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("--set wants key=value, got '" + assignment + "'");
    cfgdetail::find_field(assignment.substr(0, eq)).set(cfg, assignment.substr(eq + 1));
}

// Canonical serialized form: every key, grouped by section, fixed order.
inline std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& f : cfgdetail::fields()) {
        size_t dot = f.key.find('.');
        std::string sec = f.key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += f.key.substr(dot + 1) + "=" + f.get(cfg) + "\n";
    }
    return out;
}

inline RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    apply_config_entries(cfg, parse_config_text(read_file(path), path));
    return cfg;
}

}  // namespace hlm
