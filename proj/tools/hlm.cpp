// SPDX-License-Identifier: Apache-2.0
//
// hlm: hierarchical character/word language model toolkit.
//
// Subcommands: build-vocab, pretrain, finetune, evaluate, perturb,
// ablate-pooling, bench-flops, bench-throughput.
// Exit codes: 0 ok, 2 usage error, 3 data error, 4 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hlm/hlm.hpp"

namespace {

using namespace hlm;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    int64_t seed = -1;  // -1 = keep config value
};

RunConfig make_run_config(const CommonOpts& opts) {
    RunConfig cfg;
    if (!opts.config_path.empty()) cfg = load_run_config(opts.config_path);
    for (const auto& ov : opts.overrides) apply_config_override(cfg, ov);
    if (opts.seed >= 0) {
        cfg.train.seed = static_cast<uint64_t>(opts.seed);
        cfg.finetune.seed = static_cast<uint64_t>(opts.seed);
    }
    cfg.model.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run configuration file (key=value with sections)");
    cmd->add_option("--set", opts.overrides, "override a config key, e.g. --set model.hidden=64")
        ->take_all();
    cmd->add_option("--seed", opts.seed, "override train/finetune seed");
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stod(item));
    }
    return out;
}

// ---------------------------------------------------------------------------

int cmd_build_vocab(const std::string& corpus_path, const std::string& out_path, int size) {
    std::ifstream corpus(corpus_path, std::ios::binary);
    if (!corpus) throw DataError("cannot open corpus: " + corpus_path);
    CharVocab vocab = build_vocab(corpus, size);
    vocab.save(out_path);
    std::cout << "vocab entries=" << vocab.num_chars() << " (capacity " << size << ") -> " << out_path
              << "\n";
    return 0;
}

int cmd_pretrain(const CommonOpts& common, const std::string& corpus_path, const std::string& vocab_path,
                 const std::string& ckpt_prefix, const std::string& metrics_path) {
    RunConfig cfg = make_run_config(common);
    CharVocab vocab = CharVocab::load(vocab_path);
    if (vocab.size() > cfg.model.vocab_size)
        throw DataError("vocab has " + std::to_string(vocab.size()) + " ids but model.vocab_size is " +
                        std::to_string(cfg.model.vocab_size));
    if (!ckpt_prefix.empty()) probe_writable(ckpt_prefix + "-final.ckpt");
    std::vector<SegmentedSequence> corpus = segment_corpus(read_lines(corpus_path), vocab);

    Rng init_rng(cfg.train.seed);
    ModelParams<float> params = ModelParams<float>::init(cfg.model, init_rng);

    std::ofstream metrics;
    std::ostream* metrics_out = nullptr;
    if (!metrics_path.empty()) {
        metrics.open(metrics_path, std::ios::binary);
        if (!metrics) throw DataError("cannot write metrics log: " + metrics_path);
        metrics_out = &metrics;
    }
    PretrainResult res = pretrain(corpus, vocab, params, cfg.model, cfg.train, metrics_out, ckpt_prefix);
    std::cout << "pretrain done: steps=" << res.steps << " first_loss=" << res.first_loss
              << " final_loss=" << res.final_loss << " final_masked_acc=" << res.final_masked_acc << "\n";
    if (res.empty_label_steps > 0)
        std::cerr << "warning: " << res.empty_label_steps << " steps had no masked labels\n";
    for (const auto& p : res.checkpoints) std::cout << "checkpoint " << p << "\n";
    return 0;
}

std::vector<LabeledExample> synthetic_examples(const std::string& task, int64_t n, uint64_t seed) {
    if (task == "entailment") return toy_entailment_dataset(n, seed);
    if (task == "classification") return toy_classification_dataset(n, seed);
    throw UsageError("unknown synthetic task: " + task + " (want entailment or classification)");
}

CharVocab vocab_from_examples(const std::vector<LabeledExample>& examples, int capacity) {
    std::stringstream ss;
    for (const auto& e : examples) {
        ss << e.text_a << "\n";
        if (!e.text_b.empty()) ss << e.text_b << "\n";
    }
    return build_vocab(ss, capacity);
}

int cmd_finetune(const CommonOpts& common, const std::string& vocab_path, const std::string& init_ckpt,
                 const std::string& train_path, const std::string& task, int64_t synthetic_n,
                 const std::string& out_path, const std::string& metrics_path) {
    RunConfig cfg = make_run_config(common);
    std::vector<LabeledExample> train =
        train_path.empty() ? synthetic_examples(task, synthetic_n, cfg.finetune.seed)
                           : read_tsv_examples(train_path);

    CharVocab vocab;
    if (!vocab_path.empty()) {
        vocab = CharVocab::load(vocab_path);
    } else if (train_path.empty()) {
        vocab = vocab_from_examples(train, static_cast<int>(cfg.model.vocab_size));
    } else {
        throw UsageError("finetune: --vocab is required with --train data");
    }

    if (!out_path.empty()) probe_writable(out_path);
    Rng init_rng(cfg.finetune.seed + 17);
    ModelParams<float> params = ModelParams<float>::init(cfg.model, init_rng);
    if (!init_ckpt.empty()) {
        Checkpoint c = load_checkpoint(init_ckpt);
        load_model(params, c, init_ckpt);
    }
    ClassifierParams<float> clf =
        ClassifierParams<float>::init(cfg.model.hidden, cfg.finetune.num_classes, init_rng);

    std::ofstream metrics;
    std::ostream* metrics_out = nullptr;
    if (!metrics_path.empty()) {
        metrics.open(metrics_path, std::ios::binary);
        if (!metrics) throw DataError("cannot write metrics log: " + metrics_path);
        metrics_out = &metrics;
    }
    FinetuneResult res = finetune_classifier(train, vocab, params, clf, cfg.model, cfg.finetune, metrics_out);
    std::cout << "finetune done: steps=" << res.steps << " final_loss=" << res.final_loss
              << " train_acc=" << res.train_accuracy << "\n";
    if (!out_path.empty()) {
        std::vector<std::pair<std::string, TensorBlob>> extra;
        extra.emplace_back("classifier.w", to_blob(clf.w));
        extra.emplace_back("classifier.b", to_blob(clf.b));
        save_model(out_path, params, cfg.model,
                   {{"finetune.num_classes", std::to_string(cfg.finetune.num_classes)}}, std::move(extra));
        std::cout << "checkpoint " << out_path << "\n";
        std::string vocab_out = out_path + ".vocab";
        vocab.save(vocab_out);
        std::cout << "vocab " << vocab_out << "\n";
    }
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& vocab_path, const std::string& data_path,
                 const std::string& perturb_kind, double rate, int64_t pseed, const std::string& fields_csv,
                 int64_t synthetic_n, const std::string& task) {
    Checkpoint c = load_checkpoint(ckpt_path);
    ModelConfig mcfg = config_from_meta(c, ckpt_path);
    Rng dummy(0);
    ModelParams<float> params = ModelParams<float>::init(mcfg, dummy);
    load_model(params, c, ckpt_path);
    auto wit = c.tensors.find("classifier.w");
    auto bit = c.tensors.find("classifier.b");
    if (wit == c.tensors.end() || bit == c.tensors.end())
        throw DataError("checkpoint " + ckpt_path + " has no classifier head (run finetune first)");
    ClassifierParams<float> clf;
    clf.w = Tensor<float>::zeros(wit->second.shape);
    clf.b = Tensor<float>::zeros(bit->second.shape);
    from_blob(clf.w, wit->second, "classifier.w");
    from_blob(clf.b, bit->second, "classifier.b");

    std::string vpath = vocab_path.empty() ? ckpt_path + ".vocab" : vocab_path;
    CharVocab vocab = CharVocab::load(vpath);

    std::vector<LabeledExample> data;
    if (!data_path.empty()) {
        std::vector<std::string> lines = read_lines(data_path);
        if (!perturb_kind.empty()) {
            // unseen-noise mode: corrupt only what we evaluate on
            PerturbSpec spec;
            spec.kind = perturb_kind_from_string(perturb_kind);
            spec.rate = rate;
            spec.seed = static_cast<uint64_t>(pseed);
            spec.apply_to = PerturbSpec::ApplyTo::eval_only;
            std::vector<int> fields = fields_csv.empty() ? std::vector<int>{} : parse_int_list(fields_csv);
            if (fields.empty()) {
                // default: every text field, never the trailing label
                std::vector<LabeledExample> parsed = parse_tsv_examples(lines, data_path);
                for (size_t i = 0; i < parsed.size(); ++i) {
                    Rng rng(Rng::derive(spec.seed, i));
                    parsed[i].text_a = perturb_text(parsed[i].text_a, spec, rng);
                    if (!parsed[i].text_b.empty()) parsed[i].text_b = perturb_text(parsed[i].text_b, spec, rng);
                }
                data = std::move(parsed);
            } else {
                lines = perturb_tsv_lines(lines, spec, fields);
                data = parse_tsv_examples(lines, data_path);
            }
        } else {
            data = parse_tsv_examples(lines, data_path);
        }
    } else {
        data = synthetic_examples(task, synthetic_n, static_cast<uint64_t>(pseed) + 101);
        if (!perturb_kind.empty()) {
            PerturbSpec spec;
            spec.kind = perturb_kind_from_string(perturb_kind);
            spec.rate = rate;
            spec.seed = static_cast<uint64_t>(pseed);
            for (size_t i = 0; i < data.size(); ++i) {
                Rng rng(Rng::derive(spec.seed, i));
                data[i].text_a = perturb_text(data[i].text_a, spec, rng);
                if (!data[i].text_b.empty()) data[i].text_b = perturb_text(data[i].text_b, spec, rng);
            }
        }
    }

    double acc = evaluate_classifier(data, vocab, params, clf, mcfg);
    std::cout << "examples=" << data.size() << " accuracy=" << acc << "\n";
    return 0;
}

int cmd_perturb(const std::string& kind, double rate, const std::string& rates_csv, int64_t seed,
                const std::string& in_path, const std::string& out_path, const std::string& fields_csv,
                const std::string& manifest_path) {
    std::vector<std::string> lines = read_lines(in_path);
    std::vector<int> fields = fields_csv.empty() ? std::vector<int>{} : parse_int_list(fields_csv);

    if (!rates_csv.empty()) {
        std::vector<double> rates = parse_double_list(rates_csv);
        auto outputs = sweep(lines, rates, static_cast<uint64_t>(seed));
        for (const auto& o : outputs) {
            char tag[32];
            std::snprintf(tag, sizeof(tag), "%.6g", o.rate);
            std::string path = out_path + ".rate" + tag;
            write_lines(path, o.lines);
            PerturbSpec spec;
            spec.kind = PerturbSpec::Kind::mixed;
            spec.rate = o.rate;
            spec.seed = static_cast<uint64_t>(seed);
            write_perturb_manifest(path + ".manifest", spec, in_path, path, fields);
            std::cout << "rate=" << o.rate << " -> " << path << "\n";
        }
        return 0;
    }

    PerturbSpec spec;
    spec.kind = perturb_kind_from_string(kind);
    spec.rate = rate;
    spec.seed = static_cast<uint64_t>(seed);
    spec.validate();
    std::vector<std::string> out =
        fields.empty() ? perturb_lines(lines, spec) : perturb_tsv_lines(lines, spec, fields);
    write_lines(out_path, out);
    std::string mpath = manifest_path.empty() ? out_path + ".manifest" : manifest_path;
    write_perturb_manifest(mpath, spec, in_path, out_path, fields);
    std::cout << "perturbed " << lines.size() << " lines -> " << out_path << " (manifest " << mpath << ")\n";
    return 0;
}

int cmd_ablate(const CommonOpts& common, int64_t train_n, int64_t eval_n, const std::string& init_ckpt) {
    RunConfig cfg = make_run_config(common);
    std::vector<LabeledExample> train = toy_entailment_dataset(train_n, cfg.finetune.seed);
    std::vector<LabeledExample> eval = toy_entailment_dataset(eval_n, cfg.finetune.seed + 1);
    CharVocab vocab = vocab_from_examples(train, static_cast<int>(cfg.model.vocab_size));

    Checkpoint init;
    const Checkpoint* init_ptr = nullptr;
    if (!init_ckpt.empty()) {
        init = load_checkpoint(init_ckpt);
        init_ptr = &init;
    }
    auto rows = ablate_pooling<float>(train, eval, vocab, cfg.model, cfg.finetune, init_ptr);
    std::cout << "aggregation  accuracy\n";
    for (const auto& row : rows) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%-11s  %.4f", to_string(row.mode), row.accuracy);
        std::cout << buf << "\n";
    }
    return 0;
}

int cmd_bench_flops(const CommonOpts& common, const std::string& n_csv, const std::string& m_csv,
                    const std::string& csv_path) {
    RunConfig cfg = make_run_config(common);
    std::vector<int> ns = parse_int_list(n_csv);
    std::vector<int> ms = parse_int_list(m_csv);
    std::ostringstream csv;
    csv << "N,M,intra_per_layer,inter_per_layer,dense_per_layer,predicted_intra,predicted_inter,"
           "predicted_dense,ratio_intra,ratio_inter,ratio_dense\n";
    for (int m : ms) {
        for (int n : ns) {
            if (n % m != 0) continue;
            CostReport r = count_attention_flops(cfg.model, n, m);
            bool exact = r.measured_intra == r.predicted_intra && r.measured_inter == r.predicted_inter &&
                         r.measured_dense == r.predicted_dense;
            std::cout << "N=" << n << " M=" << m << " intra=" << r.measured_intra << "/" << r.predicted_intra
                      << " inter=" << r.measured_inter << "/" << r.predicted_inter << " dense="
                      << r.measured_dense << "/" << r.predicted_dense << (exact ? " exact" : " MISMATCH")
                      << "\n";
            csv << n << "," << m << "," << r.measured_intra << "," << r.measured_inter << ","
                << r.measured_dense << "," << r.predicted_intra << "," << r.predicted_inter << ","
                << r.predicted_dense << "," << r.ratio_intra << "," << r.ratio_inter << "," << r.ratio_dense
                << "\n";
        }
    }
    if (!csv_path.empty()) {
        write_file(csv_path, csv.str());
        std::cout << "csv -> " << csv_path << "\n";
    }
    return 0;
}

int cmd_bench_throughput(const CommonOpts& common, int64_t n, int64_t m, int64_t batch, int reps,
                         bool multithread) {
    RunConfig cfg = make_run_config(common);
    ThroughputReport r = bench_throughput(cfg.model, n, m, batch, reps, cfg.train.seed + 1, multithread);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "N=%lld M=%lld batch=%lld reps=%d threads=%s\n"
                  "hierarchical  %.3f +- %.3f samples/sec\n"
                  "dense         %.3f +- %.3f samples/sec\n"
                  "config=%s build=%s\n",
                  static_cast<long long>(r.n), static_cast<long long>(r.m),
                  static_cast<long long>(r.batch), r.reps, multithread ? "multi" : "1", r.hier.mean_sps,
                  r.hier.std_sps, r.dense.mean_sps, r.dense.std_sps, r.fingerprint.c_str(),
                  r.build.c_str());
    std::cout << buf;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical character/word language model toolkit"};
    app.require_subcommand(1);

    // build-vocab
    auto* sc_vocab = app.add_subcommand("build-vocab", "build a character vocabulary from a corpus");
    std::string bv_corpus, bv_out;
    int bv_size = 1024;
    sc_vocab->add_option("--corpus", bv_corpus, "UTF-8 corpus, one sentence per line")->required();
    sc_vocab->add_option("--out", bv_out, "vocabulary output path")->required();
    sc_vocab->add_option("--size", bv_size, "vocabulary capacity including special ids");

    // pretrain
    auto* sc_pre = app.add_subcommand("pretrain", "whole-word masked character pre-training");
    CommonOpts pre_common;
    add_common(sc_pre, pre_common);
    std::string pre_corpus, pre_vocab, pre_ckpt, pre_metrics;
    sc_pre->add_option("--corpus", pre_corpus, "training corpus")->required();
    sc_pre->add_option("--vocab", pre_vocab, "vocabulary file")->required();
    sc_pre->add_option("--checkpoint", pre_ckpt, "checkpoint path prefix");
    sc_pre->add_option("--metrics", pre_metrics, "per-step metrics log path");

    // finetune
    auto* sc_ft = app.add_subcommand("finetune", "fine-tune a classification head");
    CommonOpts ft_common;
    add_common(sc_ft, ft_common);
    std::string ft_vocab, ft_init, ft_train, ft_task = "entailment", ft_out, ft_metrics;
    int64_t ft_synth = 512;
    sc_ft->add_option("--vocab", ft_vocab, "vocabulary file");
    sc_ft->add_option("--checkpoint", ft_init, "initialize encoder from this checkpoint");
    sc_ft->add_option("--train", ft_train, "training TSV (text [tab text] tab label)");
    sc_ft->add_option("--task", ft_task, "synthetic task when no --train: entailment|classification");
    sc_ft->add_option("--synthetic", ft_synth, "synthetic training examples");
    sc_ft->add_option("--out", ft_out, "output checkpoint path");
    sc_ft->add_option("--metrics", ft_metrics, "per-step metrics log path");

    // evaluate
    auto* sc_ev = app.add_subcommand("evaluate", "evaluate a fine-tuned checkpoint");
    std::string ev_ckpt, ev_vocab, ev_data, ev_perturb, ev_fields, ev_task = "entailment";
    double ev_rate = 0.1;
    int64_t ev_pseed = 0, ev_synth = 256;
    sc_ev->add_option("--checkpoint", ev_ckpt, "fine-tuned checkpoint")->required();
    sc_ev->add_option("--vocab", ev_vocab, "vocabulary (defaults to <checkpoint>.vocab)");
    sc_ev->add_option("--data", ev_data, "evaluation TSV");
    sc_ev->add_option("--task", ev_task, "synthetic eval task when no --data");
    sc_ev->add_option("--synthetic", ev_synth, "synthetic eval examples");
    sc_ev->add_option("--perturb", ev_perturb, "corrupt eval text first: drop|repeat|case|mixed");
    sc_ev->add_option("--rate", ev_rate, "perturbation rate");
    sc_ev->add_option("--perturb-seed", ev_pseed, "perturbation seed");
    sc_ev->add_option("--fields", ev_fields, "comma-separated TSV field indices to perturb");

    // perturb
    auto* sc_pt = app.add_subcommand("perturb", "corrupt a text or TSV dataset");
    std::string pt_kind = "drop", pt_rates, pt_in, pt_out, pt_fields, pt_manifest;
    double pt_rate = 0.1;
    int64_t pt_seed = 0;
    sc_pt->add_option("--kind", pt_kind, "drop|repeat|case|mixed");
    sc_pt->add_option("--rate", pt_rate, "fraction of characters");
    sc_pt->add_option("--rates", pt_rates, "comma-separated rates: run the mixed sweep");
    sc_pt->add_option("--seed", pt_seed, "perturbation seed");
    sc_pt->add_option("--in", pt_in, "input file")->required();
    sc_pt->add_option("--out", pt_out, "output file")->required();
    sc_pt->add_option("--fields", pt_fields, "comma-separated TSV field indices to perturb");
    sc_pt->add_option("--manifest", pt_manifest, "manifest path (default <out>.manifest)");

    // ablate-pooling
    auto* sc_ab = app.add_subcommand("ablate-pooling", "compare word_cls/mean/max aggregation");
    CommonOpts ab_common;
    add_common(sc_ab, ab_common);
    int64_t ab_train = 256, ab_eval = 128;
    std::string ab_init;
    sc_ab->add_option("--train-examples", ab_train, "synthetic training examples");
    sc_ab->add_option("--eval-examples", ab_eval, "synthetic eval examples");
    sc_ab->add_option("--checkpoint", ab_init, "initialize encoders from this checkpoint");

    // bench-flops
    auto* sc_bf = app.add_subcommand("bench-flops", "exact attention cost counting");
    CommonOpts bf_common;
    add_common(sc_bf, bf_common);
    std::string bf_n = "256,512,1024,2048", bf_m = "4,8,16", bf_csv;
    sc_bf->add_option("--n", bf_n, "comma-separated character lengths");
    sc_bf->add_option("--m", bf_m, "comma-separated uniform word lengths");
    sc_bf->add_option("--csv", bf_csv, "write a CSV report");

    // bench-throughput
    auto* sc_bt = app.add_subcommand("bench-throughput", "hierarchical vs dense forward throughput");
    CommonOpts bt_common;
    add_common(sc_bt, bt_common);
    int64_t bt_n = 2048, bt_m = 8, bt_batch = 32;
    int bt_reps = 5;
    bool bt_multi = false;
    sc_bt->add_option("--n", bt_n, "characters per sequence");
    sc_bt->add_option("--m", bt_m, "uniform word length");
    sc_bt->add_option("--batch", bt_batch, "batch size");
    sc_bt->add_option("--reps", bt_reps, "timed repetitions");
    sc_bt->add_flag("--multithread", bt_multi, "allow multi-threaded kernels (timings become indicative)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (*sc_vocab) return cmd_build_vocab(bv_corpus, bv_out, bv_size);
        if (*sc_pre) return cmd_pretrain(pre_common, pre_corpus, pre_vocab, pre_ckpt, pre_metrics);
        if (*sc_ft)
            return cmd_finetune(ft_common, ft_vocab, ft_init, ft_train, ft_task, ft_synth, ft_out,
                                ft_metrics);
        if (*sc_ev)
            return cmd_evaluate(ev_ckpt, ev_vocab, ev_data, ev_perturb, ev_rate, ev_pseed, ev_fields,
                                ev_synth, ev_task);
        if (*sc_pt) return cmd_perturb(pt_kind, pt_rate, pt_rates, pt_seed, pt_in, pt_out, pt_fields,
                                       pt_manifest);
        if (*sc_ab) return cmd_ablate(ab_common, ab_train, ab_eval, ab_init);
        if (*sc_bf) return cmd_bench_flops(bf_common, bf_n, bf_m, bf_csv);
        if (*sc_bt) return cmd_bench_throughput(bt_common, bt_n, bt_m, bt_batch, bt_reps, bt_multi);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
