#include "alkd/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "alkd/checkpoint.hpp"
#include "alkd/config.hpp"
#include "alkd/finetune.hpp"
#include "alkd/metrics.hpp"
#include "alkd/synth.hpp"
#include "alkd/teacher_store.hpp"
#include "alkd/training.hpp"

namespace alkd {
namespace {

namespace fs = std::filesystem;

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool timing = false;
};

void add_config_options(CLI::App* cmd, Common& c, std::initializer_list<std::string> sections) {
    cmd->add_option("--config", c.config_path, "JSON or TOML-style config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.overrides, "override a config key: key=value (repeatable)");
    RunConfig defaults;
    cmd->footer("Config keys (default, published value where stated):\n" + describe_keys(defaults, sections));
}

void add_run_options(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "run seed");
    cmd->add_option("--threads", c.threads, "worker threads for large kernels")->check(CLI::PositiveNumber);
}

RunConfig resolve(const Common& c) {
    RunConfig run = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
    for (const auto& o : c.overrides) {
        const auto [k, v] = split_override(o);
        apply_setting(run, k, v);
    }
    if (c.seed) run.train.seed = *c.seed;
    return run;
}

void apply_numerics(const Common& c) {
    numerics().threads = c.threads;
    numerics().deterministic = !c.timing;
}

bool is_store_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    return in.gcount() == 4 && std::string_view(magic, 4) == std::string_view(EmbeddingStore::kMagic, 4);
}

std::vector<std::string> corpus_lines(const std::string& path) {
    std::vector<std::string> lines;
    if (is_store_file(path)) {
        for (const auto& r : read_store(path).records) lines.push_back(r.transcript);
    } else {
        for (const auto& r : read_records(path)) lines.push_back(r.text);
    }
    return lines;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"alkd: audio-language knowledge distillation for a small text encoder"};
    app.require_subcommand(1, 1);
    Common common;

    // build-vocab
    std::string vocab_corpus, vocab_out;
    std::size_t vocab_size = 1000;
    auto* build_vocab = app.add_subcommand("build-vocab", "induce a frequency-ranked vocabulary");
    build_vocab->add_option("--corpus", vocab_corpus, "JSONL records or an ALKD store")->required();
    build_vocab->add_option("--size", vocab_size, "target vocabulary size including reserved tokens");
    build_vocab->add_option("--out", vocab_out, "vocabulary file (one token per line)")->required();

    // synth-teacher
    SynthOptions synth;
    std::string synth_out, synth_dataset_out, synth_probe_out;
    std::size_t probe_per_class = 0;
    auto* synth_cmd = app.add_subcommand("synth-teacher", "generate a synthetic ALKD store with paired transcripts");
    synth_cmd->add_option("--classes", synth.classes, "latent classes");
    synth_cmd->add_option("--per-class", synth.per_class, "records per class");
    synth_cmd->add_option("--dim", synth.dim, "teacher dimension");
    synth_cmd->add_option("--noise", synth.noise, "Gaussian noise scale around class anchors");
    synth_cmd->add_option("--seed", synth.seed, "generator seed");
    synth_cmd->add_option("--out", synth_out, "output store")->required();
    synth_cmd->add_option("--dataset-out", synth_dataset_out, "labelled JSONL of the same transcripts");
    synth_cmd->add_option("--probe-out", synth_probe_out, "held-out labelled JSONL");
    synth_cmd->add_option("--probe-per-class", probe_per_class, "held-out records per class");

    // pretrain
    std::string pt_store, pt_vocab, pt_out_dir, pt_log, pt_resume;
    std::size_t pt_vocab_size = 0;
    auto* pretrain_cmd = app.add_subcommand("pretrain", "MLM + KD pretraining against a teacher store");
    pretrain_cmd->add_option("--store", pt_store, "ALKD store")->required()->check(CLI::ExistingFile);
    pretrain_cmd->add_option("--vocab", pt_vocab, "vocabulary file")->check(CLI::ExistingFile);
    pretrain_cmd->add_option("--vocab-size", pt_vocab_size, "induce a vocabulary of this size from the store");
    pretrain_cmd->add_option("--out-dir", pt_out_dir, "checkpoint directory")->required();
    pretrain_cmd->add_option("--log", pt_log, "metrics log (default: <out-dir>/metrics.jsonl)");
    pretrain_cmd->add_option("--resume", pt_resume, "resume from a checkpoint")->check(CLI::ExistingFile);
    pretrain_cmd->add_flag("--timing", common.timing, "log tokens_per_s (makes logs non-reproducible)");
    add_config_options(pretrain_cmd, common, {"model", "train"});
    add_run_options(pretrain_cmd, common);

    // finetune
    std::string ft_ckpt, ft_train, ft_out;
    auto* finetune_cmd = app.add_subcommand("finetune", "fine-tune a pretrained checkpoint on one task");
    finetune_cmd->add_option("--checkpoint", ft_ckpt, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
    finetune_cmd->add_option("--train", ft_train, "labelled JSONL")->required()->check(CLI::ExistingFile);
    finetune_cmd->add_option("--out", ft_out, "fine-tuned checkpoint")->required();
    add_config_options(finetune_cmd, common, {"finetune"});
    add_run_options(finetune_cmd, common);

    // evaluate
    std::string ev_ckpt, ev_train, ev_test, ev_out;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "fine-tune over seeds and report test metrics");
    evaluate_cmd->add_option("--checkpoint", ev_ckpt, "pretrained or fine-tuned checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--train", ev_train, "labelled JSONL (not needed for a fine-tuned checkpoint)")
        ->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--test", ev_test, "labelled JSONL")->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--out", ev_out, "report JSON")->required();
    add_config_options(evaluate_cmd, common, {"finetune"});
    add_run_options(evaluate_cmd, common);

    // inspect-store
    std::string inspect_path;
    std::size_t inspect_limit = 5;
    auto* inspect_cmd = app.add_subcommand("inspect-store", "print a store's header and sample ids");
    inspect_cmd->add_option("--path", inspect_path, "ALKD store")->required()->check(CLI::ExistingFile);
    inspect_cmd->add_option("--limit", inspect_limit, "ids to print");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (build_vocab->parsed()) {
            const auto vocab = induce_vocab(corpus_lines(vocab_corpus), vocab_size);
            vocab.save(vocab_out);
            out << "vocabulary: " << vocab.size() << " tokens -> " << vocab_out << '\n';
        } else if (synth_cmd->parsed()) {
            const auto corpus = synth_corpus(synth);
            write_store(corpus.store, synth_out);
            if (!synth_dataset_out.empty()) write_records(corpus.records, synth_dataset_out);
            if (!synth_probe_out.empty()) {
                if (probe_per_class == 0) probe_per_class = synth.per_class;
                write_records(synth_records(synth, probe_per_class, 1), synth_probe_out);
            }
            out << "store: " << corpus.store.count() << " records, dim " << corpus.store.dim << " -> " << synth_out
                << '\n';
        } else if (pretrain_cmd->parsed()) {
            apply_numerics(common);
            RunConfig run = resolve(common);
            const auto store = read_store(pt_store);
            PretrainOutputs outputs;
            outputs.out_dir = pt_out_dir;
            outputs.metrics_log_path = pt_log.empty() ? (fs::path(pt_out_dir) / "metrics.jsonl").string() : pt_log;
            fs::create_directories(pt_out_dir);
            PretrainResult result;
            if (!pt_resume.empty()) {
                Pretrainer trainer(store, load_checkpoint(pt_resume), run.train);
                result = run_pretrainer(trainer, outputs);
            } else {
                Vocab vocab;
                if (!pt_vocab.empty()) {
                    vocab = Vocab::load(pt_vocab);
                } else if (pt_vocab_size != 0) {
                    std::vector<std::string> lines;
                    for (const auto& r : store.records) lines.push_back(r.transcript);
                    vocab = induce_vocab(lines, pt_vocab_size);
                } else {
                    throw ConfigError("pretrain needs --vocab or --vocab-size");
                }
                vocab.save((fs::path(pt_out_dir) / "vocab.txt").string());
                run.model.teacher_dim = store.dim;
                if (run.model.vocab_size == 0) run.model.vocab_size = vocab.size();
                Pretrainer trainer(store, vocab, run.train, run.model);
                result = run_pretrainer(trainer, outputs);
            }
            const auto& last = result.history.empty() ? StepLog{} : result.history.back();
            out << "pretrained " << result.final_checkpoint.step << " steps; final total " << last.loss.total << " -> "
                << (fs::path(pt_out_dir) / "final.alkc").string() << '\n';
        } else if (finetune_cmd->parsed()) {
            apply_numerics(common);
            const RunConfig run = resolve(common);
            const auto model = finetune(load_checkpoint(ft_ckpt), read_records(ft_train), run.finetune, run.train.seed);
            save_checkpoint(to_checkpoint(model), ft_out);
            out << "fine-tuned " << model.task.name() << " -> " << ft_out << '\n';
        } else if (evaluate_cmd->parsed()) {
            apply_numerics(common);
            const RunConfig run = resolve(common);
            const auto ckpt = load_checkpoint(ev_ckpt);
            const auto test = read_records(ev_test);
            std::vector<MetricsReport> reports;
            if (is_finetuned(ckpt)) {
                const auto model = from_checkpoint(ckpt);
                MetricsReport r;
                r.task = model.task.name();
                r.seeds = {run.train.seed};
                for (const auto& [name, v] : task_metrics(model.task, predict(model, test), test)) {
                    MetricSeries m{name, {v}, {}, {}, {}};
                    m.finalize();
                    r.metrics.push_back(m);
                }
                reports.push_back(r);
            } else {
                if (ev_train.empty()) throw ConfigError("evaluate needs --train for a pretrained checkpoint");
                reports = evaluate(ckpt, read_records(ev_train), test, run.finetune, run.train.seed);
            }
            std::ofstream f(ev_out, std::ios::trunc);
            if (!f) throw DataError("cannot open " + ev_out + " for writing");
            f << reports_to_json(reports) << '\n';
            for (const auto& r : reports) {
                out << r.task << ':';
                for (const auto& m : r.metrics) {
                    out << ' ' << m.name << '=';
                    if (m.mean) {
                        out << *m.mean << "±" << *m.std;
                    } else {
                        out << "undefined";
                    }
                }
                out << '\n';
            }
        } else if (inspect_cmd->parsed()) {
            const auto store = read_store(inspect_path);
            out << "dim: " << store.dim << "\ncount: " << store.count() << "\nids:";
            for (std::size_t i = 0; i < std::min(inspect_limit, store.count()); ++i) {
                out << ' ' << store.records[i].sample_id;
            }
            out << '\n';
        }
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}

}  // namespace alkd
