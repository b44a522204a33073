#include "alkd/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "alkd/ops.hpp"
#include "alkd/optimizer.hpp"

namespace alkd {

std::string Task::name() const {
    switch (kind) {
        case TaskKind::sentiment_regression: return "sentiment_regression";
        case TaskKind::sentiment_class: {
            const auto s = to_string(scheme);
            return "sentiment_class_" + s.substr(0, 1);
        }
        case TaskKind::emotion_binary: return emotion.empty() ? "emotion_binary" : "emotion_binary:" + emotion;
    }
    return "?";
}

std::size_t Task::outputs() const {
    switch (kind) {
        case TaskKind::sentiment_regression: return 1;
        case TaskKind::emotion_binary: return 2;
        case TaskKind::sentiment_class:
            switch (scheme) {
                case BinScheme::seven: return 7;
                case BinScheme::five: return 5;
                case BinScheme::three: return 3;
                default: return 2;
            }
    }
    return 1;
}

namespace {

int class_offset(BinScheme scheme) {
    switch (scheme) {
        case BinScheme::seven: return 3;
        case BinScheme::five: return 2;
        case BinScheme::three: return 1;
        default: return 0;
    }
}

}  // namespace

double Task::target(const Record& record) const {
    if (kind == TaskKind::emotion_binary) {
        auto it = record.labels.find(emotion);
        if (it == record.labels.end()) {
            throw DataError("record '" + record.id + "' has no '" + emotion + "' label");
        }
        if (it->second != 0.0 && it->second != 1.0) {
            throw DataError("record '" + record.id + "': label '" + emotion + "' must be 0 or 1");
        }
        return it->second;
    }
    if (!record.label) throw DataError("record '" + record.id + "' has no sentiment label");
    if (kind == TaskKind::sentiment_regression) return *record.label;
    std::optional<int> cls;
    try {
        cls = bin_sentiment(*record.label, scheme);
    } catch (const MetricError& e) {
        throw DataError("record '" + record.id + "': " + e.what());
    }
    return static_cast<double>(*cls + class_offset(scheme));
}

Task parse_task(const std::string& name, const std::string& emotion) {
    Task t;
    if (name == "sentiment_regression") {
        t.kind = TaskKind::sentiment_regression;
    } else if (name == "emotion_binary") {
        t.kind = TaskKind::emotion_binary;
        t.emotion = emotion;
    } else if (name.starts_with("sentiment_class_")) {
        t.kind = TaskKind::sentiment_class;
        const auto k = name.substr(16);
        if (k == "7") t.scheme = BinScheme::seven;
        else if (k == "5") t.scheme = BinScheme::five;
        else if (k == "3") t.scheme = BinScheme::three;
        else if (k == "2") t.scheme = BinScheme::two_with_neutral;
        else throw ConfigError("sentiment_class_k needs k in {7, 5, 3, 2}, got '" + k + "'");
    } else {
        throw ConfigError("unknown task '" + name + "'");
    }
    return t;
}

void FinetuneConfig::validate() const {
    parse_task(task, emotion);
    if (epochs < 1) throw ConfigError("finetune.epochs must be at least 1");
    if (seeds < 1) throw ConfigError("finetune.seeds must be at least 1");
    if (batch_size < 1) throw ConfigError("finetune.batch_size must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("finetune.lr must be positive");
}

std::vector<NamedParameter> FinetunedModel::parameters() const {
    auto p = encoder.parameters();
    p.push_back({"head.weight", head_weight, true});
    p.push_back({"head.bias", head_bias, false});
    return p;
}

Tensor head_outputs(Tape& tape, const FinetunedModel& model, const Batch& batch, const EncodeOptions& options) {
    Tensor cls = cls_states(tape, encode(tape, model.encoder, batch, options));
    return ops::add_bias(tape, ops::matmul(tape, cls, model.head_weight), model.head_bias);
}

namespace {

std::vector<TokenizedSample> tokenize_records(const std::vector<Record>& records, const Vocab& vocab,
                                              std::size_t max_len) {
    std::vector<TokenizedSample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (r.text.empty()) throw DataError("record '" + r.id + "' has empty text");
        out.push_back(tokenize(r.id, r.text, vocab, max_len));
    }
    return out;
}

Batch batch_of(const std::vector<TokenizedSample>& samples, std::span<const std::size_t> rows) {
    std::vector<MaskedSample> masked;
    masked.reserve(rows.size());
    for (std::size_t r : rows) masked.push_back(unmasked(samples[r]));
    return make_batch(masked);
}

StudentModel without_projection(const StudentModel& model) {
    StudentModel m = model.clone();
    m.projection = Tensor();
    m.config.use_projection = false;
    m.config.teacher_dim = m.config.d_model;
    return m;
}

}  // namespace

FinetunedModel finetune(const Checkpoint& pretrained, const std::vector<Record>& train, const FinetuneConfig& config,
                        std::uint64_t seed) {
    config.validate();
    if (train.empty()) throw DataError("fine-tuning set is empty");
    const Task task = parse_task(config.task, config.emotion);
    if (task.kind == TaskKind::emotion_binary && task.emotion.empty()) {
        throw ConfigError("emotion_binary needs finetune.emotion to pick a label");
    }
    std::vector<double> targets;
    targets.reserve(train.size());
    for (const auto& r : train) targets.push_back(task.target(r));

    FinetunedModel m;
    m.encoder = without_projection(pretrained.model);
    m.vocab = pretrained.vocab;
    m.task = task;
    const std::size_t d = m.encoder.config.d_model, k = task.outputs();
    m.head_weight = Tensor::zeros({d, k}, true);
    m.head_bias = Tensor::zeros({k}, true);
    Rng head_rng(derive_seed(seed, kStreamHead));
    truncated_normal_fill(m.head_weight, kInitStd, head_rng);

    const auto samples = tokenize_records(train, m.vocab, m.encoder.config.max_len);
    const auto params = m.parameters();
    auto opt = OptimizerState::for_parameters(params);
    const std::size_t n = samples.size();
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(derive_seed(seed, kStreamShuffle, epoch));
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle() % i]);

        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            std::span<const std::size_t> rows(order.data() + begin, end - begin);
            const Batch batch = batch_of(samples, rows);
            for (auto& p : params) p.tensor.zero_grad();
            Tape tape;
            Rng dropout_rng(derive_seed(seed, kStreamDropout, step));
            Tensor out = head_outputs(tape, m, batch, {true, &dropout_rng});
            Tensor loss;
            if (task.kind == TaskKind::sentiment_regression) {
                std::vector<double> y;
                for (std::size_t r : rows) y.push_back(targets[r]);
                Tensor diff = ops::sub(tape, out, Tensor::from({rows.size(), 1}, std::move(y)));
                loss = ops::mean(tape, ops::mul(tape, diff, diff));
            } else {
                std::vector<std::int32_t> y;
                for (std::size_t r : rows) y.push_back(static_cast<std::int32_t>(targets[r]));
                const std::vector<std::uint8_t> all(rows.size(), 1);
                loss = ops::masked_nll(tape, ops::log_softmax(tape, out), y, all);
            }
            if (!std::isfinite(loss.item())) {
                throw NumericError("fine-tuning diverged at step " + std::to_string(step + 1));
            }
            tape.backward(loss);
            adamw_step(params, opt, config.lr, config.weight_decay);
            ++step;
        }
    }
    return m;
}

std::vector<double> predict(const FinetunedModel& model, const std::vector<Record>& records, std::size_t batch_size) {
    const auto samples = tokenize_records(records, model.vocab, model.encoder.config.max_len);
    std::vector<double> out;
    out.reserve(samples.size());
    const std::size_t k = model.task.outputs();
    std::vector<std::size_t> rows(samples.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
        const std::size_t end = std::min(rows.size(), begin + batch_size);
        Tape tape;
        Tensor y = head_outputs(tape, model, batch_of(samples, std::span(rows).subspan(begin, end - begin)));
        const auto v = y.data();
        for (std::size_t b = 0; b < end - begin; ++b) {
            if (k == 1) {
                out.push_back(v[b]);
                continue;
            }
            const auto row = v.subspan(b * k, k);
            out.push_back(static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin()));
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::optional<double>>> task_metrics(const Task& task,
                                                                         const std::vector<double>& predictions,
                                                                         const std::vector<Record>& gold) {
    if (predictions.size() != gold.size()) throw MetricError("prediction count differs from gold count");
    std::vector<std::pair<std::string, std::optional<double>>> out;
    if (task.kind == TaskKind::sentiment_regression) {
        std::vector<double> y;
        for (const auto& r : gold) y.push_back(task.target(r));
        for (auto s : {BinScheme::seven, BinScheme::five, BinScheme::three, BinScheme::two_with_neutral,
                       BinScheme::two_without_neutral}) {
            std::optional<double> acc;
            try {
                acc = binned_accuracy(predictions, y, s);
            } catch (const MetricError&) {
            }
            out.emplace_back("accuracy_" + to_string(s), acc);
        }
        out.emplace_back("mae", mae(predictions, y));
        std::optional<double> rho;
        try {
            rho = pearson(predictions, y);
        } catch (const MetricError&) {
        }
        out.emplace_back("pearson_rho", rho);
        return out;
    }
    std::vector<int> p, y;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        p.push_back(static_cast<int>(predictions[i]));
        y.push_back(static_cast<int>(task.target(gold[i])));
    }
    const std::string name =
        task.kind == TaskKind::sentiment_class ? "accuracy_" + std::to_string(task.outputs()) : "accuracy";
    out.emplace_back(name, accuracy(p, y));
    return out;
}

std::vector<MetricsReport> evaluate(const Checkpoint& pretrained, const std::vector<Record>& train,
                                    const std::vector<Record>& test, const FinetuneConfig& config, std::uint64_t seed) {
    config.validate();
    if (test.empty()) throw DataError("evaluation set is empty");
    std::vector<FinetuneConfig> runs;
    const Task base = parse_task(config.task, config.emotion);
    if (base.kind == TaskKind::emotion_binary && base.emotion.empty()) {
        std::set<std::string> keys;
        for (const auto& r : train) {
            for (const auto& [k, v] : r.labels) keys.insert(k);
        }
        if (keys.empty()) throw DataError("emotion_binary: no 'labels' found in the training records");
        for (const auto& k : keys) {
            auto c = config;
            c.emotion = k;
            runs.push_back(c);
        }
    } else {
        runs.push_back(config);
    }

    std::vector<MetricsReport> reports;
    for (const auto& run : runs) {
        const Task task = parse_task(run.task, run.emotion);
        MetricsReport report;
        report.task = task.name();
        for (std::size_t s = 0; s < run.seeds; ++s) {
            const std::uint64_t run_seed = seed + s;
            report.seeds.push_back(run_seed);
            const auto model = finetune(pretrained, train, run, run_seed);
            const auto metrics = task_metrics(task, predict(model, test), test);
            if (report.metrics.empty()) {
                for (const auto& [name, v] : metrics) report.metrics.push_back({name, {}, {}, {}, {}});
            }
            for (std::size_t i = 0; i < metrics.size(); ++i) report.metrics[i].per_seed.push_back(metrics[i].second);
        }
        for (auto& m : report.metrics) {
            m.finalize();
            if (std::any_of(m.per_seed.begin(), m.per_seed.end(), [](const auto& v) { return !v; })) {
                m.note = "undefined on some seeds (constant predictions or no eligible gold labels)";
            }
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

Checkpoint to_checkpoint(const FinetunedModel& model) {
    Checkpoint ckpt;
    ckpt.model = model.encoder.clone();
    ckpt.vocab = model.vocab;
    ckpt.extra.push_back({"head.weight", model.head_weight.clone(), true});
    ckpt.extra.push_back({"head.bias", model.head_bias.clone(), false});
    nlohmann::ordered_json meta;
    meta["kind"] = "finetune";
    meta["task"] = model.task.kind == TaskKind::emotion_binary ? "emotion_binary" : model.task.name();
    meta["emotion"] = model.task.emotion;
    ckpt.metadata = meta.dump();
    return ckpt;
}

bool is_finetuned(const Checkpoint& checkpoint) {
    const auto meta = nlohmann::json::parse(checkpoint.metadata, nullptr, false);
    return meta.is_object() && meta.value("kind", "") == "finetune";
}

FinetunedModel from_checkpoint(const Checkpoint& checkpoint) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(checkpoint.metadata);
    } catch (const nlohmann::json::exception&) {
        throw CheckpointError("checkpoint metadata is not JSON");
    }
    if (meta.value("kind", "") != "finetune") throw CheckpointError("not a fine-tuned checkpoint");
    FinetunedModel m;
    m.encoder = checkpoint.model.clone();
    m.vocab = checkpoint.vocab;
    m.task = parse_task(meta.value("task", ""), meta.value("emotion", ""));
    for (const auto& p : checkpoint.extra) {
        if (p.name == "head.weight") m.head_weight = p.tensor.clone();
        if (p.name == "head.bias") m.head_bias = p.tensor.clone();
    }
    const std::size_t d = m.encoder.config.d_model, k = m.task.outputs();
    if (!m.head_weight.defined() || !m.head_bias.defined()) throw CheckpointError("checkpoint has no task head");
    if (m.head_weight.shape() != Shape{d, k} || m.head_bias.shape() != Shape{k}) {
        throw CheckpointError("shape mismatch for tensor 'head.weight': expected " + shape_str({d, k}));
    }
    return m;
}

std::vector<std::vector<double>> cls_features(const StudentModel& model, const Vocab& vocab,
                                              const std::vector<std::string>& texts, std::size_t batch_size) {
    std::vector<TokenizedSample> samples;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        samples.push_back(tokenize(std::to_string(i), texts[i], vocab, model.config.max_len));
    }
    const std::size_t d = model.config.d_model;
    std::vector<std::vector<double>> out;
    std::vector<std::size_t> rows(samples.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (std::size_t begin = 0; begin < rows.size(); begin += batch_size) {
        const std::size_t end = std::min(rows.size(), begin + batch_size);
        Tape tape;
        Tensor cls = cls_states(tape, encode(tape, model, batch_of(samples, std::span(rows).subspan(begin, end - begin))));
        const auto v = cls.data();
        for (std::size_t b = 0; b < end - begin; ++b) out.emplace_back(v.begin() + b * d, v.begin() + (b + 1) * d);
    }
    return out;
}

double linear_probe(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                    const std::vector<std::vector<double>>& test_x, const std::vector<int>& test_y,
                    std::size_t num_classes, const ProbeOptions& options) {
    if (train_x.empty() || test_x.empty()) throw DataError("linear_probe: empty feature set");
    if (train_x.size() != train_y.size() || test_x.size() != test_y.size()) {
        throw DimensionError("linear_probe: feature and label counts differ");
    }
    const std::size_t n = train_x.size(), d = train_x[0].size(), k = num_classes;
    for (int y : train_y) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) throw DataError("linear_probe: label out of range");
    }

    // Standardize with training statistics.
    std::vector<double> mu(d, 0.0), sd(d, 0.0);
    for (const auto& x : train_x) {
        for (std::size_t j = 0; j < d; ++j) mu[j] += x[j];
    }
    for (auto& m : mu) m /= static_cast<double>(n);
    for (const auto& x : train_x) {
        for (std::size_t j = 0; j < d; ++j) sd[j] += (x[j] - mu[j]) * (x[j] - mu[j]);
    }
    for (auto& s : sd) s = std::sqrt(s / static_cast<double>(n)) + 1e-8;
    auto standardize = [&](const std::vector<double>& x) {
        std::vector<double> z(d);
        for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - mu[j]) / sd[j];
        return z;
    };
    std::vector<std::vector<double>> xs;
    for (const auto& x : train_x) xs.push_back(standardize(x));

    std::vector<double> w(d * k, 0.0), b(k, 0.0), gw(d * k), gb(k), logits(k);
    auto scores = [&](const std::vector<double>& z) {
        for (std::size_t c = 0; c < k; ++c) {
            double s = b[c];
            for (std::size_t j = 0; j < d; ++j) s += z[j] * w[j * k + c];
            logits[c] = s;
        }
    };
    for (std::size_t it = 0; it < options.iterations; ++it) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            scores(xs[i]);
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (auto& l : logits) z += (l = std::exp(l - mx));
            for (std::size_t c = 0; c < k; ++c) {
                const double g = logits[c] / z - (static_cast<int>(c) == train_y[i] ? 1.0 : 0.0);
                gb[c] += g;
                for (std::size_t j = 0; j < d; ++j) gw[j * k + c] += g * xs[i][j];
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t q = 0; q < w.size(); ++q) w[q] -= options.lr * (gw[q] * inv_n + options.l2 * w[q]);
        for (std::size_t c = 0; c < k; ++c) b[c] -= options.lr * gb[c] * inv_n;
    }

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        scores(standardize(test_x[i]));
        const auto pred = std::max_element(logits.begin(), logits.end()) - logits.begin();
        correct += pred == test_y[i];
    }
    return static_cast<double>(correct) / static_cast<double>(test_x.size());
}

}  // namespace alkd
