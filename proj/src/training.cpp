#include "alkd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "alkd/config.hpp"

namespace alkd {

KdObjective parse_kd_objective(const std::string& name) {
    if (name == "nst") return KdObjective::nst;
    if (name == "crd") return KdObjective::crd;
    if (name == "none") return KdObjective::none;
    throw ConfigError("kd_objective must be nst, crd or none, got '" + name + "'");
}

std::string to_string(KdObjective objective) {
    switch (objective) {
        case KdObjective::nst: return "nst";
        case KdObjective::crd: return "crd";
        case KdObjective::none: return "none";
    }
    return "none";
}

void TrainConfig::validate() const {
    if (!(lr_peak > 0.0)) throw ConfigError("lr_peak must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_steps == 0 && epochs == 0) throw ConfigError("set max_steps or epochs");
    if (max_steps != 0 && warmup_steps > max_steps) {
        throw ConfigError("warmup_steps (" + std::to_string(warmup_steps) + ") exceeds max_steps (" +
                          std::to_string(max_steps) + ")");
    }
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!std::isfinite(gamma) || gamma < 0.0) throw ConfigError("gamma must be finite and non-negative");
    if (!(masking_rate >= 0.0 && masking_rate <= 1.0)) throw ConfigError("masking_rate must be in [0, 1]");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (kernel.degree < 1) throw ConfigError("kernel_degree must be a positive integer");
    if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be non-negative");
}

std::uint64_t TrainConfig::total_steps(std::size_t records) const {
    if (max_steps != 0) return max_steps;
    const std::uint64_t per_epoch = (records + batch_size - 1) / batch_size;
    return epochs * per_epoch;
}

double lr_at(std::uint64_t step, double lr_peak, std::uint64_t warmup_steps, std::uint64_t max_steps) {
    const double s = static_cast<double>(step);
    if (step < warmup_steps) return lr_peak * s / static_cast<double>(warmup_steps);
    if (step >= max_steps) return 0.0;
    return lr_peak * static_cast<double>(max_steps - step) / static_cast<double>(max_steps - warmup_steps);
}

std::string metrics_line(const StepLog& log) {
    nlohmann::ordered_json j;
    j["step"] = log.step;
    j["lr"] = log.lr;
    j["mlm"] = log.loss.mlm;
    j["kd"] = log.loss.kd;
    j["total"] = log.loss.total;
    if (numerics().deterministic || log.seconds <= 0.0) {
        j["tokens_per_s"] = nullptr;
    } else {
        j["tokens_per_s"] = static_cast<double>(log.tokens) / log.seconds;
    }
    return j.dump();
}

std::vector<TokenizedSample> tokenize_store(const EmbeddingStore& store, const Vocab& vocab, std::size_t max_len) {
    std::vector<TokenizedSample> out;
    out.reserve(store.count());
    for (const auto& r : store.records) {
        if (r.transcript.empty()) throw DataError("record '" + r.sample_id + "' has an empty transcript");
        out.push_back(tokenize(r.sample_id, r.transcript, vocab, max_len));
    }
    return out;
}

Pretrainer::Pretrainer(const EmbeddingStore& store, Vocab vocab, TrainConfig train, ModelConfig model)
    : store_(store), vocab_(std::move(vocab)), train_(std::move(train)) {
    if (model.vocab_size == 0) model.vocab_size = vocab_.size();
    if (model.vocab_size != vocab_.size()) {
        throw ConfigError("vocab_size " + std::to_string(model.vocab_size) + " differs from vocabulary size " +
                          std::to_string(vocab_.size()));
    }
    model_ = init_model(model, derive_seed(train_.seed, kStreamInit));
    optimizer_ = OptimizerState::for_parameters(model_.parameters());
    prepare();
}

Pretrainer::Pretrainer(const EmbeddingStore& store, Checkpoint checkpoint, TrainConfig train)
    : store_(store), vocab_(std::move(checkpoint.vocab)), train_(std::move(train)) {
    if (!checkpoint.optimizer) throw CheckpointError("checkpoint has no optimizer state to resume from");
    model_ = std::move(checkpoint.model);
    optimizer_ = std::move(*checkpoint.optimizer);
    step_ = checkpoint.step;
    prepare();
}

void Pretrainer::prepare() {
    train_.validate();
    if (store_.count() == 0) throw DataError("teacher store has no records");
    if (train_.kd_objective != KdObjective::none && model_.config.teacher_dim != store_.dim) {
        throw ConfigError("teacher_dim " + std::to_string(model_.config.teacher_dim) + " differs from store dimension " +
                          std::to_string(store_.dim));
    }
    samples_ = tokenize_store(store_, vocab_, model_.config.max_len);
    steps_per_epoch_ = (store_.count() + train_.batch_size - 1) / train_.batch_size;
    total_steps_ = train_.total_steps(store_.count());
    if (train_.warmup_steps > total_steps_) {
        throw ConfigError("warmup_steps (" + std::to_string(train_.warmup_steps) + ") exceeds the run length of " +
                          std::to_string(total_steps_) + " steps");
    }
}

std::vector<std::size_t> Pretrainer::batch_records(std::uint64_t step) const {
    const std::uint64_t epoch = step / steps_per_epoch_;
    const std::size_t slot = static_cast<std::size_t>(step % steps_per_epoch_);
    std::vector<std::size_t> order(store_.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(train_.seed, kStreamShuffle, epoch));
    // Fisher-Yates by hand: std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    const std::size_t begin = slot * train_.batch_size;
    const std::size_t end = std::min(order.size(), begin + train_.batch_size);
    return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

Batch Pretrainer::make_training_batch(const std::vector<std::size_t>& records, std::uint64_t epoch) const {
    const std::uint64_t mask_epoch = train_.remask_each_epoch ? epoch : 0;
    const std::uint64_t epoch_seed = derive_seed(train_.seed, kStreamMask, mask_epoch);
    MaskingOptions options{train_.masking_rate, train_.mlm_bert_split};
    std::vector<MaskedSample> masked;
    masked.reserve(records.size());
    for (std::size_t r : records) {
        Rng rng(derive_seed(epoch_seed, kStreamMask, r));
        masked.push_back(mask_tokens(samples_[r], options, vocab_.size(), rng));
    }
    return make_batch(masked);
}

Tensor Pretrainer::teacher_matrix(const std::vector<std::size_t>& records) const {
    const std::size_t d = store_.dim;
    Tensor t = Tensor::zeros({records.size(), d});
    auto data = t.data();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& v = store_.records[records[i]].vector;
        std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return t;
}

Pretrainer::Forward Pretrainer::forward(Tape& tape, const Batch& batch, const std::vector<std::size_t>& records,
                                        bool train, Rng* dropout_rng) const {
    Tensor hidden = encode(tape, model_, batch, {train, dropout_rng});
    const std::size_t n_masked = batch.masked_count();
    Tensor mlm = Tensor::scalar(0.0);
    if (n_masked > 0) mlm = mlm_loss(tape, mlm_logits(tape, model_, hidden), batch.target_ids, batch.mlm_mask);

    Forward f;
    if (train_.kd_objective == KdObjective::none) {
        f.total = mlm;
        f.loss = total_loss(0.0, mlm.item(), 0.0);
    } else {
        std::vector<std::uint8_t> kd_mask = batch.valid_mask;
        if (!train_.kd_include_cls) {
            for (std::size_t b = 0; b < batch.batch_size; ++b) kd_mask[batch.index(b, 0)] = 0;
        }
        Tensor student = project(tape, model_, hidden);
        Tensor teacher = teacher_matrix(records);
        Tensor kd = train_.kd_objective == KdObjective::nst
                        ? nst_loss(tape, student, kd_mask, teacher, train_.kernel, train_.nst_mode)
                        : crd_loss(tape, student, kd_mask, teacher, CrdConfig{train_.tau, store_.count()});
        f.total = weighted_total(tape, kd, mlm, train_.gamma);
        f.loss = total_loss(kd.item(), mlm.item(), train_.gamma);
    }
    f.loss.n_masked = n_masked;
    f.loss.n_valid_tokens = batch.valid_count();
    return f;
}

StepLog Pretrainer::step() {
    if (done()) throw ContractError("pretraining already finished at step " + std::to_string(step_));
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t epoch = step_ / steps_per_epoch_;
    const auto records = batch_records(step_);
    const Batch batch = make_training_batch(records, epoch);

    model_.zero_grad();
    Tape tape;
    Rng dropout_rng(derive_seed(train_.seed, kStreamDropout, step_));
    Forward f;
    try {
        f = forward(tape, batch, records, true, &dropout_rng);
    } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step_ + 1) + ": " + e.what());
    }
    if (f.total.requires_grad()) tape.backward(f.total);

    const auto params = model_.parameters();
    if (train_.grad_clip_norm > 0.0) clip_grad_norm(params, train_.grad_clip_norm);
    const double lr = lr_at(step_ + 1, train_.lr_peak, train_.warmup_steps, total_steps_);
    adamw_step(params, optimizer_, lr, train_.weight_decay);
    ++step_;

    StepLog log;
    log.step = step_;
    log.lr = lr;
    log.loss = f.loss;
    log.tokens = batch.valid_count();
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return log;
}

LossBreakdown Pretrainer::evaluate_batch(const std::vector<std::size_t>& records, std::uint64_t mask_epoch) const {
    for (std::size_t r : records) {
        if (r >= samples_.size()) throw std::out_of_range("record index " + std::to_string(r) + " out of range");
    }
    const Batch batch = make_training_batch(records, mask_epoch);
    Tape tape;
    return forward(tape, batch, records, false, nullptr).loss;
}

Checkpoint Pretrainer::checkpoint() const {
    Checkpoint ckpt;
    ckpt.model = model_.clone();
    ckpt.vocab = vocab_;
    ckpt.step = step_;
    ckpt.optimizer = optimizer_;
    RunConfig run;
    run.model = model_.config;
    run.train = train_;
    nlohmann::ordered_json meta;
    meta["kind"] = "pretrain";
    meta["config"] = config_json(run, {"model", "train"});
    ckpt.metadata = meta.dump();
    return ckpt;
}

PretrainResult run_pretrainer(Pretrainer& trainer, const PretrainOutputs& outputs) {
    namespace fs = std::filesystem;
    if (!outputs.out_dir.empty()) fs::create_directories(outputs.out_dir);
    std::ofstream log_file;
    if (!outputs.metrics_log_path.empty()) {
        const auto mode = trainer.current_step() > 0 ? std::ios::app : std::ios::trunc;
        log_file.open(outputs.metrics_log_path, mode);
        if (!log_file) throw DataError("cannot open metrics log " + outputs.metrics_log_path);
    }
    auto write_ckpt = [&](const std::string& name) {
        if (outputs.out_dir.empty()) return;
        // Write then rename so an interrupted save never replaces a good file.
        const fs::path target = fs::path(outputs.out_dir) / name;
        const fs::path tmp = fs::path(outputs.out_dir) / (name + ".tmp");
        save_checkpoint(trainer.checkpoint(), tmp.string());
        fs::rename(tmp, target);
    };

    const auto every = trainer.config().checkpoint_every;
    PretrainResult result;
    while (!trainer.done()) {
        StepLog log = trainer.step();
        if (log_file.is_open()) {
            log_file << metrics_line(log) << '\n';
            log_file.flush();
        }
        if (outputs.on_step) outputs.on_step(log);
        result.history.push_back(log);
        if (every != 0 && log.step % every == 0) {
            write_ckpt("step_" + std::to_string(log.step) + ".alkc");
            write_ckpt("last.alkc");
        }
    }
    write_ckpt("final.alkc");
    result.final_checkpoint = trainer.checkpoint();
    return result;
}

PretrainResult pretrain(const EmbeddingStore& store, const Vocab& vocab, const TrainConfig& train,
                        const ModelConfig& model, const PretrainOutputs& outputs) {
    Pretrainer trainer(store, vocab, train, model);
    return run_pretrainer(trainer, outputs);
}

}  // namespace alkd
