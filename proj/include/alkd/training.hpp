#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "alkd/checkpoint.hpp"
#include "alkd/losses.hpp"
#include "alkd/model.hpp"
#include "alkd/optimizer.hpp"
#include "alkd/teacher_store.hpp"
#include "alkd/text.hpp"

namespace alkd {

enum class KdObjective { none, nst, crd };

KdObjective parse_kd_objective(const std::string& name);
std::string to_string(KdObjective objective);

/// Pretraining settings. lr_peak, weight_decay, gamma, tau and the masking
/// rate default to the published values; warmup_steps and batch_size default
/// to desk scale (the full-scale run uses 10000 and 256).
struct TrainConfig {
    double lr_peak = 1e-4;
    std::uint64_t warmup_steps = 200;
    std::uint64_t max_steps = 0;  // 0: epochs × ⌈records / batch_size⌉
    std::uint64_t epochs = 40;
    std::size_t batch_size = 32;
    double weight_decay = 0.01;
    double gamma = 1.0;
    KdObjective kd_objective = KdObjective::nst;
    double masking_rate = 0.15;
    bool mlm_bert_split = false;
    bool remask_each_epoch = true;
    std::uint64_t seed = 0;
    double grad_clip_norm = 0.0;  // 0 disables clipping
    std::uint64_t checkpoint_every = 0;
    double tau = 0.01;
    KernelConfig kernel;
    NstMode nst_mode = NstMode::per_token;
    bool kd_include_cls = true;

    void validate() const;
    std::uint64_t total_steps(std::size_t records) const;
};

/// Linear warmup from 0 to lr_peak, then linear decay to 0 at max_steps.
double lr_at(std::uint64_t step, double lr_peak, std::uint64_t warmup_steps, std::uint64_t max_steps);

struct StepLog {
    std::uint64_t step = 0;
    double lr = 0.0;
    LossBreakdown loss;
    std::size_t tokens = 0;
    double seconds = 0.0;
};

/// Serializes a step as one metrics-log line:
/// {"step","lr","mlm","kd","total","tokens_per_s"}. tokens_per_s is null
/// under the deterministic flag so logs are reproducible byte for byte.
std::string metrics_line(const StepLog& log);

/// Owns the student, optimizer and data order for one pretraining run.
/// Step k draws its batch, masks and dropout from seeds derived from
/// (seed, k), so resuming from a checkpoint replays the same run.
class Pretrainer {
   public:
    Pretrainer(const EmbeddingStore& store, Vocab vocab, TrainConfig train, ModelConfig model);
    /// Resumes from a checkpoint with optimizer state.
    Pretrainer(const EmbeddingStore& store, Checkpoint checkpoint, TrainConfig train);

    StepLog step();
    bool done() const { return step_ >= total_steps_; }
    std::uint64_t current_step() const { return step_; }
    std::uint64_t total_steps() const { return total_steps_; }

    const StudentModel& model() const { return model_; }
    const OptimizerState& optimizer() const { return optimizer_; }
    const Vocab& vocab() const { return vocab_; }
    const TrainConfig& config() const { return train_; }
    Checkpoint checkpoint() const;

    /// Loss on a batch of records without updating anything.
    LossBreakdown evaluate_batch(const std::vector<std::size_t>& records, std::uint64_t mask_epoch) const;

   private:
    void prepare();
    std::vector<std::size_t> batch_records(std::uint64_t step) const;
    Batch make_training_batch(const std::vector<std::size_t>& records, std::uint64_t epoch) const;
    Tensor teacher_matrix(const std::vector<std::size_t>& records) const;
    struct Forward {
        Tensor total;
        LossBreakdown loss;
    };
    Forward forward(Tape& tape, const Batch& batch, const std::vector<std::size_t>& records, bool train,
                    Rng* dropout_rng) const;

    const EmbeddingStore& store_;
    Vocab vocab_;
    TrainConfig train_;
    StudentModel model_;
    OptimizerState optimizer_;
    std::vector<TokenizedSample> samples_;
    std::uint64_t step_ = 0;
    std::uint64_t total_steps_ = 0;
    std::uint64_t steps_per_epoch_ = 0;
};

struct PretrainOutputs {
    std::string out_dir;           // checkpoints; empty: no files
    std::string metrics_log_path;  // empty: no log
    std::function<void(const StepLog&)> on_step;
};

struct PretrainResult {
    Checkpoint final_checkpoint;
    std::vector<StepLog> history;
};

/// Drives `trainer` to completion. A resumed trainer appends to the metrics
/// log instead of truncating it.
PretrainResult run_pretrainer(Pretrainer& trainer, const PretrainOutputs& outputs);

/// Runs a fresh Pretrainer to completion, appending metrics lines and writing
/// periodic plus final checkpoints. On divergence the last written
/// checkpoint is left untouched and NumericError propagates.
PretrainResult pretrain(const EmbeddingStore& store, const Vocab& vocab, const TrainConfig& train,
                        const ModelConfig& model, const PretrainOutputs& outputs = {});

/// Tokenizes every transcript in the store.
std::vector<TokenizedSample> tokenize_store(const EmbeddingStore& store, const Vocab& vocab, std::size_t max_len);

}  // namespace alkd
