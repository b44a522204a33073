#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alkd/checkpoint.hpp"
#include "alkd/metrics.hpp"
#include "alkd/model.hpp"
#include "alkd/text.hpp"

namespace alkd {

enum class TaskKind { sentiment_regression, sentiment_class, emotion_binary };

/// A downstream task. Names: sentiment_regression, sentiment_class_{7,5,3,2},
/// emotion_binary (with the emotion label key, e.g. "happiness").
struct Task {
    TaskKind kind = TaskKind::sentiment_regression;
    BinScheme scheme = BinScheme::seven;  // sentiment_class only
    std::string emotion;                  // emotion_binary only

    std::string name() const;
    std::size_t outputs() const;
    /// Training target for a record: the score, or a class index in [0, outputs()).
    double target(const Record& record) const;
};

Task parse_task(const std::string& name, const std::string& emotion = "");

/// Defaults follow the published fine-tuning protocol.
struct FinetuneConfig {
    std::string task = "sentiment_regression";
    std::string emotion;
    std::size_t epochs = 3;
    double lr = 2e-5;
    std::size_t batch_size = 32;
    std::size_t seeds = 5;
    double weight_decay = 0.01;

    void validate() const;
};

/// Pretrained encoder (projection dropped) plus a linear head on [CLS].
struct FinetunedModel {
    StudentModel encoder;
    Vocab vocab;
    Task task;
    Tensor head_weight;  // [d_model, outputs]
    Tensor head_bias;    // [outputs]

    std::vector<NamedParameter> parameters() const;
};

/// Head outputs [B, outputs] for a batch.
Tensor head_outputs(Tape& tape, const FinetunedModel& model, const Batch& batch, const EncodeOptions& options = {});

/// Trains encoder and head end to end (MSE for regression, cross-entropy
/// otherwise). Throws DataError naming the first record without the label
/// the task needs.
FinetunedModel finetune(const Checkpoint& pretrained, const std::vector<Record>& train, const FinetuneConfig& config,
                        std::uint64_t seed);

/// Regression scores, or predicted class indices as doubles.
std::vector<double> predict(const FinetunedModel& model, const std::vector<Record>& records,
                            std::size_t batch_size = 64);

/// Task-specific metrics for one set of predictions, keyed by metric name.
/// Undefined metrics (ρ of a constant predictor) are nullopt.
std::vector<std::pair<std::string, std::optional<double>>> task_metrics(const Task& task,
                                                                         const std::vector<double>& predictions,
                                                                         const std::vector<Record>& gold);

/// Fine-tunes once per seed (seed, seed+1, ...) and aggregates test metrics.
/// emotion_binary without an emotion key yields one report per emotion
/// found in the training labels.
std::vector<MetricsReport> evaluate(const Checkpoint& pretrained, const std::vector<Record>& train,
                                    const std::vector<Record>& test, const FinetuneConfig& config,
                                    std::uint64_t seed = 0);

Checkpoint to_checkpoint(const FinetunedModel& model);
FinetunedModel from_checkpoint(const Checkpoint& checkpoint);
bool is_finetuned(const Checkpoint& checkpoint);

/// [CLS] hidden states of a frozen encoder in eval mode, one row per text.
std::vector<std::vector<double>> cls_features(const StudentModel& model, const Vocab& vocab,
                                              const std::vector<std::string>& texts, std::size_t batch_size = 64);

struct ProbeOptions {
    std::size_t iterations = 500;
    double lr = 0.5;
    double l2 = 1e-4;
};

/// Multinomial logistic regression on standardized features (full-batch
/// gradient descent from zero weights); returns test accuracy.
double linear_probe(const std::vector<std::vector<double>>& train_x, const std::vector<int>& train_y,
                    const std::vector<std::vector<double>>& test_x, const std::vector<int>& test_y,
                    std::size_t num_classes, const ProbeOptions& options = {});

}  // namespace alkd
