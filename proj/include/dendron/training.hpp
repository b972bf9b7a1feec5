#pragma once

// Off-device joint training of the shared extractor and every head with the
// alpha-weighted total loss L = sum_i alpha_i * L_i.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dendron/model.hpp"

namespace dendron {

/// Class index per task that routes the root to `terminal_label`; kOffPath for
/// every task not on that route. With several routes (a task attached under
/// two parents) the one through the lowest-id parent is used.
TaskLabels derive_task_labels(const TaskGraph& graph, const std::string& terminal_label);

/// Label trained for an off-path task. Off-path subtrees never contain the
/// sample's terminal, so no routing label exists and class 0 is used; alpha
/// suppresses the term.
inline constexpr std::size_t kOffPathSurrogate = 0;

struct MultiLabelSample {
  Tensor window;
  TaskLabels labels;
  std::string terminal_label;
};

MultiLabelSample make_sample(const TaskGraph& graph, Tensor window, const std::string& terminal);

enum class AlphaMode { Predicted, TeacherForced };

std::string to_string(AlphaMode mode);
AlphaMode parse_alpha_mode(const std::string& text);

struct TaskLossTerm {
  double alpha = 0.0;
  double loss = 0.0;
};

struct JointLoss {
  double total = 0.0;
  std::map<TaskId, TaskLossTerm> per_task;
};

JointLoss joint_loss(const ModelBundle& bundle, const MultiLabelSample& sample, AlphaMode mode);

struct JointGradients {
  JointLoss loss;
  std::vector<Tensor> feature_extractor;     // FeatureExtractor::parameters() order
  std::map<TaskId, std::vector<Tensor>> heads;  // Head::parameters() order
};

/// Gradient of sum_i alpha_i * L_i with the alphas held constant. Tasks with
/// alpha exactly 0 get all-zero gradients and contribute nothing upstream.
JointGradients joint_gradients(const ModelBundle& bundle, const MultiLabelSample& sample,
                               AlphaMode mode, bool include_feature_extractor = true);

/// Same, with caller-provided alphas.
JointGradients weighted_gradients(const ModelBundle& bundle, const MultiLabelSample& sample,
                                  const std::map<TaskId, double>& alphas,
                                  bool include_feature_extractor = true);

struct TrainConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  AlphaMode alpha_mode = AlphaMode::Predicted;
  bool shuffle = true;
  bool freeze_feature_extractor = false;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double total_loss = 0.0;                 // mean of L over the epoch's samples
  std::map<TaskId, double> task_loss;      // mean of L_i
};

struct ClassAccuracy {
  std::string label;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct Evaluation {
  std::vector<std::string> labels;                 // composite label order
  std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
  std::vector<ClassAccuracy> per_class;
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t unknown = 0;  // samples whose true label is not terminal in the model
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
  double mean_class_accuracy() const;
};

/// Hierarchical inference on every window, tallied against true terminal labels.
Evaluation evaluate(const ModelBundle& bundle, std::span<const Tensor> windows,
                    std::span<const std::string> labels);
Evaluation evaluate(const ModelBundle& bundle, std::span<const MultiLabelSample> samples);

struct TrainReport {
  TrainConfig config;
  std::vector<EpochStats> epochs;
  std::optional<Evaluation> held_out;
};

/// Sample-at-a-time gradient descent over `dataset`. Throws NumericError
/// naming the epoch and sample when the loss stops being finite.
TrainReport train_joint(ModelBundle& bundle, std::span<const MultiLabelSample> dataset,
                        const TrainConfig& config,
                        std::span<const MultiLabelSample> held_out = {});

/// Aligned table followed by machine rows:
///   epoch,<n>,<total>,<task_id>:<loss>,...
///   class,<label>,<correct>,<total>,<accuracy>
void write_train_report(const TrainReport& report, const TaskGraph& graph, std::ostream& out);
void write_evaluation(const Evaluation& eval, std::ostream& out);

}  // namespace dendron
