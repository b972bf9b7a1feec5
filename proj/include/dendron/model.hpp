#pragma once

// Shared feature extractor with one classifier head per task, and the
// procedures that run it: hierarchical inference and task-activation weights.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dendron/hierarchy.hpp"
#include "dendron/nn.hpp"

namespace dendron {

class ModelBundle {
 public:
  ModelBundle() = default;

  /// Checks that every head reads feature_dim() values, that heads and graph
  /// tasks coincide and that each head has k_i outputs.
  ModelBundle(FeatureExtractor fe, std::map<TaskId, Head> heads, TaskGraph graph,
              Topology topology = Topology::Tree);

  /// Fresh parameters: the extractor first, then heads in task order, all
  /// from one generator seeded with `seed`. Each head is
  /// hidden_widths followed by k_i outputs.
  static ModelBundle initialize(const FeatureExtractorSpec& fe_spec,
                                const std::vector<std::size_t>& hidden_widths,
                                TaskGraph graph, std::uint64_t seed);

  const FeatureExtractor& feature_extractor() const noexcept { return fe_; }
  FeatureExtractor& feature_extractor() noexcept { return fe_; }
  const TaskGraph& graph() const noexcept { return graph_; }
  const std::map<TaskId, Head>& heads() const noexcept { return heads_; }
  const Head& head(TaskId id) const;
  Head& head(TaskId id);

  std::size_t feature_dim() const { return fe_.feature_dim(); }

  /// Every parameter tensor: extractor first, then heads by task id.
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;

  /// Adds a task under the given terminal labels together with its head.
  /// The graph is revalidated (multi-parent allowed); on failure nothing
  /// changes.
  TaskId attach_task(std::string name, std::vector<std::string> labels,
                     const std::vector<std::string>& attach_to, Head head);

  /// Inverse of attach_task for the most recently added task.
  void detach_last_task();

 private:
  void check_consistency(Topology topology) const;

  FeatureExtractor fe_;
  std::map<TaskId, Head> heads_;
  TaskGraph graph_;
};

struct TraceStep {
  TaskId task = 0;
  std::size_t class_index = 0;
  std::string label;
  Tensor confidences;  // softmax output of the task's head
};

struct InferenceTrace {
  std::vector<TraceStep> visited;
  std::string final_label;
};

/// Runs the extractor once, then walks from the root task: each visited head
/// predicts a label (argmax, lowest index on ties) and the walk moves to the
/// task activated by that label until a terminal label is produced.
InferenceTrace infer_hierarchical(const ModelBundle& bundle, const Tensor& window,
                                  OpCounter* counter = nullptr);

/// Same walk on a precomputed feature vector.
InferenceTrace infer_from_feature(const ModelBundle& bundle, const Tensor& feature,
                                  OpCounter* counter = nullptr);

/// Single extractor pass, every head evaluated.
std::map<TaskId, Tensor> forward_all_heads(const ModelBundle& bundle, const Tensor& window,
                                           OpCounter* counter = nullptr);

/// Extractor pass followed by the heads of `tasks` in order, without routing.
/// Used to measure the cost of a specific route.
std::map<TaskId, Tensor> forward_route(const ModelBundle& bundle, const Tensor& window,
                                       const std::vector<TaskId>& tasks,
                                       OpCounter* counter = nullptr);

/// Class index per task, or kOffPath for tasks not on the sample's route.
inline constexpr std::size_t kOffPath = static_cast<std::size_t>(-1);
using TaskLabels = std::map<TaskId, std::size_t>;

/// Activation probability of every task. The root gets 1; any other task
/// gets the sum over its dependency entries of the parent's confidence in the
/// triggering label times the parent's alpha. Confidences come from the
/// softmax outputs, or, when `ground_truth` is given, from indicators of the
/// true parent class (off-path parents contribute 0).
std::map<TaskId, double> compute_alphas(const TaskGraph& graph,
                                        const std::map<TaskId, Tensor>& head_outputs,
                                        const std::optional<TaskLabels>& ground_truth = std::nullopt);

}  // namespace dendron
