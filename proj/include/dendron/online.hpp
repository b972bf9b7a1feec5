#pragma once

// Learning a new task on the device: decide where it hangs in the hierarchy
// from the predictions the current model makes on the acquired windows, then
// train only its head on features from the frozen extractor.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dendron/model.hpp"

namespace dendron {

struct AcquiredDataset {
  std::vector<Tensor> windows;
  std::vector<std::size_t> labels;  // class index of the new task
  std::size_t num_classes = 0;

  void validate() const;
};

struct PlacementDecision {
  std::vector<std::string> labels;   // composite labels, model order
  std::vector<std::size_t> counts;   // predictions per label
  std::size_t total = 0;
  std::vector<std::size_t> ranking;  // indices into labels, most predicted first
  double f_prime = 0.0;              // relative frequency of ranking[0]
  double f_second = 0.0;             // relative frequency of ranking[1] (0 if absent)
  double delta = 0.0;
  std::vector<std::string> attach_to;
  std::string note;

  double frequency(std::size_t i) const;
};

/// Builds a decision from externally supplied counts.
PlacementDecision placement_from_counts(std::vector<std::string> labels,
                                        std::vector<std::size_t> counts);

/// Runs hierarchical inference over every window and tallies the final labels.
PlacementDecision collect_placement_counts(const ModelBundle& bundle,
                                           std::span<const Tensor> windows);

/// One label when f' - f'' > delta, otherwise the two most predicted labels
/// (most predicted first). Stores the choice in decision.attach_to.
std::vector<std::string> select_node(PlacementDecision& decision, double delta);

/// Graph-level attachment (no head): new task n+1 with d[n+1][owner(l)] = l
/// for each l in attach_to. Returns the new id.
TaskId attach_task(TaskGraph& graph, std::string name, std::vector<std::string> labels,
                   const std::vector<std::string>& attach_to);

/// Undoes attach_task for the last task.
void detach_task(TaskGraph& graph);

/// Weight count of a head per the memory formula sum_u q_u * q_{u-1},
/// q_0 = feature_dim. Biases are not included.
std::uint64_t head_weight_memory(const HeadSpec& spec, std::size_t feature_dim);
std::uint64_t head_bias_count(const HeadSpec& spec);

struct FeatureCache {
  std::vector<Tensor> features;
  std::vector<std::size_t> labels;

  std::size_t bytes() const;  // 4 bytes per cached value
};

FeatureCache build_feature_cache(const FeatureExtractor& fe, const AcquiredDataset& data);

struct OnlineConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  bool shuffle = true;
  bool use_feature_cache = true;

  void validate() const;
};

struct HeadTrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  std::size_t cache_bytes = 0;
  std::uint64_t weight_count = 0;  // m_w
  std::uint64_t bias_count = 0;
  std::size_t fe_passes = 0;
};

/// Gradient descent on head `task` only; the extractor is never written.
/// With the cache on, the extractor runs once per window up front; otherwise
/// once per window per epoch. Both give bit-identical heads.
HeadTrainReport train_new_head(ModelBundle& bundle, TaskId task, const AcquiredDataset& data,
                               const OnlineConfig& config);

struct AddTaskResult {
  PlacementDecision decision;
  TaskId task = 0;
  HeadTrainReport report;
};

/// Placement, attachment, head initialization (seeded by config.seed) and
/// head training. When the two chosen labels share a parent task the
/// dependency matrix cannot hold both, so the task is attached under the most
/// predicted label alone and decision.note says so.
AddTaskResult add_task(ModelBundle& bundle, std::string name, std::vector<std::string> labels,
                       const std::vector<std::size_t>& hidden_widths, const AcquiredDataset& data,
                       double delta, const OnlineConfig& config);

}  // namespace dendron
