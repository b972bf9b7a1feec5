#pragma once

// Weight memory, activation memory and multiply-accumulate counts for three
// ways of deploying the same hierarchy:
//   single model  - extractor + one head over all composite labels
//   hierarchical  - one independent extractor + head per task
//   shared (ours) - one extractor shared by every task head
// Byte figures assume 4-byte values.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dendron/model.hpp"

namespace dendron {

inline constexpr std::uint64_t kBytesPerValue = 4;

struct ComponentCost {
  std::string name;
  std::uint64_t weights = 0;
  std::uint64_t biases = 0;
  std::uint64_t macc = 0;

  std::uint64_t params() const { return weights + biases; }
  std::uint64_t bytes() const { return kBytesPerValue * params(); }
};

struct MaccCounts {
  std::uint64_t feature_extractor = 0;
  std::map<TaskId, std::uint64_t> heads;
};

/// Closed-form counts: conv blocks cost conv_len * filters * kernel * channels,
/// dense layers in * out.
MaccCounts count_macc(const ModelBundle& bundle);

std::uint64_t conv_macc(const FeatureExtractorSpec& spec);
std::uint64_t dense_macc(const HeadSpec& spec, std::size_t input_dim);

/// Sizes (in values) of the activations produced along the extractor and
/// the heads of `path`: the input window, each conv output, each pooled
/// output, then for every head the feature vector followed by each dense
/// layer output.
std::vector<std::vector<std::uint64_t>> activation_chains(const ModelBundle& bundle,
                                                          const std::vector<TaskId>& path);

/// Largest sum of two consecutive activations along the extractor and along
/// each head of `path`, in bytes.
std::uint64_t activation_peak(const ModelBundle& bundle, const std::vector<TaskId>& path);

struct DeploymentTotals {
  std::uint64_t weights = 0;
  std::uint64_t biases = 0;
  std::uint64_t macc_worst = 0;
  std::uint64_t macc_best = 0;
  double macc_expected = 0.0;  // uniform routing at every task

  std::uint64_t params() const { return weights + biases; }
  std::uint64_t bytes() const { return kBytesPerValue * params(); }
};

struct ResourceReport {
  ComponentCost feature_extractor;
  std::map<TaskId, ComponentCost> heads;
  ComponentCost single_model_head;  // |composite labels|-way head
  std::vector<TaskId> worst_path;   // costliest route for the shared deployment
  std::uint64_t activation_peak_bytes = 0;
  std::uint64_t head_weight_total = 0;  // sum of m_w over all heads
  DeploymentTotals single_model;
  DeploymentTotals hierarchical;
  DeploymentTotals dendron;
};

/// Fills all three deployment totals. The single-model head reuses the root
/// head's hidden widths and ends in one output per composite label.
ResourceReport compare_deployments(const ModelBundle& bundle);

/// Aligned table followed by one machine row per component and deployment:
///   resource,<name>,<params>,<bytes>,<macc>
void write_resource_report(const ResourceReport& report, std::ostream& out);

struct ResourceRow {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t bytes = 0;
  std::uint64_t macc = 0;
};

/// Extracts the machine rows from report text; other lines are ignored.
std::vector<ResourceRow> parse_resource_rows(const std::string& text);

}  // namespace dendron
