#include "dendron/online.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dendron/error.hpp"

namespace dendron {

void AcquiredDataset::validate() const {
  if (windows.empty()) throw std::invalid_argument("acquired dataset is empty");
  if (windows.size() != labels.size()) {
    throw std::invalid_argument("acquired dataset has " + std::to_string(windows.size()) +
                                " windows but " + std::to_string(labels.size()) + " labels");
  }
  if (num_classes < 2) throw std::invalid_argument("a new task needs at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has class " +
                                  std::to_string(labels[i]) + " but the task has " +
                                  std::to_string(num_classes) + " classes");
    }
  }
}

double PlacementDecision::frequency(std::size_t i) const {
  return total ? static_cast<double>(counts.at(i)) / static_cast<double>(total) : 0.0;
}

PlacementDecision placement_from_counts(std::vector<std::string> labels,
                                        std::vector<std::size_t> counts) {
  if (labels.size() != counts.size()) {
    throw std::invalid_argument("placement: label and count lists differ in length");
  }
  if (labels.empty()) throw std::invalid_argument("placement: no labels");
  PlacementDecision d;
  d.labels = std::move(labels);
  d.counts = std::move(counts);
  d.total = std::accumulate(d.counts.begin(), d.counts.end(), std::size_t{0});
  if (d.total == 0) throw std::invalid_argument("placement: no predictions were counted");
  d.ranking.resize(d.labels.size());
  std::iota(d.ranking.begin(), d.ranking.end(), std::size_t{0});
  std::stable_sort(d.ranking.begin(), d.ranking.end(),
                   [&](std::size_t a, std::size_t b) { return d.counts[a] > d.counts[b]; });
  d.f_prime = d.frequency(d.ranking[0]);
  d.f_second = d.ranking.size() > 1 ? d.frequency(d.ranking[1]) : 0.0;
  return d;
}

PlacementDecision collect_placement_counts(const ModelBundle& bundle,
                                           std::span<const Tensor> windows) {
  if (windows.empty()) throw std::invalid_argument("placement: acquired dataset is empty");
  auto labels = bundle.graph().terminal_labels();
  std::vector<std::size_t> counts(labels.size(), 0);
  for (const auto& w : windows) {
    const auto trace = infer_hierarchical(bundle, w);
    const auto it = std::find(labels.begin(), labels.end(), trace.final_label);
    ++counts[static_cast<std::size_t>(it - labels.begin())];
  }
  return placement_from_counts(std::move(labels), std::move(counts));
}

std::vector<std::string> select_node(PlacementDecision& decision, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw std::invalid_argument("delta must lie in [0, 1]");
  }
  if (decision.ranking.empty() || decision.total == 0) {
    throw std::invalid_argument("placement counts have not been collected");
  }
  decision.delta = delta;
  const std::size_t first = decision.ranking[0];
  decision.attach_to = {decision.labels[first]};
  if (decision.ranking.size() < 2) {
    decision.note = "only one composite label exists";
    return decision.attach_to;
  }
  const std::size_t second = decision.ranking[1];
  const double gap = static_cast<double>(decision.counts[first] - decision.counts[second]) /
                     static_cast<double>(decision.total);
  if (!(gap > delta)) decision.attach_to.push_back(decision.labels[second]);
  return decision.attach_to;
}

TaskId attach_task(TaskGraph& graph, std::string name, std::vector<std::string> labels,
                   const std::vector<std::string>& attach_to) {
  if (attach_to.empty() || attach_to.size() > 2) {
    throw SchemaError("a new task attaches to one or two terminal labels");
  }
  std::vector<Dependency> entries;
  for (const auto& label : attach_to) {
    if (!graph.is_terminal(label)) {
      throw SchemaError("cannot attach under '" + label + "': not a terminal label");
    }
    const TaskId parent = *graph.owner_of(label);
    for (const auto& e : entries) {
      if (e.parent == parent) {
        throw SchemaError("labels '" + e.label + "' and '" + label + "' both belong to task " +
                          std::to_string(parent) + "; a dependency row holds one label per parent");
      }
    }
    entries.push_back({0, parent, label});
  }
  const TaskId id = graph.add_task(std::move(name), std::move(labels));
  for (const auto& e : entries) graph.set_dependency(id, e.parent, e.label);
  const auto violations = validate_graph(graph, Topology::MultiParent);
  if (!violations.empty()) {
    graph.remove_last_task();
    std::string msg = "attaching the task breaks the hierarchy:";
    for (const auto& v : violations) msg += "\n  " + v.kind + ": " + v.detail;
    throw SchemaError(msg);
  }
  return id;
}

void detach_task(TaskGraph& graph) { graph.remove_last_task(); }

std::uint64_t head_weight_memory(const HeadSpec& spec, std::size_t feature_dim) {
  if (spec.layer_widths.empty()) {
    throw std::invalid_argument("a head needs at least one dense layer");
  }
  if (feature_dim == 0) throw std::invalid_argument("feature_dim must be positive");
  std::uint64_t total = 0;
  std::uint64_t previous = feature_dim;
  for (std::size_t q : spec.layer_widths) {
    if (q == 0) throw std::invalid_argument("head layer widths must be positive");
    total += static_cast<std::uint64_t>(q) * previous;
    previous = q;
  }
  return total;
}

std::uint64_t head_bias_count(const HeadSpec& spec) {
  return std::accumulate(spec.layer_widths.begin(), spec.layer_widths.end(), std::uint64_t{0});
}

std::size_t FeatureCache::bytes() const {
  std::size_t values = 0;
  for (const auto& f : features) values += f.size();
  return 4 * values;
}

FeatureCache build_feature_cache(const FeatureExtractor& fe, const AcquiredDataset& data) {
  FeatureCache cache;
  cache.features.reserve(data.windows.size());
  for (const auto& w : data.windows) cache.features.push_back(fe.forward(w));
  cache.labels = data.labels;
  return cache;
}

void OnlineConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be a finite non-negative number");
  }
}

HeadTrainReport train_new_head(ModelBundle& bundle, TaskId task, const AcquiredDataset& data,
                               const OnlineConfig& config) {
  data.validate();
  config.validate();
  const FeatureExtractor& fe = bundle.feature_extractor();
  Head& head = bundle.head(task);
  if (head.num_classes() != data.num_classes) {
    throw ShapeError("head of task " + std::to_string(task) + " has " +
                     std::to_string(head.num_classes()) + " outputs, dataset has " +
                     std::to_string(data.num_classes) + " classes");
  }

  HeadTrainReport report;
  report.weight_count = head_weight_memory(head.spec(), head.input_dim());
  report.bias_count = head_bias_count(head.spec());

  OpCounter fe_counter;
  FeatureCache cache;
  if (config.use_feature_cache) {
    cache = build_feature_cache(fe, data);
    report.fe_passes = cache.features.size();
    report.cache_bytes = cache.bytes();
  }

  SgdState sgd{config.learning_rate, config.seed, 0};
  const auto params = head.parameters();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    const auto order = epoch_order(data.windows.size(), config.seed, epoch, config.shuffle);
    for (std::size_t idx : order) {
      const Tensor feature = config.use_feature_cache
                                 ? cache.features[idx]
                                 : fe.forward(data.windows[idx], nullptr, &fe_counter);
      HeadTrace trace;
      const Tensor probs = softmax(head.logits(feature, &trace));
      const double loss = cross_entropy(probs, data.labels[idx]);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", sample " +
                           std::to_string(idx));
      }
      epoch_loss += loss;
      auto grads = head.backward(trace, softmax_cross_entropy_grad(probs, data.labels[idx]));
      sgd_step(params, grads.params, sgd);
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(data.windows.size()));
  }
  if (!config.use_feature_cache) report.fe_passes = fe_counter.fe_passes;
  return report;
}

AddTaskResult add_task(ModelBundle& bundle, std::string name, std::vector<std::string> labels,
                       const std::vector<std::size_t>& hidden_widths, const AcquiredDataset& data,
                       double delta, const OnlineConfig& config) {
  data.validate();
  if (labels.size() != data.num_classes) {
    throw std::invalid_argument("new task declares " + std::to_string(labels.size()) +
                                " labels, dataset has " + std::to_string(data.num_classes) +
                                " classes");
  }
  AddTaskResult result;
  result.decision = collect_placement_counts(bundle, data.windows);
  auto attach_to = select_node(result.decision, delta);
  if (attach_to.size() == 2 &&
      *bundle.graph().owner_of(attach_to[0]) == *bundle.graph().owner_of(attach_to[1])) {
    result.decision.note = "'" + attach_to[0] + "' and '" + attach_to[1] +
                           "' share a parent task; attached under '" + attach_to[0] + "' only";
    attach_to.resize(1);
    result.decision.attach_to = attach_to;
  }
  HeadSpec spec{hidden_widths};
  spec.layer_widths.push_back(labels.size());
  Rng rng(config.seed);
  Head head = Head::initialize(spec, bundle.feature_dim(), rng);
  result.task = bundle.attach_task(std::move(name), std::move(labels), attach_to, std::move(head));
  result.report = train_new_head(bundle, result.task, data, config);
  return result;
}

}  // namespace dendron
