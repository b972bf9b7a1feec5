#include "dendron/model.hpp"

#include <algorithm>

#include "dendron/error.hpp"
#include "dendron/online.hpp"

namespace dendron {

namespace {

TaskId first_root(const TaskGraph& graph) {
  for (const auto& t : graph.tasks()) {
    if (graph.parents_of(t.id).empty()) return t.id;
  }
  throw SchemaError("task graph has no root");
}

}  // namespace

ModelBundle::ModelBundle(FeatureExtractor fe, std::map<TaskId, Head> heads, TaskGraph graph,
                         Topology topology)
    : fe_(std::move(fe)), heads_(std::move(heads)), graph_(std::move(graph)) {
  check_consistency(topology);
}

void ModelBundle::check_consistency(Topology topology) const {
  const auto violations = validate_graph(graph_, topology);
  if (!violations.empty()) {
    std::string msg = "model graph is invalid:";
    for (const auto& v : violations) msg += "\n  " + v.kind + ": " + v.detail;
    throw SchemaError(msg);
  }
  if (heads_.size() != graph_.size()) {
    throw SchemaError("model has " + std::to_string(heads_.size()) + " heads for " +
                      std::to_string(graph_.size()) + " tasks");
  }
  const std::size_t feature_dim = fe_.feature_dim();
  for (const auto& t : graph_.tasks()) {
    const auto it = heads_.find(t.id);
    if (it == heads_.end()) throw SchemaError("task " + std::to_string(t.id) + " has no head");
    if (it->second.input_dim() != feature_dim) {
      throw ShapeError("head of task " + std::to_string(t.id) + " reads " +
                       std::to_string(it->second.input_dim()) + " features, extractor yields " +
                       std::to_string(feature_dim));
    }
    if (it->second.num_classes() != t.labels.size()) {
      throw ShapeError("head of task " + std::to_string(t.id) + " has " +
                       std::to_string(it->second.num_classes()) + " outputs for " +
                       std::to_string(t.labels.size()) + " labels");
    }
  }
}

ModelBundle ModelBundle::initialize(const FeatureExtractorSpec& fe_spec,
                                    const std::vector<std::size_t>& hidden_widths,
                                    TaskGraph graph, std::uint64_t seed) {
  Rng rng(seed);
  FeatureExtractor fe = FeatureExtractor::initialize(fe_spec, rng);
  std::map<TaskId, Head> heads;
  for (const auto& t : graph.tasks()) {
    HeadSpec spec{hidden_widths};
    spec.layer_widths.push_back(t.labels.size());
    heads.emplace(t.id, Head::initialize(spec, fe.feature_dim(), rng));
  }
  return ModelBundle(std::move(fe), std::move(heads), std::move(graph));
}

const Head& ModelBundle::head(TaskId id) const {
  const auto it = heads_.find(id);
  if (it == heads_.end()) throw SchemaError("no head for task " + std::to_string(id));
  return it->second;
}

Head& ModelBundle::head(TaskId id) {
  const auto it = heads_.find(id);
  if (it == heads_.end()) throw SchemaError("no head for task " + std::to_string(id));
  return it->second;
}

std::vector<ParamRef> ModelBundle::parameters() {
  auto out = fe_.parameters();
  for (auto& [id, head] : heads_) {
    for (auto& p : head.parameters()) {
      out.push_back({"head" + std::to_string(id) + "." + p.name, p.tensor});
    }
  }
  return out;
}

std::vector<ConstParamRef> ModelBundle::parameters() const {
  auto out = fe_.parameters();
  for (const auto& [id, head] : heads_) {
    for (const auto& p : head.parameters()) {
      out.push_back({"head" + std::to_string(id) + "." + p.name, p.tensor});
    }
  }
  return out;
}

TaskId ModelBundle::attach_task(std::string name, std::vector<std::string> labels,
                                const std::vector<std::string>& attach_to, Head head) {
  if (head.input_dim() != fe_.feature_dim()) {
    throw ShapeError("new head reads " + std::to_string(head.input_dim()) +
                     " features, extractor yields " + std::to_string(fe_.feature_dim()));
  }
  if (head.num_classes() != labels.size()) {
    throw ShapeError("new head has " + std::to_string(head.num_classes()) + " outputs for " +
                     std::to_string(labels.size()) + " labels");
  }
  const TaskId id = dendron::attach_task(graph_, std::move(name), std::move(labels), attach_to);
  heads_.emplace(id, std::move(head));
  return id;
}

void ModelBundle::detach_last_task() {
  if (graph_.size() <= 1) throw SchemaError("cannot detach the only task");
  heads_.erase(graph_.size());
  graph_.remove_last_task();
}

// ---------------------------------------------------------------------------

InferenceTrace infer_from_feature(const ModelBundle& bundle, const Tensor& feature,
                                  OpCounter* counter) {
  const TaskGraph& graph = bundle.graph();
  InferenceTrace trace;
  TaskId current = first_root(graph);
  for (std::size_t step = 0; step < graph.size(); ++step) {
    TraceStep s;
    s.task = current;
    s.confidences = bundle.head(current).predict(feature, counter);
    s.class_index = argmax(s.confidences);
    s.label = graph.task(current).labels.at(s.class_index);
    const std::string label = s.label;
    trace.visited.push_back(std::move(s));
    if (const auto child = graph.child_for(current, label)) {
      current = *child;
      continue;
    }
    if (!graph.is_terminal(label)) {
      throw SchemaError("task " + std::to_string(current) + " predicted '" + label +
                        "', which is neither terminal nor a registered dependency");
    }
    trace.final_label = label;
    return trace;
  }
  throw SchemaError("inference did not reach a terminal label within " +
                    std::to_string(graph.size()) + " steps");
}

InferenceTrace infer_hierarchical(const ModelBundle& bundle, const Tensor& window,
                                  OpCounter* counter) {
  const Tensor feature = bundle.feature_extractor().forward(window, nullptr, counter);
  return infer_from_feature(bundle, feature, counter);
}

std::map<TaskId, Tensor> forward_all_heads(const ModelBundle& bundle, const Tensor& window,
                                           OpCounter* counter) {
  const Tensor feature = bundle.feature_extractor().forward(window, nullptr, counter);
  std::map<TaskId, Tensor> out;
  for (const auto& [id, head] : bundle.heads()) out.emplace(id, head.predict(feature, counter));
  return out;
}

std::map<TaskId, Tensor> forward_route(const ModelBundle& bundle, const Tensor& window,
                                       const std::vector<TaskId>& tasks, OpCounter* counter) {
  const Tensor feature = bundle.feature_extractor().forward(window, nullptr, counter);
  std::map<TaskId, Tensor> out;
  for (TaskId id : tasks) out.emplace(id, bundle.head(id).predict(feature, counter));
  return out;
}

std::map<TaskId, double> compute_alphas(const TaskGraph& graph,
                                        const std::map<TaskId, Tensor>& head_outputs,
                                        const std::optional<TaskLabels>& ground_truth) {
  const auto order = topological_order(graph);
  std::map<TaskId, double> alpha;
  for (TaskId t : order) {
    const auto parents = graph.parents_of(t);
    if (parents.empty()) {
      alpha[t] = 1.0;
      continue;
    }
    double sum = 0.0;
    for (const auto& d : parents) {
      const auto idx = graph.label_index(d.parent, d.label);
      if (!idx) {
        throw SchemaError("dependency label '" + d.label + "' is not a label of task " +
                          std::to_string(d.parent));
      }
      double confidence = 0.0;
      if (ground_truth) {
        const auto it = ground_truth->find(d.parent);
        confidence = (it != ground_truth->end() && it->second == *idx) ? 1.0 : 0.0;
      } else {
        const auto it = head_outputs.find(d.parent);
        if (it == head_outputs.end()) {
          throw SchemaError("no head output for task " + std::to_string(d.parent));
        }
        confidence = it->second[*idx];
      }
      sum += confidence * alpha.at(d.parent);
    }
    alpha[t] = sum;
  }
  return alpha;
}

}  // namespace dendron
