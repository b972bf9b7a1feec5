#include "dendron/training.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "dendron/error.hpp"

namespace dendron {

TaskLabels derive_task_labels(const TaskGraph& graph, const std::string& terminal_label) {
  if (!graph.is_terminal(terminal_label)) {
    throw SchemaError("terminal label '" + terminal_label + "' is not reachable as a final label");
  }
  TaskLabels labels;
  for (const auto& t : graph.tasks()) labels[t.id] = kOffPath;

  TaskId current = *graph.owner_of(terminal_label);
  labels[current] = *graph.label_index(current, terminal_label);
  for (std::size_t guard = 0; guard < graph.size(); ++guard) {
    const auto parents = graph.parents_of(current);
    if (parents.empty()) return labels;
    const auto& via = parents.front();  // lowest parent id
    labels[via.parent] = *graph.label_index(via.parent, via.label);
    current = via.parent;
  }
  throw SchemaError("dependency cycle while routing to '" + terminal_label + "'");
}

MultiLabelSample make_sample(const TaskGraph& graph, Tensor window, const std::string& terminal) {
  return {std::move(window), derive_task_labels(graph, terminal), terminal};
}

std::string to_string(AlphaMode mode) {
  return mode == AlphaMode::Predicted ? "predicted" : "teacher_forced";
}

AlphaMode parse_alpha_mode(const std::string& text) {
  if (text == "predicted") return AlphaMode::Predicted;
  if (text == "teacher_forced") return AlphaMode::TeacherForced;
  throw DataError("alpha_mode must be 'predicted' or 'teacher_forced', got '" + text + "'");
}

namespace {

std::size_t target_class(const MultiLabelSample& sample, TaskId task) {
  const auto it = sample.labels.find(task);
  if (it == sample.labels.end() || it->second == kOffPath) return kOffPathSurrogate;
  return it->second;
}

struct ForwardState {
  FeatureExtractorTrace fe_trace;
  Tensor feature;
  std::map<TaskId, HeadTrace> traces;
  std::map<TaskId, Tensor> probs;
};

ForwardState forward_with_traces(const ModelBundle& bundle, const Tensor& window) {
  ForwardState s;
  s.feature = bundle.feature_extractor().forward(window, &s.fe_trace);
  for (const auto& [id, head] : bundle.heads()) {
    s.probs.emplace(id, softmax(head.logits(s.feature, &s.traces[id])));
  }
  return s;
}

std::map<TaskId, double> alphas_for(const ModelBundle& bundle, const MultiLabelSample& sample,
                                    const std::map<TaskId, Tensor>& probs, AlphaMode mode) {
  if (mode == AlphaMode::TeacherForced) {
    return compute_alphas(bundle.graph(), probs, sample.labels);
  }
  return compute_alphas(bundle.graph(), probs);
}

JointGradients backward_weighted(const ModelBundle& bundle, const MultiLabelSample& sample,
                                 const ForwardState& s, const std::map<TaskId, double>& alphas,
                                 bool include_fe) {
  JointGradients g;
  Tensor d_feature({s.feature.size()});
  for (const auto& [id, head] : bundle.heads()) {
    const double alpha = alphas.at(id);
    const Tensor& probs = s.probs.at(id);
    const std::size_t y = target_class(sample, id);
    const double loss = cross_entropy(probs, y);
    g.loss.per_task[id] = {alpha, loss};
    g.loss.total += alpha * loss;

    if (alpha == 0.0) {
      std::vector<Tensor> zeros;
      for (const auto& p : head.parameters()) zeros.emplace_back(p.tensor->shape());
      g.heads.emplace(id, std::move(zeros));
      continue;
    }
    Tensor d_logits = softmax_cross_entropy_grad(probs, y);
    for (double& v : d_logits.data()) v *= alpha;
    auto hg = head.backward(s.traces.at(id), d_logits);
    g.heads.emplace(id, std::move(hg.params));
    if (include_fe) {
      for (std::size_t i = 0; i < d_feature.size(); ++i) d_feature[i] += hg.d_feature[i];
    }
  }
  if (include_fe) g.feature_extractor = bundle.feature_extractor().backward(s.fe_trace, d_feature);
  return g;
}

}  // namespace

JointLoss joint_loss(const ModelBundle& bundle, const MultiLabelSample& sample, AlphaMode mode) {
  const auto probs = forward_all_heads(bundle, sample.window);
  const auto alphas = alphas_for(bundle, sample, probs, mode);
  JointLoss out;
  for (const auto& [id, p] : probs) {
    const double alpha = alphas.at(id);
    const double loss = cross_entropy(p, target_class(sample, id));
    out.per_task[id] = {alpha, loss};
    out.total += alpha * loss;
  }
  return out;
}

JointGradients joint_gradients(const ModelBundle& bundle, const MultiLabelSample& sample,
                               AlphaMode mode, bool include_feature_extractor) {
  const ForwardState s = forward_with_traces(bundle, sample.window);
  const auto alphas = alphas_for(bundle, sample, s.probs, mode);
  return backward_weighted(bundle, sample, s, alphas, include_feature_extractor);
}

JointGradients weighted_gradients(const ModelBundle& bundle, const MultiLabelSample& sample,
                                  const std::map<TaskId, double>& alphas,
                                  bool include_feature_extractor) {
  const ForwardState s = forward_with_traces(bundle, sample.window);
  return backward_weighted(bundle, sample, s, alphas, include_feature_extractor);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("learning_rate must be a finite non-negative number");
  }
}

double Evaluation::mean_class_accuracy() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : per_class) {
    if (c.total == 0) continue;
    sum += c.accuracy();
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

Evaluation evaluate(const ModelBundle& bundle, std::span<const Tensor> windows,
                    std::span<const std::string> labels) {
  if (windows.size() != labels.size()) {
    throw std::invalid_argument("evaluate: windows and labels differ in length");
  }
  Evaluation e;
  e.labels = bundle.graph().terminal_labels();
  const std::size_t k = e.labels.size();
  e.confusion.assign(k, std::vector<std::size_t>(k, 0));
  auto index_of = [&](const std::string& label) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < k; ++i) {
      if (e.labels[i] == label) return i;
    }
    return std::nullopt;
  };
  for (std::size_t s = 0; s < windows.size(); ++s) {
    const auto truth = index_of(labels[s]);
    if (!truth) {
      ++e.unknown;
      continue;
    }
    const auto trace = infer_hierarchical(bundle, windows[s]);
    const std::size_t predicted = *index_of(trace.final_label);
    ++e.confusion[*truth][predicted];
    ++e.total;
    if (predicted == *truth) ++e.correct;
  }
  for (std::size_t i = 0; i < k; ++i) {
    ClassAccuracy c{e.labels[i], e.confusion[i][i], 0};
    for (std::size_t v : e.confusion[i]) c.total += v;
    e.per_class.push_back(c);
  }
  return e;
}

Evaluation evaluate(const ModelBundle& bundle, std::span<const MultiLabelSample> samples) {
  std::vector<Tensor> windows;
  std::vector<std::string> labels;
  for (const auto& s : samples) {
    windows.push_back(s.window);
    labels.push_back(s.terminal_label);
  }
  return evaluate(bundle, windows, labels);
}

TrainReport train_joint(ModelBundle& bundle, std::span<const MultiLabelSample> dataset,
                        const TrainConfig& config, std::span<const MultiLabelSample> held_out) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train_joint: empty dataset");

  TrainReport report;
  report.config = config;
  SgdState sgd{config.learning_rate, config.seed, 0};
  const bool train_fe = !config.freeze_feature_extractor;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch + 1;
    const auto order = epoch_order(dataset.size(), config.seed, epoch, config.shuffle);
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const auto& sample = dataset[order[pos]];
      auto g = joint_gradients(bundle, sample, config.alpha_mode, train_fe);
      if (!std::isfinite(g.loss.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", sample " +
                           std::to_string(order[pos]));
      }
      stats.total_loss += g.loss.total;
      for (const auto& [id, term] : g.loss.per_task) stats.task_loss[id] += term.loss;

      std::vector<ParamRef> params;
      std::vector<Tensor> grads;
      if (train_fe) {
        for (auto& p : bundle.feature_extractor().parameters()) params.push_back(p);
        for (auto& t : g.feature_extractor) grads.push_back(std::move(t));
      }
      for (auto& [id, head_grads] : g.heads) {
        for (auto& p : bundle.head(id).parameters()) params.push_back(p);
        for (auto& t : head_grads) grads.push_back(std::move(t));
      }
      sgd_step(params, grads, sgd);
    }
    const double n = static_cast<double>(dataset.size());
    stats.total_loss /= n;
    for (auto& [id, v] : stats.task_loss) v /= n;
    report.epochs.push_back(std::move(stats));
  }
  if (!held_out.empty()) report.held_out = evaluate(bundle, held_out);
  return report;
}

// ---------------------------------------------------------------------------

void write_evaluation(const Evaluation& eval, std::ostream& out) {
  std::size_t width = 10;
  for (const auto& l : eval.labels) width = std::max(width, l.size() + 2);
  out << "confusion matrix (rows: true, columns: predicted)\n";
  out << std::setw(static_cast<int>(width)) << "";
  for (const auto& l : eval.labels) out << std::setw(static_cast<int>(width)) << l;
  out << '\n';
  for (std::size_t i = 0; i < eval.labels.size(); ++i) {
    out << std::setw(static_cast<int>(width)) << eval.labels[i];
    for (std::size_t v : eval.confusion[i]) out << std::setw(static_cast<int>(width)) << v;
    out << '\n';
  }
  out << std::fixed << std::setprecision(4);
  out << "accuracy " << eval.accuracy() << " (" << eval.correct << "/" << eval.total << ")"
      << ", mean per-class accuracy " << eval.mean_class_accuracy() << '\n';
  if (eval.unknown) out << "skipped " << eval.unknown << " windows with non-terminal labels\n";
  for (const auto& c : eval.per_class) {
    out << "class," << c.label << ',' << c.correct << ',' << c.total << ',' << c.accuracy()
        << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
}

void write_train_report(const TrainReport& report, const TaskGraph& graph, std::ostream& out) {
  out << std::left << std::setw(7) << "epoch" << std::setw(12) << "loss";
  for (const auto& t : graph.tasks()) out << std::setw(12) << ("L" + std::to_string(t.id));
  out << std::right << '\n';
  out << std::fixed << std::setprecision(6);
  for (const auto& e : report.epochs) {
    out << std::left << std::setw(7) << e.epoch << std::setw(12) << e.total_loss;
    for (const auto& t : graph.tasks()) {
      const auto it = e.task_loss.find(t.id);
      out << std::setw(12) << (it == e.task_loss.end() ? 0.0 : it->second);
    }
    out << std::right << '\n';
  }
  for (const auto& e : report.epochs) {
    out << "epoch," << e.epoch << ',' << e.total_loss;
    for (const auto& [id, v] : e.task_loss) out << ',' << id << ':' << v;
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
  if (report.held_out) write_evaluation(*report.held_out, out);
}

}  // namespace dendron
