#include "dendron/hierarchy.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "dendron/error.hpp"

namespace dendron {

TaskId TaskGraph::add_task(std::string name, std::vector<std::string> labels) {
  const TaskId id = tasks_.size() + 1;
  tasks_.push_back({id, std::move(name), std::move(labels)});
  for (auto& row : deps_) row.emplace_back();
  deps_.emplace_back(tasks_.size());
  return id;
}

void TaskGraph::check_task(TaskId id) const {
  if (!contains(id)) {
    throw SchemaError("task " + std::to_string(id) + " does not exist (graph has " +
                      std::to_string(size()) + " tasks)");
  }
}

void TaskGraph::set_dependency(TaskId task, TaskId parent, std::string label) {
  check_task(task);
  check_task(parent);
  deps_[task - 1][parent - 1] = std::move(label);
}

void TaskGraph::clear_dependency(TaskId task, TaskId parent) {
  check_task(task);
  check_task(parent);
  deps_[task - 1][parent - 1].reset();
}

void TaskGraph::remove_last_task() {
  if (tasks_.empty()) throw SchemaError("cannot remove a task from an empty graph");
  tasks_.pop_back();
  deps_.pop_back();
  for (auto& row : deps_) row.pop_back();
}

const Task& TaskGraph::task(TaskId id) const {
  check_task(id);
  return tasks_[id - 1];
}

const std::optional<std::string>& TaskGraph::dependency(TaskId task, TaskId parent) const {
  check_task(task);
  check_task(parent);
  return deps_[task - 1][parent - 1];
}

std::vector<Dependency> TaskGraph::dependencies() const {
  std::vector<Dependency> out;
  for (std::size_t i = 0; i < deps_.size(); ++i) {
    for (std::size_t j = 0; j < deps_[i].size(); ++j) {
      if (deps_[i][j]) out.push_back({i + 1, j + 1, *deps_[i][j]});
    }
  }
  return out;
}

std::vector<Dependency> TaskGraph::parents_of(TaskId task) const {
  check_task(task);
  std::vector<Dependency> out;
  for (std::size_t j = 0; j < deps_[task - 1].size(); ++j) {
    if (deps_[task - 1][j]) out.push_back({task, j + 1, *deps_[task - 1][j]});
  }
  return out;
}

std::optional<TaskId> TaskGraph::child_for(TaskId parent, std::string_view label) const {
  check_task(parent);
  for (std::size_t i = 0; i < deps_.size(); ++i) {
    const auto& d = deps_[i][parent - 1];
    if (d && *d == label) return i + 1;
  }
  return std::nullopt;
}

std::optional<std::size_t> TaskGraph::label_index(TaskId task, std::string_view label) const {
  const auto& labels = this->task(task).labels;
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

std::optional<TaskId> TaskGraph::owner_of(std::string_view label) const {
  for (const auto& t : tasks_) {
    if (std::find(t.labels.begin(), t.labels.end(), label) != t.labels.end()) return t.id;
  }
  return std::nullopt;
}

std::vector<std::string> TaskGraph::terminal_labels() const {
  std::vector<std::string> out;
  for (const auto& t : tasks_) {
    for (const auto& label : t.labels) {
      if (!child_for(t.id, label)) out.push_back(label);
    }
  }
  return out;
}

bool TaskGraph::is_terminal(std::string_view label) const {
  const auto owner = owner_of(label);
  return owner && !child_for(*owner, label);
}

// ---------------------------------------------------------------------------

namespace {

bool valid_token(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](unsigned char c) {
    return c <= ' ' || c == '#';
  });
}

}  // namespace

std::vector<Violation> validate_graph(const TaskGraph& graph, Topology topology) {
  std::vector<Violation> out;
  const std::size_t n = graph.size();
  if (n == 0) {
    out.push_back({"empty graph", "the graph has no tasks"});
    return out;
  }

  std::map<std::string, TaskId> label_owner;
  for (const auto& t : graph.tasks()) {
    if (!valid_token(t.name)) {
      out.push_back({"invalid name", "task name must be a non-empty token without spaces", t.id});
    }
    if (t.labels.size() < 2) {
      out.push_back({"too few labels",
                     "task " + std::to_string(t.id) + " has " + std::to_string(t.labels.size()) +
                         " labels; at least 2 are required",
                     t.id});
    }
    std::set<std::string> seen;
    for (const auto& label : t.labels) {
      if (!valid_token(label)) {
        out.push_back({"invalid label", "label '" + label + "' is not a plain token", t.id, 0, label});
      }
      if (!seen.insert(label).second) {
        out.push_back({"duplicate label", "label '" + label + "' repeated in task " +
                                              std::to_string(t.id),
                       t.id, 0, label});
        continue;
      }
      const auto [it, fresh] = label_owner.emplace(label, t.id);
      if (!fresh) {
        out.push_back({"label reused",
                       "label '" + label + "' belongs to tasks " + std::to_string(it->second) +
                           " and " + std::to_string(t.id),
                       t.id, it->second, label});
      }
    }
  }

  std::vector<TaskId> roots;
  std::map<std::pair<TaskId, std::string>, TaskId> trigger_owner;
  for (const auto& t : graph.tasks()) {
    const auto parents = graph.parents_of(t.id);
    if (parents.empty()) roots.push_back(t.id);
    if (topology == Topology::Tree && parents.size() > 1) {
      out.push_back({"multiple parents",
                     "task " + std::to_string(t.id) + " depends on " +
                         std::to_string(parents.size()) + " tasks",
                     t.id});
    }
    for (const auto& d : parents) {
      if (d.parent == t.id) {
        out.push_back({"self dependency", "task " + std::to_string(t.id) + " depends on itself",
                       t.id, d.parent, d.label});
        continue;
      }
      if (!graph.label_index(d.parent, d.label)) {
        out.push_back({"label not in parent label set",
                       "d[" + std::to_string(t.id) + "][" + std::to_string(d.parent) + "] = '" +
                           d.label + "' is not a label of task " + std::to_string(d.parent),
                       t.id, d.parent, d.label});
        continue;
      }
      const auto [it, fresh] = trigger_owner.emplace(std::pair{d.parent, d.label}, t.id);
      if (!fresh) {
        out.push_back({"shared trigger",
                       "tasks " + std::to_string(it->second) + " and " + std::to_string(t.id) +
                           " are both activated by label '" + d.label + "' of task " +
                           std::to_string(d.parent),
                       t.id, d.parent, d.label});
      }
    }
  }
  if (roots.empty()) {
    out.push_back({"no root", "every task depends on another task"});
  } else if (roots.size() > 1) {
    std::string ids;
    for (TaskId r : roots) ids += (ids.empty() ? "" : ", ") + std::to_string(r);
    out.push_back({"multiple roots", "tasks " + ids + " have no dependencies", roots[1]});
  }

  // Kahn's algorithm over parent -> child edges.
  std::vector<std::size_t> indegree(n + 1, 0);
  std::vector<std::vector<TaskId>> children(n + 1);
  for (const auto& d : graph.dependencies()) {
    if (d.parent == d.task) continue;
    ++indegree[d.task];
    children[d.parent].push_back(d.task);
  }
  std::deque<TaskId> ready;
  for (TaskId i = 1; i <= n; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  std::size_t ordered = 0;
  while (!ready.empty()) {
    const TaskId t = ready.front();
    ready.pop_front();
    ++ordered;
    for (TaskId c : children[t]) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  if (ordered != n) {
    for (TaskId i = 1; i <= n; ++i) {
      if (indegree[i] > 0) {
        out.push_back({"cycle", "task " + std::to_string(i) + " lies on a dependency cycle", i});
      }
    }
  }

  if (roots.size() == 1) {
    std::vector<bool> reached(n + 1, false);
    std::deque<TaskId> frontier{roots.front()};
    reached[roots.front()] = true;
    while (!frontier.empty()) {
      const TaskId t = frontier.front();
      frontier.pop_front();
      for (TaskId c : children[t]) {
        if (!reached[c]) {
          reached[c] = true;
          frontier.push_back(c);
        }
      }
    }
    for (TaskId i = 1; i <= n; ++i) {
      if (!reached[i]) {
        out.push_back({"unreachable task",
                       "task " + std::to_string(i) + " cannot be reached from root task " +
                           std::to_string(roots.front()),
                       i});
      }
    }
  }
  return out;
}

namespace {

[[noreturn]] void throw_violations(const std::vector<Violation>& violations) {
  std::string msg = "invalid task graph:";
  for (const auto& v : violations) msg += "\n  " + v.kind + ": " + v.detail;
  throw SchemaError(msg);
}

}  // namespace

TaskId root_task(const TaskGraph& graph) {
  const auto violations = validate_graph(graph, Topology::MultiParent);
  if (!violations.empty()) throw_violations(violations);
  for (const auto& t : graph.tasks()) {
    if (graph.parents_of(t.id).empty()) return t.id;
  }
  throw SchemaError("no root task");
}

std::vector<TaskId> topological_order(const TaskGraph& graph) {
  const std::size_t n = graph.size();
  std::vector<std::size_t> indegree(n + 1, 0);
  for (const auto& d : graph.dependencies()) ++indegree[d.task];
  std::set<TaskId> ready;
  for (TaskId i = 1; i <= n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  std::vector<TaskId> order;
  while (!ready.empty()) {
    const TaskId t = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(t);
    for (TaskId c = 1; c <= n; ++c) {
      if (graph.dependency(c, t) && --indegree[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != n) throw SchemaError("dependency matrix contains a cycle");
  return order;
}

std::vector<RoutePath> enumerate_routes(const TaskGraph& graph) {
  const TaskId root = root_task(graph);
  std::vector<RoutePath> routes;
  RoutePath current;
  auto walk = [&](auto&& self, TaskId t) -> void {
    const auto& labels = graph.task(t).labels;
    current.tasks.push_back(t);
    for (std::size_t c = 0; c < labels.size(); ++c) {
      current.classes.push_back(c);
      if (const auto child = graph.child_for(t, labels[c])) {
        self(self, *child);
      } else {
        current.terminal = labels[c];
        routes.push_back(current);
      }
      current.classes.pop_back();
    }
    current.tasks.pop_back();
  };
  walk(walk, root);
  return routes;
}

TaskGraph activity_hierarchy() {
  TaskGraph g;
  const TaskId state = g.add_task("static_vs_moving", {"static", "moving"});
  const TaskId posture = g.add_task("lying_vs_upright", {"lying", "upright"});
  const TaskId upright = g.add_task("sitting_vs_standing", {"sitting", "standing"});
  const TaskId gait = g.add_task("running_vs_walking", {"running", "walking_stairs"});
  const TaskId stairs = g.add_task("walking_vs_stairs", {"walking", "stairs"});
  const TaskId direction = g.add_task("upstairs_vs_downstairs", {"upstairs", "downstairs"});
  g.set_dependency(posture, state, "static");
  g.set_dependency(upright, posture, "upright");
  g.set_dependency(gait, state, "moving");
  g.set_dependency(stairs, gait, "walking_stairs");
  g.set_dependency(direction, stairs, "stairs");
  return g;
}

}  // namespace dendron
