#pragma once

// Task graph: tasks with ordered label sets and the dependency matrix D,
// where entry (i, j) names the label of task j that activates task i.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dendron {

using TaskId = std::size_t;  // 1..n; 0 is the composite task

struct Task {
  TaskId id = 0;
  std::string name;
  std::vector<std::string> labels;  // class index = position

  friend bool operator==(const Task&, const Task&) = default;
};

struct Dependency {
  TaskId task = 0;
  TaskId parent = 0;
  std::string label;  // member of parent's label set
};

class TaskGraph {
 public:
  /// Appends a task and returns its id (n + 1).
  TaskId add_task(std::string name, std::vector<std::string> labels);

  /// Sets d[task][parent] = label.
  void set_dependency(TaskId task, TaskId parent, std::string label);
  void clear_dependency(TaskId task, TaskId parent);

  /// Drops task n and every dependency row/column entry that mentions it.
  void remove_last_task();

  std::size_t size() const noexcept { return tasks_.size(); }
  bool empty() const noexcept { return tasks_.empty(); }
  bool contains(TaskId id) const noexcept { return id >= 1 && id <= tasks_.size(); }
  const Task& task(TaskId id) const;
  const std::vector<Task>& tasks() const noexcept { return tasks_; }

  const std::optional<std::string>& dependency(TaskId task, TaskId parent) const;
  std::vector<Dependency> dependencies() const;  // row-major order
  std::vector<Dependency> parents_of(TaskId task) const;

  /// Task activated when `parent` predicts `label`, if any. With several
  /// candidates (an invalid graph) the lowest id is returned.
  std::optional<TaskId> child_for(TaskId parent, std::string_view label) const;

  std::optional<std::size_t> label_index(TaskId task, std::string_view label) const;

  /// Task owning `label`; labels are unique across the whole graph.
  std::optional<TaskId> owner_of(std::string_view label) const;

  /// The composite label set: every label that activates no task, ordered by
  /// task id then class index.
  std::vector<std::string> terminal_labels() const;
  bool is_terminal(std::string_view label) const;

  friend bool operator==(const TaskGraph&, const TaskGraph&) = default;

 private:
  void check_task(TaskId id) const;

  std::vector<Task> tasks_;
  std::vector<std::vector<std::optional<std::string>>> deps_;  // [task-1][parent-1]
};

enum class Topology {
  Tree,           // one parent per task; enforced when a schema is loaded for training
  MultiParent,    // a task may hang off several (parent, label) pairs
};

struct Violation {
  std::string kind;
  std::string detail;
  TaskId task = 0;
  TaskId parent = 0;
  std::string label;
};

/// Every violated well-formedness rule, empty when the graph is sound.
std::vector<Violation> validate_graph(const TaskGraph& graph, Topology topology = Topology::Tree);

/// The unique task with an all-empty dependency row. Throws SchemaError when
/// the graph does not validate (under the permissive topology).
TaskId root_task(const TaskGraph& graph);

/// Parents before children. Throws SchemaError on cycles.
std::vector<TaskId> topological_order(const TaskGraph& graph);

/// A root-to-terminal route: visited tasks plus the terminal label.
struct RoutePath {
  std::vector<TaskId> tasks;
  std::vector<std::size_t> classes;  // predicted class at each visited task
  std::string terminal;
};

/// All routes from the root, depth-first in class-index order. Every
/// (task, label) choice that activates a child is followed.
std::vector<RoutePath> enumerate_routes(const TaskGraph& graph);

// Schema text ------------------------------------------------------------

/// Canonical text form; parse_schema(serialize_schema(g)) == g and
/// serialize_schema(parse_schema(s)) == s for canonical s.
std::string serialize_schema(const TaskGraph& graph);

/// Parses the schema text and checks the declared terminal labels against
/// the derived composite set. Does not validate topology.
TaskGraph parse_schema(std::string_view text);

TaskGraph load_schema_file(const std::string& path);
void save_schema_file(const TaskGraph& graph, const std::string& path);

/// The six-task activity hierarchy used throughout the tests and examples:
/// static/moving at the root, lying vs upright and sitting vs standing under
/// static, running vs walking-or-stairs under moving, walking vs stairs, and
/// upstairs vs downstairs.
TaskGraph activity_hierarchy();

}  // namespace dendron
