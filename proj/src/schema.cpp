#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "dendron/error.hpp"
#include "dendron/hierarchy.hpp"

namespace dendron {

namespace {

constexpr std::string_view kSchemaHeader = "dendron-schema 1";

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

std::size_t parse_index(const std::string& tok, std::size_t line_no) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || tok.empty() || tok[0] == '-') {
    throw SchemaError("schema line " + std::to_string(line_no) + ": '" + tok +
                      "' is not a task id");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string serialize_schema(const TaskGraph& graph) {
  std::ostringstream os;
  os << kSchemaHeader << '\n';
  for (const auto& t : graph.tasks()) {
    os << "task " << t.id << ' ' << t.name;
    for (const auto& label : t.labels) os << ' ' << label;
    os << '\n';
  }
  for (const auto& d : graph.dependencies()) {
    os << "depends " << d.task << ' ' << d.parent << ' ' << d.label << '\n';
  }
  for (const auto& label : graph.terminal_labels()) os << "terminal " << label << '\n';
  return os.str();
}

TaskGraph parse_schema(std::string_view text) {
  std::istringstream is{std::string(text)};
  TaskGraph graph;
  std::vector<std::string> declared_terminals;
  bool saw_header = false;
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& why) -> SchemaError {
      return SchemaError("schema line " + std::to_string(line_no) + ": " + why);
    };
    if (!saw_header) {
      if (tok.size() != 2 || tok[0] + " " + tok[1] != kSchemaHeader) {
        throw fail("expected header '" + std::string(kSchemaHeader) + "'");
      }
      saw_header = true;
      continue;
    }
    if (tok[0] == "task") {
      if (tok.size() < 4) throw fail("task needs an id, a name and at least one label");
      const std::size_t id = parse_index(tok[1], line_no);
      if (id != graph.size() + 1) {
        throw fail("task ids must be consecutive from 1; expected " +
                   std::to_string(graph.size() + 1) + ", got " + tok[1]);
      }
      graph.add_task(tok[2], std::vector<std::string>(tok.begin() + 3, tok.end()));
    } else if (tok[0] == "depends") {
      if (tok.size() != 4) throw fail("depends takes <task> <parent_task> <parent_label>");
      const std::size_t task = parse_index(tok[1], line_no);
      const std::size_t parent = parse_index(tok[2], line_no);
      if (!graph.contains(task) || !graph.contains(parent)) {
        throw fail("dependency refers to an undeclared task");
      }
      if (graph.dependency(task, parent)) throw fail("duplicate dependency entry");
      graph.set_dependency(task, parent, tok[3]);
    } else if (tok[0] == "terminal") {
      if (tok.size() != 2) throw fail("terminal takes exactly one label");
      declared_terminals.push_back(tok[1]);
    } else {
      throw fail("unknown directive '" + tok[0] + "'");
    }
  }
  if (!saw_header) throw SchemaError("schema is empty");

  const auto derived = graph.terminal_labels();
  const std::set<std::string> want(derived.begin(), derived.end());
  const std::set<std::string> got(declared_terminals.begin(), declared_terminals.end());
  if (got.size() != declared_terminals.size()) {
    throw SchemaError("schema declares a terminal label twice");
  }
  if (want != got) {
    std::string msg = "declared terminal labels do not match the hierarchy; derived:";
    for (const auto& l : derived) msg += ' ' + l;
    throw SchemaError(msg);
  }
  return graph;
}

TaskGraph load_schema_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open schema file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema(buf.str());
}

void save_schema_file(const TaskGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write schema file " + path);
  out << serialize_schema(graph);
  if (!out) throw DataError("failed writing schema file " + path);
}

}  // namespace dendron
