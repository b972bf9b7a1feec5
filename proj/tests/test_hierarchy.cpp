#include <gtest/gtest.h>

#include <algorithm>

#include "dendron/error.hpp"
#include "dendron/hierarchy.hpp"
#include "dendron/model.hpp"
#include "oracles.hpp"

using namespace dendron;

namespace {

bool has_kind(const std::vector<Violation>& v, const std::string& kind) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == kind; });
}

// Identity extractor over a 1x1 window and bias-only heads that always pick
// the class given in `choice`.
ModelBundle fixed_choice_bundle(const TaskGraph& g, const std::map<TaskId, std::size_t>& choice) {
  FeatureExtractor fe({1, 1, {}}, {});
  std::map<TaskId, Head> heads;
  for (const auto& t : g.tasks()) {
    const std::size_t k = t.labels.size();
    Tensor bias({k});
    bias[choice.at(t.id)] = 3.0;
    heads.emplace(t.id, Head(HeadSpec{{k}}, 1, {DenseLayer{Tensor({k, 1}), bias}}));
  }
  return ModelBundle(std::move(fe), std::move(heads), g);
}

}  // namespace

TEST(TaskGraph, ActivityHierarchyIsATree) {
  const TaskGraph g = activity_hierarchy();
  EXPECT_EQ(g.size(), 6u);
  EXPECT_TRUE(validate_graph(g).empty());
  EXPECT_EQ(root_task(g), 1u);
  EXPECT_EQ(g.terminal_labels(),
            (std::vector<std::string>{"lying", "sitting", "standing", "running", "walking",
                                      "upstairs", "downstairs"}));
  EXPECT_EQ(*g.child_for(1, "static"), 2u);
  EXPECT_FALSE(g.child_for(2, "lying").has_value());
  EXPECT_EQ(*g.owner_of("walking"), 5u);
}

TEST(TaskGraph, TopologicalOrderPutsParentsFirst) {
  const TaskGraph g = activity_hierarchy();
  const auto order = topological_order(g);
  ASSERT_EQ(order.size(), 6u);
  auto pos = [&](TaskId t) { return std::find(order.begin(), order.end(), t) - order.begin(); };
  for (const auto& d : g.dependencies()) EXPECT_LT(pos(d.parent), pos(d.task));
}

TEST(TaskGraph, RoutesCoverEveryTerminalOnce) {
  const TaskGraph g = activity_hierarchy();
  const auto routes = enumerate_routes(g);
  ASSERT_EQ(routes.size(), 7u);
  std::vector<std::string> terminals;
  for (const auto& r : routes) {
    terminals.push_back(r.terminal);
    EXPECT_EQ(r.tasks.front(), 1u);
    EXPECT_EQ(r.tasks.size(), r.classes.size());
  }
  auto want = g.terminal_labels();
  std::sort(terminals.begin(), terminals.end());
  std::sort(want.begin(), want.end());
  EXPECT_EQ(terminals, want);
  const auto longest = std::max_element(routes.begin(), routes.end(), [](auto& a, auto& b) {
    return a.tasks.size() < b.tasks.size();
  });
  EXPECT_EQ(longest->tasks, (std::vector<TaskId>{1, 4, 5, 6}));
}

TEST(Validation, ReportsEachBrokenRule) {
  TaskGraph empty;
  EXPECT_TRUE(has_kind(validate_graph(empty), "empty graph"));

  TaskGraph g;
  g.add_task("a", {"x"});
  EXPECT_TRUE(has_kind(validate_graph(g), "too few labels"));

  TaskGraph dup;
  dup.add_task("a", {"x", "x"});
  EXPECT_TRUE(has_kind(validate_graph(dup), "duplicate label"));

  TaskGraph reused;
  reused.add_task("a", {"x", "y"});
  reused.add_task("b", {"y", "z"});
  reused.set_dependency(2, 1, "x");
  EXPECT_TRUE(has_kind(validate_graph(reused), "label reused"));

  TaskGraph self;
  self.add_task("a", {"x", "y"});
  self.set_dependency(1, 1, "x");
  EXPECT_TRUE(has_kind(validate_graph(self), "self dependency"));

  TaskGraph missing;
  missing.add_task("a", {"x", "y"});
  missing.add_task("b", {"p", "q"});
  missing.set_dependency(2, 1, "nope");
  EXPECT_TRUE(has_kind(validate_graph(missing), "label not in parent label set"));

  TaskGraph shared;
  shared.add_task("a", {"x", "y"});
  shared.add_task("b", {"p", "q"});
  shared.add_task("c", {"r", "s"});
  shared.set_dependency(2, 1, "x");
  shared.set_dependency(3, 1, "x");
  EXPECT_TRUE(has_kind(validate_graph(shared), "shared trigger"));

  TaskGraph roots;
  roots.add_task("a", {"x", "y"});
  roots.add_task("b", {"p", "q"});
  EXPECT_TRUE(has_kind(validate_graph(roots), "multiple roots"));

  TaskGraph cyc;
  cyc.add_task("r", {"u", "v"});
  cyc.add_task("a", {"x", "y"});
  cyc.add_task("b", {"p", "q"});
  cyc.set_dependency(2, 3, "p");
  cyc.set_dependency(3, 2, "x");
  EXPECT_TRUE(has_kind(validate_graph(cyc), "cycle"));

  TaskGraph bad_name;
  bad_name.add_task("has space", {"x", "y"});
  EXPECT_TRUE(has_kind(validate_graph(bad_name), "invalid name"));
}

TEST(Validation, TwoParentsOnlyUnderMultiParent) {
  TaskGraph g = activity_hierarchy();
  const TaskId t = g.add_task("extra", {"e1", "e2"});
  g.set_dependency(t, 2, "lying");
  g.set_dependency(t, 3, "sitting");
  EXPECT_TRUE(has_kind(validate_graph(g, Topology::Tree), "multiple parents"));
  EXPECT_TRUE(validate_graph(g, Topology::MultiParent).empty());
}

TEST(Validation, RootTaskThrowsOnInvalidGraph) {
  TaskGraph roots;
  roots.add_task("a", {"x", "y"});
  roots.add_task("b", {"p", "q"});
  EXPECT_THROW(root_task(roots), SchemaError);
}

TEST(Schema, RoundTripIsExact) {
  const TaskGraph g = activity_hierarchy();
  const std::string text = serialize_schema(g);
  const TaskGraph back = parse_schema(text);
  EXPECT_EQ(back, g);
  EXPECT_EQ(serialize_schema(back), text);
}

TEST(Schema, CommentsAndBlankLinesAreIgnored) {
  const std::string text =
      "# two levels\n"
      "dendron-schema 1\n\n"
      "task 1 root a b   # root\n"
      "task 2 sub c d\n"
      "depends 2 1 a\n"
      "terminal b\nterminal c\nterminal d\n";
  const TaskGraph g = parse_schema(text);
  EXPECT_EQ(g.terminal_labels(), (std::vector<std::string>{"b", "c", "d"}));
}

TEST(Schema, RejectsMalformedText) {
  EXPECT_THROW(parse_schema(""), SchemaError);
  EXPECT_THROW(parse_schema("dendron-schema 2\n"), SchemaError);
  EXPECT_THROW(parse_schema("dendron-schema 1\ntask 2 a x y\n"), SchemaError);
  EXPECT_THROW(parse_schema("dendron-schema 1\ntask 1 a x y\nbogus\n"), SchemaError);
  EXPECT_THROW(parse_schema("dendron-schema 1\ntask 1 a x y\ndepends 1 7 x\n"), SchemaError);
  // Declared terminals must match the derived set.
  EXPECT_THROW(parse_schema("dendron-schema 1\ntask 1 a x y\nterminal x\n"), SchemaError);
}

TEST(Inference, FollowsPredictedLabelsToATerminal) {
  const TaskGraph g = activity_hierarchy();
  const auto bundle = fixed_choice_bundle(g, {{1, 1}, {2, 1}, {3, 0}, {4, 1}, {5, 0}, {6, 0}});
  const auto trace = infer_hierarchical(bundle, Tensor({1, 1}));
  ASSERT_EQ(trace.visited.size(), 3u);
  EXPECT_EQ(trace.visited[0].label, "moving");
  EXPECT_EQ(trace.visited[1].label, "walking_stairs");
  EXPECT_EQ(trace.visited[2].label, "walking");
  EXPECT_EQ(trace.final_label, "walking");
  EXPECT_TRUE(g.is_terminal(trace.final_label));
}

TEST(Inference, CounterSeesOnlyVisitedHeads) {
  const TaskGraph g = activity_hierarchy();
  const auto bundle = fixed_choice_bundle(g, {{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}, {6, 0}});
  OpCounter counter;
  const auto trace = infer_hierarchical(bundle, Tensor({1, 1}), &counter);
  EXPECT_EQ(trace.final_label, "lying");
  EXPECT_EQ(counter.fe_passes, 1u);
  EXPECT_EQ(counter.head_passes, 2u);
}

TEST(Alphas, LeafCoverageSumsToOne) {
  const TaskGraph g = activity_hierarchy();
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<TaskId, Tensor> probs;
    for (const auto& t : g.tasks()) {
      Tensor z({t.labels.size()});
      for (auto& v : z.data()) v = rng.uniform(-4.0, 4.0);
      probs[t.id] = softmax(z);
    }
    const auto alpha = compute_alphas(g, probs);
    EXPECT_EQ(alpha.at(1), 1.0);
    long double coverage = 0;
    for (const auto& label : g.terminal_labels()) {
      const TaskId owner = *g.owner_of(label);
      coverage += alpha.at(owner) * probs.at(owner)[*g.label_index(owner, label)];
    }
    EXPECT_NEAR(static_cast<double>(coverage), 1.0, 1e-12);
    EXPECT_NEAR(static_cast<double>(oracle::leaf_mass(g, probs)), 1.0, 1e-12);
    EXPECT_NEAR(alpha.at(6), probs.at(1)[1] * probs.at(4)[1] * probs.at(5)[1], 1e-15);
  }
}

TEST(Alphas, TeacherForcedAreIndicators) {
  const TaskGraph g = activity_hierarchy();
  std::map<TaskId, Tensor> probs;
  for (const auto& t : g.tasks()) probs[t.id] = Tensor::vector({0.5, 0.5});
  // upstairs: moving, walking_stairs, stairs, upstairs
  const TaskLabels truth{{1, 1}, {2, kOffPath}, {3, kOffPath}, {4, 1}, {5, 1}, {6, 0}};
  const auto alpha = compute_alphas(g, probs, truth);
  EXPECT_EQ(alpha.at(1), 1.0);
  EXPECT_EQ(alpha.at(2), 0.0);
  EXPECT_EQ(alpha.at(3), 0.0);
  EXPECT_EQ(alpha.at(4), 1.0);
  EXPECT_EQ(alpha.at(5), 1.0);
  EXPECT_EQ(alpha.at(6), 1.0);
}

TEST(ModelBundle, RejectsHeadsThatDoNotMatchTheGraph) {
  const TaskGraph g = activity_hierarchy();
  Rng rng(1);
  auto fe = FeatureExtractor::initialize({1, 4, {}}, rng);
  std::map<TaskId, Head> heads;
  for (const auto& t : g.tasks()) heads.emplace(t.id, Head::initialize(HeadSpec{{3}}, 4, rng));
  EXPECT_THROW(ModelBundle(fe, heads, g), ShapeError);
}

TEST(ModelBundle, InitializeIsDeterministic) {
  const TaskGraph g = activity_hierarchy();
  const auto a = ModelBundle::initialize({2, 12, {{3, 2, 2}}}, {4}, g, 5);
  const auto b = ModelBundle::initialize({2, 12, {{3, 2, 2}}}, {4}, g, 5);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(*pa[i].tensor, *pb[i].tensor);
  }
}
