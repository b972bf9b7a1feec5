#include "dendron/resources.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dendron/error.hpp"
#include "dendron/online.hpp"

namespace dendron {

std::uint64_t conv_macc(const FeatureExtractorSpec& spec) {
  const auto shapes = spec.signal_shapes();
  std::uint64_t total = 0;
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& block = spec.blocks[b];
    const std::uint64_t conv_len = shapes[b].second - block.kernel_size + 1;
    total += conv_len * block.num_filters * block.kernel_size * shapes[b].first;
  }
  return total;
}

std::uint64_t dense_macc(const HeadSpec& spec, std::size_t input_dim) {
  // Same product as the weight count of the dense stack.
  return head_weight_memory(spec, input_dim);
}

MaccCounts count_macc(const ModelBundle& bundle) {
  MaccCounts out;
  out.feature_extractor = conv_macc(bundle.feature_extractor().spec());
  for (const auto& [id, head] : bundle.heads()) {
    out.heads[id] = dense_macc(head.spec(), head.input_dim());
  }
  return out;
}

std::vector<std::vector<std::uint64_t>> activation_chains(const ModelBundle& bundle,
                                                          const std::vector<TaskId>& path) {
  const auto& spec = bundle.feature_extractor().spec();
  const auto shapes = spec.signal_shapes();
  std::vector<std::vector<std::uint64_t>> chains;
  std::vector<std::uint64_t> fe{static_cast<std::uint64_t>(shapes[0].first) * shapes[0].second};
  for (std::size_t b = 0; b < spec.blocks.size(); ++b) {
    const auto& block = spec.blocks[b];
    fe.push_back(static_cast<std::uint64_t>(block.num_filters) *
                 (shapes[b].second - block.kernel_size + 1));
    fe.push_back(static_cast<std::uint64_t>(shapes[b + 1].first) * shapes[b + 1].second);
  }
  chains.push_back(std::move(fe));
  for (TaskId id : path) {
    const Head& head = bundle.head(id);
    std::vector<std::uint64_t> chain{head.input_dim()};
    for (std::size_t w : head.spec().layer_widths) chain.push_back(w);
    chains.push_back(std::move(chain));
  }
  return chains;
}

std::uint64_t activation_peak(const ModelBundle& bundle, const std::vector<TaskId>& path) {
  std::uint64_t peak = 0;
  for (const auto& chain : activation_chains(bundle, path)) {
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      peak = std::max(peak, chain[i] + chain[i + 1]);
    }
  }
  return kBytesPerValue * peak;
}

ResourceReport compare_deployments(const ModelBundle& bundle) {
  const TaskGraph& graph = bundle.graph();
  const FeatureExtractor& fe = bundle.feature_extractor();
  const MaccCounts macc = count_macc(bundle);

  ResourceReport r;
  r.feature_extractor = {"feature_extractor", fe.weight_count(), fe.bias_count(),
                         macc.feature_extractor};
  for (const auto& [id, head] : bundle.heads()) {
    r.heads[id] = {"head" + std::to_string(id), head.weight_count(), head.bias_count(),
                   macc.heads.at(id)};
    r.head_weight_total += head_weight_memory(head.spec(), head.input_dim());
  }

  const TaskId root = root_task(graph);
  HeadSpec single_spec = bundle.head(root).spec();
  single_spec.layer_widths.back() = graph.terminal_labels().size();
  r.single_model_head = {"single_model_head", head_weight_memory(single_spec, fe.feature_dim()),
                         head_bias_count(single_spec), dense_macc(single_spec, fe.feature_dim())};

  const std::uint64_t n = graph.size();
  std::uint64_t head_weights = 0, head_biases = 0;
  for (const auto& [id, c] : r.heads) {
    head_weights += c.weights;
    head_biases += c.biases;
  }

  r.single_model.weights = r.feature_extractor.weights + r.single_model_head.weights;
  r.single_model.biases = r.feature_extractor.biases + r.single_model_head.biases;
  r.single_model.macc_worst = r.single_model.macc_best = macc.feature_extractor +
                                                         r.single_model_head.macc;
  r.single_model.macc_expected = static_cast<double>(r.single_model.macc_worst);

  r.hierarchical.weights = n * r.feature_extractor.weights + head_weights;
  r.hierarchical.biases = n * r.feature_extractor.biases + head_biases;
  r.dendron.weights = r.feature_extractor.weights + head_weights;
  r.dendron.biases = r.feature_extractor.biases + head_biases;

  bool first = true;
  for (const auto& route : enumerate_routes(graph)) {
    std::uint64_t heads_cost = 0;
    double probability = 1.0;
    for (TaskId t : route.tasks) {
      heads_cost += macc.heads.at(t);
      probability /= static_cast<double>(graph.task(t).labels.size());
    }
    const std::uint64_t shared = macc.feature_extractor + heads_cost;
    const std::uint64_t separate = route.tasks.size() * macc.feature_extractor + heads_cost;
    if (first || shared > r.dendron.macc_worst) {
      r.dendron.macc_worst = shared;
      r.worst_path = route.tasks;
    }
    r.dendron.macc_best = first ? shared : std::min(r.dendron.macc_best, shared);
    r.hierarchical.macc_worst = first ? separate : std::max(r.hierarchical.macc_worst, separate);
    r.hierarchical.macc_best = first ? separate : std::min(r.hierarchical.macc_best, separate);
    r.dendron.macc_expected += probability * static_cast<double>(shared);
    r.hierarchical.macc_expected += probability * static_cast<double>(separate);
    r.activation_peak_bytes = std::max(r.activation_peak_bytes, activation_peak(bundle, route.tasks));
    first = false;
  }
  return r;
}

void write_resource_report(const ResourceReport& report, std::ostream& out) {
  auto row = [&](const std::string& name, std::uint64_t weights, std::uint64_t biases,
                 std::uint64_t bytes, const std::string& macc) {
    out << std::left << std::setw(22) << name << std::right << std::setw(12) << weights
        << std::setw(10) << biases << std::setw(12) << bytes << std::setw(14) << macc << '\n';
  };
  out << std::left << std::setw(22) << "component" << std::right << std::setw(12) << "weights"
      << std::setw(10) << "biases" << std::setw(12) << "bytes" << std::setw(14) << "macc" << '\n';
  const auto& fe = report.feature_extractor;
  row(fe.name, fe.weights, fe.biases, fe.bytes(), std::to_string(fe.macc));
  for (const auto& [id, c] : report.heads) {
    row(c.name, c.weights, c.biases, c.bytes(), std::to_string(c.macc));
  }
  const auto& sh = report.single_model_head;
  row(sh.name, sh.weights, sh.biases, sh.bytes(), std::to_string(sh.macc));
  out << '\n';
  out << std::left << std::setw(22) << "deployment" << std::right << std::setw(12) << "weights"
      << std::setw(10) << "biases" << std::setw(12) << "bytes" << std::setw(14) << "macc_worst"
      << std::setw(14) << "macc_best" << std::setw(16) << "macc_expected" << '\n';
  auto deploy = [&](const std::string& name, const DeploymentTotals& d) {
    std::ostringstream expected;
    expected << std::fixed << std::setprecision(1) << d.macc_expected;
    out << std::left << std::setw(22) << name << std::right << std::setw(12) << d.weights
        << std::setw(10) << d.biases << std::setw(12) << d.bytes() << std::setw(14)
        << d.macc_worst << std::setw(14) << d.macc_best << std::setw(16) << expected.str()
        << '\n';
  };
  deploy("single_model", report.single_model);
  deploy("hierarchical", report.hierarchical);
  deploy("dendron", report.dendron);
  out << "\nworst path:";
  for (TaskId t : report.worst_path) out << " T" << t;
  out << "\nactivation peak: " << report.activation_peak_bytes << " bytes\n";
  out << "head weights (sum of m_w): " << report.head_weight_total << "\n\n";

  auto machine = [&](const std::string& name, std::uint64_t params, std::uint64_t bytes,
                     std::uint64_t macc) {
    out << "resource," << name << ',' << params << ',' << bytes << ',' << macc << '\n';
  };
  machine(fe.name, fe.params(), fe.bytes(), fe.macc);
  for (const auto& [id, c] : report.heads) machine(c.name, c.params(), c.bytes(), c.macc);
  machine(sh.name, sh.params(), sh.bytes(), sh.macc);
  machine("deploy.single_model", report.single_model.params(), report.single_model.bytes(),
          report.single_model.macc_worst);
  machine("deploy.hierarchical", report.hierarchical.params(), report.hierarchical.bytes(),
          report.hierarchical.macc_worst);
  machine("deploy.dendron", report.dendron.params(), report.dendron.bytes(),
          report.dendron.macc_worst);
  machine("activation_peak", 0, report.activation_peak_bytes, 0);
}

std::vector<ResourceRow> parse_resource_rows(const std::string& text) {
  std::vector<ResourceRow> rows;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (line.rfind("resource,", 0) != 0) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (fields.size() != 5) throw DataError("malformed resource row: " + line);
    try {
      rows.push_back({fields[1], std::stoull(fields[2]), std::stoull(fields[3]),
                      std::stoull(fields[4])});
    } catch (const std::exception&) {
      throw DataError("malformed resource row: " + line);
    }
  }
  return rows;
}

}  // namespace dendron
