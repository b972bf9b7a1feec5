#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "dendron/error.hpp"
#include "dendron/online.hpp"
#include "dendron/resources.hpp"

namespace dendron::cli {

namespace {

struct Flags {
  std::string schema, data, test_data, config, out, model, classes, name, counts, preset, out_dir;
  std::string window_seconds, overlap, label_rule;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;
  std::optional<std::uint64_t> seed;
  double delta = 0.5;
  double seconds = 90.0, test_seconds = 40.0, noise = 0.08;
  bool no_cache = false;
};

void print_command(std::ostream& out, const std::string& command,
                   const std::vector<std::pair<std::string, std::string>>& flags) {
  out << "command: " << command;
  for (const auto& [k, v] : flags) {
    if (!v.empty()) out << " --" << k << ' ' << v;
  }
  out << '\n';
}

void print_config(std::ostream& out, const RunConfig& config) {
  out << "# resolved config\n";
  write_run_config(config, out);
  out << "# end config\n";
}

RunConfig resolve_config(const Flags& f, std::ostream& out) {
  RunConfig config = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.epochs) config.epochs = *f.epochs;
  if (f.learning_rate) config.set("learning_rate", std::to_string(*f.learning_rate));
  if (f.seed) config.seed = *f.seed;
  if (!f.data.empty()) config.train_data = f.data;
  if (!f.test_data.empty()) config.test_data = f.test_data;
  if (!f.window_seconds.empty()) config.set("window_seconds", f.window_seconds);
  if (!f.overlap.empty()) config.set("overlap", f.overlap);
  if (!f.label_rule.empty()) config.set("label_rule", f.label_rule);
  if (const char* env = std::getenv("DENDRON_SEED"); env && *env) {
    RunConfig probe;
    probe.set("seed", env);
    config.seed = probe.seed;
    out << "seed override from DENDRON_SEED=" << env << '\n';
  }
  return config;
}

std::vector<LabeledWindow> load_windows(const std::string& path, const WindowingConfig& windowing,
                                        std::size_t expected_len, std::size_t expected_channels) {
  const RawRecording rec = read_csv_file(path);
  const std::size_t len = windowing.window_samples(rec.sample_rate_hz);
  if (expected_len && len != expected_len) {
    throw DataError(path + ": windows of " + std::to_string(len) + " samples, model expects " +
                    std::to_string(expected_len));
  }
  if (expected_channels && rec.channels.size() != expected_channels) {
    throw DataError(path + ": " + std::to_string(rec.channels.size()) +
                    " channels, model expects " + std::to_string(expected_channels));
  }
  return segment_windows(rec, windowing);
}

std::vector<MultiLabelSample> to_samples(const TaskGraph& graph,
                                         const std::vector<LabeledWindow>& windows) {
  std::vector<MultiLabelSample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    if (!graph.is_terminal(w.label)) {
      throw DataError("label '" + w.label + "' at offset " + std::to_string(w.offset) +
                      " is not a terminal label of the schema");
    }
    out.push_back(make_sample(graph, w.window, w.label));
  }
  return out;
}

/// Windowing for a saved model: window length comes from the model, overlap
/// and label rule from the flags.
WindowingConfig model_windowing(const Flags& f, const ModelBundle& bundle,
                                const std::string& data_path) {
  RunConfig c;
  if (!f.overlap.empty()) c.set("overlap", f.overlap);
  if (!f.label_rule.empty()) c.set("label_rule", f.label_rule);
  std::ifstream probe(data_path);
  if (!probe) throw DataError("cannot open dataset " + data_path);
  std::string first, second;
  std::getline(probe, first);
  std::getline(probe, second);
  std::istringstream header(first + "\n" + second + "\n");
  const RawRecording header_only = read_csv(header, data_path);
  c.windowing.window_seconds =
      static_cast<double>(bundle.feature_extractor().spec().window_len) / header_only.sample_rate_hz;
  return c.windowing;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  std::uint64_t seed = f.seed.value_or(1);
  if (const char* env = std::getenv("DENDRON_SEED"); env && *env) {
    RunConfig probe;
    probe.set("seed", env);
    seed = probe.seed;
    out << "seed override from DENDRON_SEED=" << env << '\n';
  }
  print_command(out, "synth", {{"preset", f.preset},
                               {"out-dir", f.out_dir},
                               {"seed", std::to_string(seed)},
                               {"seconds", std::to_string(f.seconds)},
                               {"test-seconds", std::to_string(f.test_seconds)},
                               {"noise", std::to_string(f.noise)}});
  std::vector<ClassSpec> specs;
  if (f.preset == "four-class") {
    specs = four_class_specs(f.noise);
  } else if (f.preset == "fine-split") {
    specs = fine_split_specs(f.noise);
  } else {
    throw UsageError("unknown preset '" + f.preset + "' (four-class, fine-split)");
  }
  std::filesystem::create_directories(f.out_dir);
  const auto dir = std::filesystem::path(f.out_dir);
  // Train and test come from disjoint seeds so no window is shared.
  write_csv_file(synth_generate(specs, seed, f.seconds), (dir / "train.csv").string());
  write_csv_file(synth_generate(specs, seed + 1000003, f.test_seconds), (dir / "test.csv").string());
  out << "wrote " << (dir / "train.csv").string() << '\n';
  out << "wrote " << (dir / "test.csv").string() << '\n';
  if (f.preset == "four-class") {
    save_schema_file(four_class_hierarchy(), (dir / "schema.txt").string());
    out << "wrote " << (dir / "schema.txt").string() << '\n';
  }
  return kOk;
}

int cmd_train(const Flags& f, std::ostream& out) {
  RunConfig config = resolve_config(f, out);
  print_command(out, "train", {{"schema", f.schema}, {"config", f.config}, {"out", f.out}});
  print_config(out, config);
  if (config.train_data.empty()) throw UsageError("train: no training data (--data or train_data)");

  TaskGraph graph = load_schema_file(f.schema);
  const RawRecording rec = read_csv_file(config.train_data);
  const auto windows = segment_windows(rec, config.windowing);
  const auto train = to_samples(graph, windows);
  std::vector<MultiLabelSample> test;
  if (!config.test_data.empty()) {
    test = to_samples(graph, load_windows(config.test_data, config.windowing, 0, rec.channels.size()));
  }

  FeatureExtractorSpec fe{rec.channels.size(), config.windowing.window_samples(rec.sample_rate_hz),
                          config.fe_blocks};
  ModelBundle bundle = ModelBundle::initialize(fe, config.head_hidden, graph, config.seed);
  out << "windows: train " << train.size() << ", test " << test.size() << '\n';
  out << "feature_dim " << bundle.feature_dim() << '\n';

  if (config.epochs == 0) {
    out << "epochs=0: writing the initialized model\n";
  } else {
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.learning_rate = config.learning_rate;
    tc.seed = config.seed;
    tc.alpha_mode = config.alpha_mode;
    tc.shuffle = config.shuffle;
    const TrainReport report = train_joint(bundle, train, tc, test);
    write_train_report(report, bundle.graph(), out);
  }
  save_model_file(bundle, f.out);
  out << "model digest " << model_digest(bundle) << '\n';
  out << "wrote " << f.out << '\n';
  return kOk;
}

int cmd_infer(const Flags& f, std::ostream& out, bool traces) {
  print_command(out, traces ? "infer" : "eval",
                {{"model", f.model}, {"data", f.data}, {"overlap", f.overlap},
                 {"label-rule", f.label_rule}});
  const ModelBundle bundle = load_model_file(f.model);
  const WindowingConfig windowing = model_windowing(f, bundle, f.data);
  out << "# resolved windowing\nwindow_samples=" << bundle.feature_extractor().spec().window_len
      << "\noverlap=" << windowing.overlap_fraction
      << "\nlabel_rule=" << to_string(windowing.label_rule) << '\n';
  const auto windows = load_windows(f.data, windowing, bundle.feature_extractor().spec().window_len,
                                    bundle.feature_extractor().spec().input_channels);
  std::vector<Tensor> tensors;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    tensors.push_back(windows[i].window);
    labels.push_back(windows[i].label);
    if (!traces) continue;
    const InferenceTrace trace = infer_hierarchical(bundle, windows[i].window);
    out << "trace," << i << ',' << windows[i].offset << ',' << windows[i].label << ','
        << trace.final_label << ',';
    for (std::size_t s = 0; s < trace.visited.size(); ++s) {
      const auto& step = trace.visited[s];
      out << (s ? ">" : "") << 'T' << step.task << ':' << step.label << ':' << std::fixed
          << std::setprecision(4) << step.confidences[step.class_index];
    }
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6) << '\n';
  }
  write_evaluation(evaluate(bundle, tensors, labels), out);
  return kOk;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string item; std::getline(is, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_decision(const PlacementDecision& d, std::ostream& out) {
  out << "placement counts (" << d.total << " windows):\n";
  for (std::size_t idx : d.ranking) {
    out << "  " << d.labels[idx] << ' ' << d.counts[idx] << '\n';
  }
  out << std::fixed << std::setprecision(6);
  out << "f' = " << d.f_prime << ", f'' = " << d.f_second << ", f' - f'' = "
      << d.f_prime - d.f_second << ", delta = " << d.delta << '\n';
  out.unsetf(std::ios::floatfield);
  out << std::setprecision(6);
  out << "attach:";
  for (std::size_t i = 0; i < d.attach_to.size(); ++i) out << (i ? ", " : " ") << d.attach_to[i];
  out << '\n';
  if (!d.note.empty()) out << "note: " << d.note << '\n';
}

int cmd_add_task(const Flags& f, std::ostream& out) {
  RunConfig config = resolve_config(f, out);
  print_command(out, "add-task", {{"model", f.model},
                                  {"classes", f.classes},
                                  {"delta", std::to_string(f.delta)},
                                  {"counts", f.counts},
                                  {"name", f.name},
                                  {"out", f.out},
                                  {"no-cache", f.no_cache ? "true" : ""}});
  print_config(out, config);
  if (!(f.delta >= 0.0 && f.delta <= 1.0)) throw UsageError("--delta must lie in [0, 1]");

  ModelBundle bundle = load_model_file(f.model);

  if (!f.counts.empty()) {
    // Placement only, from externally tallied predictions.
    std::vector<std::string> labels;
    std::vector<std::size_t> counts;
    for (const auto& item : split_list(f.counts)) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw UsageError("--counts expects label=count pairs");
      labels.push_back(item.substr(0, eq));
      RunConfig probe;
      probe.set("epochs", item.substr(eq + 1));
      counts.push_back(probe.epochs);
      if (!bundle.graph().is_terminal(labels.back())) {
        throw DataError("--counts: '" + labels.back() + "' is not a terminal label of the model");
      }
    }
    PlacementDecision decision = placement_from_counts(labels, counts);
    select_node(decision, f.delta);
    print_decision(decision, out);
    return kOk;
  }

  if (config.train_data.empty()) throw UsageError("add-task: --data is required without --counts");
  if (f.out.empty()) throw UsageError("add-task: --out is required without --counts");
  const auto classes = split_list(f.classes);
  if (classes.size() < 2) throw UsageError("--classes needs at least two labels");

  const auto& fe_spec = bundle.feature_extractor().spec();
  const WindowingConfig windowing = model_windowing(f, bundle, config.train_data);
  const auto windows = load_windows(config.train_data, windowing, fe_spec.window_len,
                                    fe_spec.input_channels);
  AcquiredDataset data;
  data.num_classes = classes.size();
  for (const auto& w : windows) {
    const auto it = std::find(classes.begin(), classes.end(), w.label);
    if (it == classes.end()) {
      throw DataError("window at offset " + std::to_string(w.offset) + " has label '" + w.label +
                      "', not one of --classes");
    }
    data.windows.push_back(w.window);
    data.labels.push_back(static_cast<std::size_t>(it - classes.begin()));
  }

  OnlineConfig oc;
  oc.epochs = config.epochs;
  oc.learning_rate = config.learning_rate;
  oc.seed = config.seed;
  oc.shuffle = config.shuffle;
  oc.use_feature_cache = !f.no_cache;
  const std::string fe_before = feature_extractor_digest(bundle);
  std::string name = f.name;
  if (name.empty()) {
    for (std::size_t i = 0; i < classes.size(); ++i) name += (i ? "_vs_" : "") + classes[i];
  }
  const AddTaskResult result =
      add_task(bundle, name, classes, config.head_hidden, data, f.delta, oc);
  print_decision(result.decision, out);
  out << "new task T" << result.task << " " << name << '\n';
  out << "m_w " << result.report.weight_count << ", biases " << result.report.bias_count
      << ", feature cache " << result.report.cache_bytes << " bytes, extractor passes "
      << result.report.fe_passes << '\n';
  for (std::size_t e = 0; e < result.report.epoch_loss.size(); ++e) {
    out << "head_epoch," << e + 1 << ',' << result.report.epoch_loss[e] << '\n';
  }
  const std::string fe_after = feature_extractor_digest(bundle);
  out << "extractor digest before " << fe_before << '\n';
  out << "extractor digest after  " << fe_after << '\n';
  if (!config.test_data.empty()) {
    const auto test = load_windows(config.test_data, windowing, fe_spec.window_len,
                                   fe_spec.input_channels);
    std::size_t correct = 0;
    for (const auto& w : test) {
      const Tensor feature = bundle.feature_extractor().forward(w.window);
      if (classes[argmax(bundle.head(result.task).predict(feature))] == w.label) ++correct;
    }
    out << "new head accuracy " << correct << '/' << test.size() << '\n';
  }
  save_model_file(bundle, f.out);
  out << "wrote " << f.out << '\n';
  return kOk;
}

int cmd_resources(const Flags& f, std::ostream& out) {
  print_command(out, "resources", {{"model", f.model}});
  const ModelBundle bundle = load_model_file(f.model);
  write_resource_report(compare_deployments(bundle), out);
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical activity recognition with a shared feature extractor", "dendron"};
  app.require_subcommand(1);
  Flags f;

  auto add_training_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", f.config, "run config file (key=value)");
    cmd->add_option("--epochs", f.epochs, "override epochs");
    cmd->add_option("--lr", f.learning_rate, "override learning_rate");
    cmd->add_option("--seed", f.seed, "override seed");
    cmd->add_option("--test-data", f.test_data, "held-out CSV");
  };
  auto add_window_flags = [&](CLI::App* cmd) {
    cmd->add_option("--overlap", f.overlap, "window overlap fraction");
    cmd->add_option("--label-rule", f.label_rule, "majority or strict_uniform");
  };

  auto* synth = app.add_subcommand("synth", "write synthetic train/test recordings");
  synth->add_option("--preset", f.preset, "four-class or fine-split")->required();
  synth->add_option("--out-dir", f.out_dir, "output directory")->required();
  synth->add_option("--seed", f.seed, "generator seed");
  synth->add_option("--seconds", f.seconds, "training seconds per class");
  synth->add_option("--test-seconds", f.test_seconds, "test seconds per class");
  synth->add_option("--noise", f.noise, "noise standard deviation");

  auto* train = app.add_subcommand("train", "joint training of extractor and heads");
  train->add_option("--schema", f.schema, "hierarchy schema file")->required();
  train->add_option("--data", f.data, "training CSV (overrides train_data)");
  train->add_option("--out", f.out, "model file to write")->required();
  train->add_option("--window-seconds", f.window_seconds, "window length in seconds");
  add_training_flags(train);
  add_window_flags(train);

  auto* infer = app.add_subcommand("infer", "hierarchical inference with per-window traces");
  auto* eval = app.add_subcommand("eval", "confusion matrix over the composite labels");
  for (auto* cmd : {infer, eval}) {
    cmd->add_option("--model", f.model, "model file")->required();
    cmd->add_option("--data", f.data, "CSV recording")->required();
    add_window_flags(cmd);
  }

  auto* add = app.add_subcommand("add-task", "place and train a new task head");
  add->add_option("--model", f.model, "model file")->required();
  add->add_option("--data", f.data, "acquired CSV for the new task");
  add->add_option("--classes", f.classes, "comma-separated labels of the new task");
  add->add_option("--delta", f.delta, "placement threshold in [0, 1]");
  add->add_option("--counts", f.counts, "label=count,... placement only, no training");
  add->add_option("--name", f.name, "task name");
  add->add_option("--out", f.out, "model file to write");
  add->add_flag("--no-cache", f.no_cache, "recompute features every epoch");
  add_training_flags(add);
  add_window_flags(add);

  auto* resources = app.add_subcommand("resources", "memory and MACC report");
  resources->add_option("--model", f.model, "model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    err << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(f, out);
    if (*train) return cmd_train(f, out);
    if (*infer) return cmd_infer(f, out, true);
    if (*eval) return cmd_infer(f, out, false);
    if (*add) return cmd_add_task(f, out);
    if (*resources) return cmd_resources(f, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"dendron"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dendron::cli
