#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cli.hpp"
#include "dendron/error.hpp"

namespace dendron::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError("config: " + key + " expects a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw UsageError("config: " + key + " expects true or false, got '" + text + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string part; std::getline(is, part, sep);) out.push_back(trim(part));
  return out;
}

}  // namespace

std::vector<ConvBlockSpec> parse_fe_blocks(const std::string& text) {
  std::vector<ConvBlockSpec> blocks;
  if (trim(text).empty()) return blocks;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 3) {
      throw UsageError("fe_blocks: '" + item + "' is not kernel:filters:pool");
    }
    ConvBlockSpec b{parse_number<std::size_t>("fe_blocks", parts[0]),
                    parse_number<std::size_t>("fe_blocks", parts[1]),
                    parse_number<std::size_t>("fe_blocks", parts[2])};
    if (b.kernel_size == 0 || b.num_filters == 0 || b.pool_size == 0) {
      throw UsageError("fe_blocks: sizes must be positive in '" + item + "'");
    }
    blocks.push_back(b);
  }
  return blocks;
}

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> widths;
  if (trim(text).empty()) return widths;
  for (const auto& item : split(text, ',')) {
    const auto w = parse_number<std::size_t>("head_hidden", item);
    if (w == 0) throw UsageError("head_hidden: widths must be positive");
    widths.push_back(w);
  }
  return widths;
}

std::string format_fe_blocks(const std::vector<ConvBlockSpec>& blocks) {
  std::string out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(blocks[i].kernel_size) + ':' + std::to_string(blocks[i].num_filters) +
           ':' + std::to_string(blocks[i].pool_size);
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  try {
    if (key == "epochs") {
      epochs = parse_number<std::size_t>(key, value);
    } else if (key == "learning_rate") {
      learning_rate = parse_number<double>(key, value);
      if (!(learning_rate > 0.0)) throw UsageError("config: learning_rate must be positive");
    } else if (key == "seed") {
      seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "alpha_mode") {
      alpha_mode = parse_alpha_mode(value);
    } else if (key == "shuffle") {
      shuffle = parse_bool(key, value);
    } else if (key == "train_data") {
      train_data = value;
    } else if (key == "test_data") {
      test_data = value;
    } else if (key == "window_seconds") {
      windowing.window_seconds = parse_number<double>(key, value);
    } else if (key == "overlap") {
      windowing.overlap_fraction = parse_number<double>(key, value);
    } else if (key == "label_rule") {
      windowing.label_rule = parse_label_rule(value);
    } else if (key == "fe_blocks") {
      fe_blocks = parse_fe_blocks(value);
    } else if (key == "head_hidden") {
      head_hidden = parse_widths(value);
    } else {
      throw UsageError("config: unknown key '" + key + "'");
    }
    windowing.validate();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError("config: " + key + ": " + e.what());
  }
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig config;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  return parse_run_config(in, path);
}

void write_run_config(const RunConfig& c, std::ostream& out) {
  std::string hidden;
  for (std::size_t i = 0; i < c.head_hidden.size(); ++i) {
    hidden += (i ? "," : "") + std::to_string(c.head_hidden[i]);
  }
  out << "epochs=" << c.epochs << '\n'
      << "learning_rate=" << c.learning_rate << '\n'
      << "seed=" << c.seed << '\n'
      << "alpha_mode=" << to_string(c.alpha_mode) << '\n'
      << "shuffle=" << (c.shuffle ? "true" : "false") << '\n'
      << "train_data=" << c.train_data << '\n'
      << "test_data=" << c.test_data << '\n'
      << "window_seconds=" << c.windowing.window_seconds << '\n'
      << "overlap=" << c.windowing.overlap_fraction << '\n'
      << "label_rule=" << to_string(c.windowing.label_rule) << '\n'
      << "fe_blocks=" << format_fe_blocks(c.fe_blocks) << '\n'
      << "head_hidden=" << hidden << '\n';
}

}  // namespace dendron::cli
