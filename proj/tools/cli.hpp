#pragma once

// Command-line front end. run_cli is the whole program minus process setup so
// tests can drive it with captured streams.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dendron/data_io.hpp"
#include "dendron/training.hpp"

namespace dendron::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDataError = 3, kNumericError = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run configuration read from a key=value file. '#' starts a comment line.
struct RunConfig {
  std::size_t epochs = 30;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
  AlphaMode alpha_mode = AlphaMode::Predicted;
  bool shuffle = true;
  std::string train_data;
  std::string test_data;
  WindowingConfig windowing;
  std::vector<ConvBlockSpec> fe_blocks{{5, 8, 2}, {3, 16, 2}};
  std::vector<std::size_t> head_hidden;

  /// Applies one key=value pair. Unknown keys and bad values throw UsageError.
  void set(const std::string& key, const std::string& value);
};

RunConfig parse_run_config(std::istream& in, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

/// Same key=value form that parse_run_config reads.
void write_run_config(const RunConfig& config, std::ostream& out);

std::vector<ConvBlockSpec> parse_fe_blocks(const std::string& text);
std::vector<std::size_t> parse_widths(const std::string& text);
std::string format_fe_blocks(const std::vector<ConvBlockSpec>& blocks);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dendron::cli
