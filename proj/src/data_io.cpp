#include "dendron/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "dendron/error.hpp"

namespace dendron {

void RawRecording::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw DataError("sample rate must be positive");
  }
  if (channels.empty()) throw DataError("recording has no channels");
  if (samples.size() != labels.size()) {
    throw DataError("recording has " + std::to_string(samples.size()) + " rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t r = 0; r < samples.size(); ++r) {
    if (samples[r].size() != channels.size()) {
      throw DataError("row " + std::to_string(r) + " has " + std::to_string(samples[r].size()) +
                      " values, expected " + std::to_string(channels.size()));
    }
  }
}

std::string to_string(LabelRule rule) {
  return rule == LabelRule::Majority ? "majority" : "strict_uniform";
}

LabelRule parse_label_rule(const std::string& text) {
  if (text == "majority") return LabelRule::Majority;
  if (text == "strict_uniform" || text == "strict-uniform") return LabelRule::StrictUniform;
  throw DataError("label_rule must be 'majority' or 'strict_uniform', got '" + text + "'");
}

std::size_t WindowingConfig::window_samples(double sample_rate_hz) const {
  validate();
  const auto n = static_cast<std::size_t>(std::llround(window_seconds * sample_rate_hz));
  if (n < 1) throw DataError("window shorter than one sample");
  return n;
}

std::size_t WindowingConfig::stride_samples(double sample_rate_hz) const {
  const double w = static_cast<double>(window_samples(sample_rate_hz));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(w * (1.0 - overlap_fraction))));
}

void WindowingConfig::validate() const {
  if (!(window_seconds > 0.0)) throw DataError("window_seconds must be positive");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw DataError("overlap_fraction must lie in [0, 1)");
  }
}

std::vector<LabeledWindow> segment_windows(const RawRecording& recording, std::size_t window_len,
                                           std::size_t stride, LabelRule rule) {
  recording.validate();
  if (window_len == 0 || stride == 0) throw DataError("window length and stride must be positive");
  const std::size_t n = recording.samples.size();
  if (window_len > n) {
    throw DataError("window of " + std::to_string(window_len) + " samples is longer than the " +
                    std::to_string(n) + "-sample recording");
  }
  const std::size_t channels = recording.channels.size();
  std::vector<LabeledWindow> out;
  for (std::size_t start = 0; start + window_len <= n; start += stride) {
    std::vector<std::pair<std::string, std::size_t>> tally;  // first-seen order
    for (std::size_t r = start; r < start + window_len; ++r) {
      const auto& l = recording.labels[r];
      auto it = std::find_if(tally.begin(), tally.end(), [&](const auto& p) { return p.first == l; });
      if (it == tally.end()) {
        tally.emplace_back(l, 1);
      } else {
        ++it->second;
      }
    }
    if (tally.size() > 1 && rule == LabelRule::StrictUniform) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < tally.size(); ++i) {
      if (tally[i].second > tally[best].second) best = i;
    }
    Tensor w({channels, window_len});
    for (std::size_t t = 0; t < window_len; ++t) {
      for (std::size_t c = 0; c < channels; ++c) w.at(c, t) = recording.samples[start + t][c];
    }
    out.push_back({std::move(w), tally[best].first, start});
  }
  return out;
}

std::vector<LabeledWindow> segment_windows(const RawRecording& recording,
                                           const WindowingConfig& config) {
  return segment_windows(recording, config.window_samples(recording.sample_rate_hz),
                         config.stride_samples(recording.sample_rate_hz), config.label_rule);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw DataError(where + ": '" + text + "' is not a finite number");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

RawRecording read_csv(std::istream& in, const std::string& source) {
  RawRecording rec;
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return source + ":" + std::to_string(line_no); };

  if (!std::getline(in, line)) throw DataError(source + ": empty file");
  ++line_no;
  line = trim(line);
  const std::string key = "sample_rate_hz=";
  const auto pos = line.find(key);
  if (line.empty() || line[0] != '#' || pos == std::string::npos) {
    throw DataError(where() + ": first line must declare '# sample_rate_hz=<rate>'");
  }
  rec.sample_rate_hz = parse_double(trim(line.substr(pos + key.size())), where());

  if (!std::getline(in, line)) throw DataError(source + ": missing header row");
  ++line_no;
  auto header = split_csv(trim(line));
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header.back() != "label") {
    throw DataError(where() + ": header must name the channels and end with a 'label' column");
  }
  header.pop_back();
  rec.channels = header;

  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv(line);
    if (fields.size() != rec.channels.size() + 1) {
      throw DataError(where() + ": expected " + std::to_string(rec.channels.size() + 1) +
                      " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(rec.channels.size());
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      row.push_back(parse_double(trim(fields[c]), where()));
    }
    std::string label = trim(fields.back());
    if (label.empty()) throw DataError(where() + ": empty label");
    rec.samples.push_back(std::move(row));
    rec.labels.push_back(std::move(label));
  }
  rec.validate();
  return rec;
}

RawRecording read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  return read_csv(in, path);
}

void write_csv(const RawRecording& recording, std::ostream& out) {
  recording.validate();
  out << "# sample_rate_hz=" << format_double(recording.sample_rate_hz) << '\n';
  for (const auto& c : recording.channels) out << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < recording.samples.size(); ++r) {
    for (double v : recording.samples[r]) out << format_double(v) << ',';
    out << recording.labels[r] << '\n';
  }
}

void write_csv_file(const RawRecording& recording, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset " + path);
  write_csv(recording, out);
  if (!out) throw DataError("failed writing dataset " + path);
}

// ---------------------------------------------------------------------------

RawRecording synth_generate(std::span<const ClassSpec> classes, std::uint64_t seed,
                            double seconds_per_class, double sample_rate_hz, double bout_seconds) {
  if (classes.size() < 2) throw std::invalid_argument("synthetic data needs at least two classes");
  const std::size_t channels = classes.front().channels.size();
  for (const auto& c : classes) {
    if (c.channels.size() != channels) {
      throw std::invalid_argument("class '" + c.label + "' has a different channel count");
    }
  }
  static const char* kNames[] = {"acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"};
  RawRecording rec;
  rec.sample_rate_hz = sample_rate_hz;
  for (std::size_t c = 0; c < channels; ++c) {
    rec.channels.push_back(c < 6 ? kNames[c] : "ch" + std::to_string(c));
  }
  Rng rng(seed);
  const auto rows_per_class =
      static_cast<std::size_t>(std::llround(seconds_per_class * sample_rate_hz));
  const auto rows_per_bout = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(bout_seconds * sample_rate_hz)));
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<std::size_t> emitted(classes.size(), 0);
  for (bool more = true; more;) {
    more = false;
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const auto& cls = classes[k];
      const std::size_t rows = std::min(rows_per_bout, rows_per_class - emitted[k]);
      if (rows == 0) continue;
      emitted[k] += rows;
      more = more || emitted[k] < rows_per_class;
      // Each bout is a fresh session: new phases, slightly different
      // intensity and cadence.
      std::vector<double> phase(channels);
      for (auto& p : phase) p = rng.uniform(0.0, two_pi);
      const double gain = rng.uniform(1.0 - kBoutJitter, 1.0 + kBoutJitter);
      const double pace = rng.uniform(1.0 - kBoutJitter / 2, 1.0 + kBoutJitter / 2);
      for (std::size_t r = 0; r < rows; ++r) {
        const double t = static_cast<double>(r) / sample_rate_hz;
        std::vector<double> row(channels);
        for (std::size_t c = 0; c < channels; ++c) {
          const auto& w = cls.channels[c];
          const double angle = two_pi * w.frequency_hz * pace * t + phase[c];
          row[c] = w.offset + gain * (w.amplitude * std::sin(angle) + w.harmonic * std::sin(2.0 * angle)) +
                   w.noise_std * rng.normal();
        }
        rec.samples.push_back(std::move(row));
        rec.labels.push_back(cls.label);
      }
    }
  }
  return rec;
}

std::vector<ClassSpec> four_class_specs(double noise) {
  // Channels: acc_x, acc_y, acc_z, gyro_x, gyro_y, gyro_z.
  auto still = [&](double ax, double ay, double az) {
    return std::vector<ChannelWave>{{ax, 0.02, 0.3, 0.0, noise},  {ay, 0.02, 0.3, 0.0, noise},
                                    {az, 0.02, 0.3, 0.0, noise},  {0.0, 0.03, 0.5, 0.0, noise},
                                    {0.0, 0.03, 0.5, 0.0, noise}, {0.0, 0.03, 0.5, 0.0, noise}};
  };
  auto gait = [&](double freq, double amp) {
    return std::vector<ChannelWave>{{0.05, 0.3 * amp, freq, 0.0, noise},
                                    {0.2, 0.2 * amp, freq, 0.0, noise},
                                    {0.9, amp, freq, 0.1 * amp, noise},
                                    {0.0, 0.8 * amp, freq, 0.0, noise},
                                    {0.0, 0.5 * amp, freq, 0.0, noise},
                                    {0.0, 0.3 * amp, freq, 0.0, noise}};
  };
  return {{"sit_like", still(0.1, 0.2, 0.97)},
          {"lie_like", still(0.1, 0.6, 0.75)},
          {"walk_like", gait(1.8, 0.5)},
          {"run_like", gait(2.8, 0.9)}};
}

TaskGraph four_class_hierarchy() {
  TaskGraph g;
  const TaskId root = g.add_task("static_vs_moving", {"static", "moving"});
  const TaskId posture = g.add_task("sit_vs_lie", {"sit_like", "lie_like"});
  const TaskId gait = g.add_task("walk_vs_run", {"walk_like", "run_like"});
  g.set_dependency(posture, root, "static");
  g.set_dependency(gait, root, "moving");
  return g;
}

std::vector<ClassSpec> fine_split_specs(double noise) {
  auto variant = [&](double ay, double harmonic) {
    const double freq = 1.8, amp = 0.5;
    return std::vector<ChannelWave>{{0.05, 0.3 * amp, freq, 0.0, noise},
                                    {ay, 0.2 * amp, freq, 0.0, noise},
                                    {0.9, amp, freq, harmonic, noise},
                                    {0.0, 0.8 * amp, freq, 0.0, noise},
                                    {0.0, 0.5 * amp, freq, 0.0, noise},
                                    {0.0, 0.3 * amp, freq, 0.0, noise}};
  };
  return {{"walk_up", variant(0.25, 0.08)}, {"walk_down", variant(0.15, 0.03)}};
}

}  // namespace dendron
