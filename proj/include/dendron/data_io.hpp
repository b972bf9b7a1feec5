#pragma once

// Dataset ingestion (CSV recordings, sliding windows), the synthetic activity
// signal generator, and the binary model file.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dendron/model.hpp"

namespace dendron {

struct RawRecording {
  double sample_rate_hz = 26.0;
  std::vector<std::string> channels;
  std::vector<std::vector<double>> samples;  // rows x channels
  std::vector<std::string> labels;           // one per row

  void validate() const;
};

enum class LabelRule { Majority, StrictUniform };

std::string to_string(LabelRule rule);
LabelRule parse_label_rule(const std::string& text);

struct WindowingConfig {
  double window_seconds = 2.0;
  double overlap_fraction = 0.5;
  LabelRule label_rule = LabelRule::Majority;

  std::size_t window_samples(double sample_rate_hz) const;
  std::size_t stride_samples(double sample_rate_hz) const;
  void validate() const;
};

struct LabeledWindow {
  Tensor window;  // channels x window length
  std::string label;
  std::size_t offset = 0;
};

/// Windows at offsets 0, stride, 2*stride, ... with stride =
/// round(W * (1 - overlap)), at least 1. Mixed-label windows take the most
/// frequent label (earliest wins ties) under Majority and are dropped under
/// StrictUniform. Throws DataError if the recording is shorter than a window.
std::vector<LabeledWindow> segment_windows(const RawRecording& recording,
                                           const WindowingConfig& config);
std::vector<LabeledWindow> segment_windows(const RawRecording& recording, std::size_t window_len,
                                           std::size_t stride, LabelRule rule);

// CSV ---------------------------------------------------------------------
//
//   # sample_rate_hz=26
//   acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z,label
//   0.01,-0.98,0.12,0.5,0.1,-0.2,walking
//
// The first line declares the sample rate; the header names the channels and
// must end with a "label" column.

RawRecording read_csv(std::istream& in, const std::string& source = "<stream>");
RawRecording read_csv_file(const std::string& path);
void write_csv(const RawRecording& recording, std::ostream& out);
void write_csv_file(const RawRecording& recording, const std::string& path);

// Synthetic signals --------------------------------------------------------

struct ChannelWave {
  double offset = 0.0;
  double amplitude = 0.0;
  double frequency_hz = 0.0;
  double harmonic = 0.0;  // amplitude of the 2nd harmonic
  double noise_std = 0.0;
};

struct ClassSpec {
  std::string label;
  std::vector<ChannelWave> channels;
};

/// Classes take turns in bouts of `bout_seconds` until each has
/// `seconds_per_class` of signal. Every bout draws fresh channel phases and
/// a gain and cadence within +-kBoutJitter (cadence +-kBoutJitter/2); every
/// sample gets additive Gaussian noise.
RawRecording synth_generate(std::span<const ClassSpec> classes, std::uint64_t seed,
                            double seconds_per_class, double sample_rate_hz = 26.0,
                            double bout_seconds = 10.0);

inline constexpr double kBoutJitter = 0.15;

inline constexpr double kSynthSampleRate = 26.0;
inline constexpr std::size_t kSynthChannels = 6;

/// Two coarse groups with two fine classes each:
/// static {sit_like, lie_like} and moving {walk_like, run_like}.
std::vector<ClassSpec> four_class_specs(double noise_std = 0.08);
TaskGraph four_class_hierarchy();

/// Two gait variants that the four-class model sees as walk_like; they
/// differ in posture offsets and the second harmonic.
std::vector<ClassSpec> fine_split_specs(double noise_std = 0.08);

// Model file ---------------------------------------------------------------
//
//   bytes 0..3   magic "DNDR"
//   bytes 4..7   format version, little-endian u32
//   bytes 8..11  manifest length in bytes, little-endian u32
//   manifest     UTF-8 text: architecture lines followed by the hierarchy schema
//   tensors      every parameter, little-endian binary32, in manifest order
//
// File size = 12 + manifest length + 4 * parameter count.

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr std::size_t kModelHeaderBytes = 12;

std::string save_model(const ModelBundle& bundle);
ModelBundle load_model(std::string_view bytes);
void save_model_file(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model_file(const std::string& path);

std::string model_manifest(const ModelBundle& bundle);

/// Little-endian binary32 encoding. The native path copies memory on
/// little-endian hosts and byte-swaps otherwise; the portable path always
/// assembles bytes arithmetically. Both must agree bit for bit.
void append_f32_le_native(std::string& out, std::span<const double> values);
void append_f32_le_portable(std::string& out, std::span<const double> values);
void read_f32_le_native(std::string_view bytes, std::span<double> values);
void read_f32_le_portable(std::string_view bytes, std::span<double> values);

/// SHA-256 (hex) over the binary32 encoding of the given tensors.
std::string parameter_digest(std::span<const ConstParamRef> params);
std::string feature_extractor_digest(const ModelBundle& bundle);
std::string model_digest(const ModelBundle& bundle);

}  // namespace dendron
