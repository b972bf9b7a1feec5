#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <sstream>

#include "dendron/data_io.hpp"
#include "dendron/error.hpp"
#include "dendron/training.hpp"
#include "oracles.hpp"

using namespace dendron;

namespace {

RawRecording labelled(std::vector<std::string> labels, std::size_t channels = 1) {
  RawRecording r;
  for (std::size_t c = 0; c < channels; ++c) r.channels.push_back("ch" + std::to_string(c));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    r.samples.push_back(std::vector<double>(channels, static_cast<double>(i)));
  }
  r.labels = std::move(labels);
  return r;
}

std::vector<std::size_t> offsets(const std::vector<LabeledWindow>& ws) {
  std::vector<std::size_t> out;
  for (const auto& w : ws) out.push_back(w.offset);
  return out;
}

}  // namespace

TEST(Windowing, StrideFromOverlap) {
  const auto rec = labelled(std::vector<std::string>(10, "a"));
  const auto ws = segment_windows(rec, 4, 2, LabelRule::Majority);
  EXPECT_EQ(offsets(ws), (std::vector<std::size_t>{0, 2, 4, 6}));
  EXPECT_EQ(ws[1].window.at(0, 0), 2.0);

  WindowingConfig cfg{2.0, 0.5, LabelRule::Majority};
  EXPECT_EQ(cfg.window_samples(26.0), 52u);
  EXPECT_EQ(cfg.stride_samples(26.0), 26u);
}

TEST(Windowing, CountFormulaMatchesEnumeration) {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 5 + rng.below(60), w = 1 + rng.below(n), stride = 1 + rng.below(7);
    const auto rec = labelled(std::vector<std::string>(n, "a"));
    const auto ws = segment_windows(rec, w, stride, LabelRule::StrictUniform);
    EXPECT_EQ(offsets(ws), oracle::window_starts(n, w, stride));
    EXPECT_EQ(ws.size(), (n - w) / stride + 1);
  }
}

TEST(Windowing, StrictUniformDropsMixedWindows) {
  std::vector<std::string> labels;
  for (int i = 0; i < 7; ++i) labels.push_back("a");
  for (int i = 0; i < 9; ++i) labels.push_back("b");
  const auto rec = labelled(labels);
  const auto majority = segment_windows(rec, 4, 1, LabelRule::Majority);
  const auto strict = segment_windows(rec, 4, 1, LabelRule::StrictUniform);
  std::size_t mixed = 0;
  for (std::size_t s = 0; s + 4 <= labels.size(); ++s) mixed += (s < 7 && s + 4 > 7) ? 1 : 0;
  EXPECT_EQ(majority.size() - strict.size(), mixed);
  EXPECT_LT(strict.size(), majority.size());
}

TEST(Windowing, MajorityTieGoesToEarliestLabel) {
  const auto rec = labelled({"b", "b", "a", "a"});
  const auto ws = segment_windows(rec, 4, 1, LabelRule::Majority);
  ASSERT_EQ(ws.size(), 1u);
  EXPECT_EQ(ws[0].label, "b");
}

TEST(Windowing, WindowLongerThanRecordingThrows) {
  const auto rec = labelled({"a", "a", "a"});
  EXPECT_THROW(segment_windows(rec, 4, 1, LabelRule::Majority), DataError);
  WindowingConfig bad{2.0, 1.0, LabelRule::Majority};
  EXPECT_THROW(bad.validate(), DataError);
}

TEST(Csv, RoundTripIsLossless) {
  const auto rec = synth_generate(four_class_specs(), 3, 4);
  std::stringstream ss;
  write_csv(rec, ss);
  const auto back = read_csv(ss);
  EXPECT_EQ(back.sample_rate_hz, rec.sample_rate_hz);
  EXPECT_EQ(back.channels, rec.channels);
  EXPECT_EQ(back.samples, rec.samples);
  EXPECT_EQ(back.labels, rec.labels);
}

TEST(Csv, RejectsMalformedInput) {
  auto parse = [](const std::string& text) {
    std::istringstream is(text);
    return read_csv(is);
  };
  EXPECT_THROW(parse(""), DataError);
  EXPECT_THROW(parse("x,label\n1,a\n"), DataError);
  EXPECT_THROW(parse("# sample_rate_hz=26\nx,y\n1,2\n"), DataError);
  EXPECT_THROW(parse("# sample_rate_hz=26\nx,label\n1,2,a\n"), DataError);
  EXPECT_THROW(parse("# sample_rate_hz=26\nx,label\nfoo,a\n"), DataError);
  EXPECT_THROW(parse("# sample_rate_hz=26\nx,label\nnan,a\n"), DataError);
  EXPECT_THROW(parse("# sample_rate_hz=-1\nx,label\n1,a\n"), DataError);
  EXPECT_NO_THROW(parse("# sample_rate_hz=26\nx,label\n1,a\n"));
}

TEST(Synth, SameSeedSameBytes) {
  std::ostringstream a, b, c;
  write_csv(synth_generate(four_class_specs(), 9, 5), a);
  write_csv(synth_generate(four_class_specs(), 9, 5), b);
  write_csv(synth_generate(four_class_specs(), 10, 5), c);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str(), c.str());
}

TEST(Synth, FourClassRecordingShape) {
  const auto rec = synth_generate(four_class_specs(), 1, 30);
  EXPECT_EQ(rec.channels.size(), kSynthChannels);
  EXPECT_EQ(rec.samples.size(), 4u * 30 * 26);
  std::map<std::string, std::size_t> per_class;
  for (const auto& l : rec.labels) ++per_class[l];
  for (const auto& [label, n] : per_class) EXPECT_EQ(n, 30u * 26);
  const auto g = four_class_hierarchy();
  for (const auto& [label, n] : per_class) EXPECT_TRUE(g.is_terminal(label));
}

TEST(Synth, NoiselessPairIsLearnedPerfectly) {
  TaskGraph g;
  g.add_task("sit_vs_walk", {"sit_like", "walk_like"});
  const std::vector<ClassSpec> specs{four_class_specs(0.0)[0], four_class_specs(0.0)[2]};
  std::vector<MultiLabelSample> data;
  for (auto& w : segment_windows(synth_generate(specs, 4, 20), WindowingConfig{})) {
    data.push_back(make_sample(g, w.window, w.label));
  }
  auto bundle = ModelBundle::initialize({6, 52, {{5, 4, 2}}}, {}, g, 1);
  TrainConfig cfg;
  cfg.epochs = 10;
  train_joint(bundle, data, cfg);
  EXPECT_EQ(evaluate(bundle, data).accuracy(), 1.0);
}

TEST(ModelFile, SaveLoadSaveIsByteIdentical) {
  const auto bundle = ModelBundle::initialize({3, 26, {{3, 4, 2}}}, {5}, activity_hierarchy(), 4);
  const std::string a = save_model(bundle);
  const ModelBundle loaded = load_model(a);
  EXPECT_EQ(save_model(loaded), a);
  EXPECT_EQ(model_digest(loaded), model_digest(bundle));
  EXPECT_EQ(loaded.graph(), bundle.graph());
}

TEST(ModelFile, SizeFormula) {
  const auto bundle = ModelBundle::initialize({3, 26, {{3, 4, 2}}}, {}, activity_hierarchy(), 4);
  std::size_t params = 0;
  for (const auto& p : bundle.parameters()) params += p.tensor->size();
  const std::string bytes = save_model(bundle);
  EXPECT_EQ(bytes.size(), kModelHeaderBytes + model_manifest(bundle).size() + 4 * params);
  EXPECT_NE(model_manifest(bundle).find(serialize_schema(bundle.graph())), std::string::npos);
}

TEST(ModelFile, CorruptionIsRejected) {
  const auto bundle = ModelBundle::initialize({3, 26, {{3, 4, 2}}}, {}, activity_hierarchy(), 4);
  const std::string good = save_model(bundle);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_model(bad_magic), DataError);

  std::string bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(load_model(bad_version), DataError);

  EXPECT_THROW(load_model(good.substr(0, good.size() - 1)), DataError);
  EXPECT_THROW(load_model(good + "x"), DataError);
  EXPECT_THROW(load_model(good.substr(0, 6)), DataError);

  std::string bad_shape = good;
  const auto pos = bad_shape.find("tensor fe.block0.bias 4");
  ASSERT_NE(pos, std::string::npos);
  bad_shape[pos + std::strlen("tensor fe.block0.bias ")] = '5';
  EXPECT_THROW(load_model(bad_shape), DataError);
}

TEST(ModelFile, FileRoundTrip) {
  const auto bundle = ModelBundle::initialize({2, 10, {}}, {}, activity_hierarchy(), 4);
  const auto path = std::filesystem::temp_directory_path() / "dendron_test_model.bin";
  save_model_file(bundle, path.string());
  EXPECT_EQ(save_model(load_model_file(path.string())), save_model(bundle));
  std::filesystem::remove(path);
  EXPECT_THROW(load_model_file(path.string()), DataError);
}

TEST(Float32Encoding, NativeAndPortablePathsAgree) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> values{0.0,   -0.0, 1.0, -2.5, 1e-40, 3.4e38, -inf,
                                   0.1,   static_cast<double>(std::numeric_limits<float>::denorm_min())};
  std::string native, portable;
  append_f32_le_native(native, values);
  append_f32_le_portable(portable, values);
  EXPECT_EQ(native, portable);
  EXPECT_EQ(static_cast<unsigned char>(portable[4 * 2 + 3]), 0x3F);  // 1.0f = 0x3F800000
  std::vector<double> a(values.size()), b(values.size());
  read_f32_le_native(native, a);
  read_f32_le_portable(portable, b);
  for (std::size_t i = 0; i < values.size(); ++i) {
    EXPECT_EQ(std::memcmp(&a[i], &b[i], sizeof(double)), 0);
    EXPECT_EQ(a[i], static_cast<double>(static_cast<float>(values[i])));
  }
  EXPECT_TRUE(std::signbit(a[1]));
}
