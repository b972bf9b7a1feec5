#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "dendron/data_io.hpp"
#include "dendron/error.hpp"

namespace dendron {

namespace {

constexpr char kMagic[4] = {'D', 'N', 'D', 'R'};

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_u32_le(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFF) << 24) | ((v & 0xFF00) << 8) | ((v >> 8) & 0xFF00) | (v >> 24);
}

}  // namespace

void append_f32_le_native(std::string& out, std::span<const double> values) {
  const std::size_t start = out.size();
  out.resize(start + 4 * values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    std::memcpy(out.data() + start + 4 * i, &bits, 4);
  }
}

void append_f32_le_portable(std::string& out, std::span<const double> values) {
  for (double v : values) append_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void read_f32_le_native(std::string_view bytes, std::span<double> values) {
  if (bytes.size() < 4 * values.size()) throw DataError("tensor data truncated");
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
    values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
}

void read_f32_le_portable(std::string_view bytes, std::span<double> values) {
  if (bytes.size() < 4 * values.size()) throw DataError("tensor data truncated");
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(std::bit_cast<float>(read_u32_le(bytes, 4 * i)));
  }
}

std::string model_manifest(const ModelBundle& bundle) {
  const auto& spec = bundle.feature_extractor().spec();
  std::ostringstream os;
  os << "dendron-model 1\n";
  os << "conv valid stride1 relu maxpool\n";
  os << "input " << spec.input_channels << ' ' << spec.window_len << '\n';
  for (const auto& b : spec.blocks) {
    os << "block " << b.kernel_size << ' ' << b.num_filters << ' ' << b.pool_size << '\n';
  }
  for (const auto& [id, head] : bundle.heads()) {
    os << "head " << id;
    for (std::size_t w : head.spec().layer_widths) os << ' ' << w;
    os << '\n';
  }
  for (const auto& p : bundle.parameters()) {
    os << "tensor " << p.name;
    for (std::size_t d : p.tensor->shape()) os << ' ' << d;
    os << '\n';
  }
  os << "schema\n" << serialize_schema(bundle.graph());
  return os.str();
}

std::string save_model(const ModelBundle& bundle) {
  const std::string manifest = model_manifest(bundle);
  std::string out(kMagic, 4);
  append_u32_le(out, kModelFormatVersion);
  append_u32_le(out, static_cast<std::uint32_t>(manifest.size()));
  out += manifest;
  for (const auto& p : bundle.parameters()) append_f32_le_native(out, p.tensor->data());
  return out;
}

namespace {

std::size_t to_size(const std::string& tok, const std::string& line) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (tok.empty() || pos != tok.size() || tok[0] == '-') {
    throw DataError("model manifest: bad integer '" + tok + "' in line '" + line + "'");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

ModelBundle load_model(std::string_view bytes) {
  if (bytes.size() < kModelHeaderBytes) throw DataError("model file truncated: no header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError("not a model file: bad magic");
  const std::uint32_t version = read_u32_le(bytes, 4);
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format version " + std::to_string(version) +
                    " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint32_t manifest_len = read_u32_le(bytes, 8);
  if (bytes.size() < kModelHeaderBytes + manifest_len) {
    throw DataError("model file truncated inside the manifest");
  }
  const std::string manifest(bytes.substr(kModelHeaderBytes, manifest_len));

  FeatureExtractorSpec fe_spec;
  std::map<TaskId, HeadSpec> head_specs;
  std::vector<std::pair<std::string, Shape>> tensors;
  std::string schema_text;
  bool saw_input = false, saw_header = false;

  std::istringstream is(manifest);
  for (std::string line; std::getline(is, line);) {
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (!saw_header) {
      if (line != "dendron-model 1") throw DataError("model manifest: bad header line");
      saw_header = true;
    } else if (tok[0] == "conv") {
      if (line != "conv valid stride1 relu maxpool") {
        throw DataError("model manifest: unsupported convolution mode '" + line + "'");
      }
    } else if (tok[0] == "input" && tok.size() == 3) {
      fe_spec.input_channels = to_size(tok[1], line);
      fe_spec.window_len = to_size(tok[2], line);
      saw_input = true;
    } else if (tok[0] == "block" && tok.size() == 4) {
      fe_spec.blocks.push_back({to_size(tok[1], line), to_size(tok[2], line), to_size(tok[3], line)});
    } else if (tok[0] == "head" && tok.size() >= 3) {
      HeadSpec spec;
      for (std::size_t i = 2; i < tok.size(); ++i) spec.layer_widths.push_back(to_size(tok[i], line));
      head_specs[to_size(tok[1], line)] = spec;
    } else if (tok[0] == "tensor" && tok.size() >= 3) {
      Shape shape;
      for (std::size_t i = 2; i < tok.size(); ++i) shape.push_back(to_size(tok[i], line));
      tensors.emplace_back(tok[1], shape);
    } else if (tok[0] == "schema" && tok.size() == 1) {
      std::ostringstream rest;
      rest << is.rdbuf();
      schema_text = rest.str();
      break;
    } else {
      throw DataError("model manifest: unrecognized line '" + line + "'");
    }
  }
  if (!saw_input || schema_text.empty()) throw DataError("model manifest is incomplete");

  std::size_t total_values = 0;
  for (const auto& [name, shape] : tensors) total_values += shape_size(shape);
  const std::size_t expected_size = kModelHeaderBytes + manifest_len + 4 * total_values;
  if (bytes.size() != expected_size) {
    throw DataError("model file is " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(expected_size));
  }

  std::size_t cursor = kModelHeaderBytes + manifest_len;
  std::size_t next_tensor = 0;
  auto take = [&](const std::string& name, const Shape& shape) {
    if (next_tensor >= tensors.size() || tensors[next_tensor].first != name ||
        tensors[next_tensor].second != shape) {
      throw DataError("model manifest: expected tensor " + name + " " + shape_string(shape));
    }
    Tensor t(shape);
    read_f32_le_native(bytes.substr(cursor), t.data());
    cursor += 4 * t.size();
    ++next_tensor;
    return t;
  };

  try {
    const auto shapes = fe_spec.signal_shapes();
    std::vector<ConvLayer> layers;
    for (std::size_t b = 0; b < fe_spec.blocks.size(); ++b) {
      const auto& block = fe_spec.blocks[b];
      const std::string prefix = "fe.block" + std::to_string(b);
      Tensor w = take(prefix + ".weights", {block.num_filters, shapes[b].first, block.kernel_size});
      Tensor bias = take(prefix + ".bias", {block.num_filters});
      layers.push_back({block, std::move(w), std::move(bias)});
    }
    FeatureExtractor fe(fe_spec, std::move(layers));
    std::map<TaskId, Head> heads;
    for (const auto& [id, spec] : head_specs) {
      std::vector<DenseLayer> dense;
      std::size_t in = fe.feature_dim();
      for (std::size_t u = 0; u < spec.layer_widths.size(); ++u) {
        const std::string prefix = "head" + std::to_string(id) + ".dense" + std::to_string(u);
        const std::size_t out = spec.layer_widths[u];
        Tensor w = take(prefix + ".weights", {out, in});
        Tensor bias = take(prefix + ".bias", {out});
        dense.push_back({std::move(w), std::move(bias)});
        in = out;
      }
      heads.emplace(id, Head(spec, fe.feature_dim(), std::move(dense)));
    }
    if (next_tensor != tensors.size()) throw DataError("model manifest lists extra tensors");
    return ModelBundle(std::move(fe), std::move(heads), parse_schema(schema_text),
                       Topology::MultiParent);
  } catch (const ShapeError& e) {
    throw DataError(std::string("model file shape mismatch: ") + e.what());
  } catch (const SchemaError& e) {
    throw DataError(std::string("model file schema: ") + e.what());
  }
}

void save_model_file(const ModelBundle& bundle, const std::string& path) {
  const std::string bytes = save_model(bundle);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing model file " + path);
}

ModelBundle load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_model(buf.str());
}

std::string parameter_digest(std::span<const ConstParamRef> params) {
  std::string bytes;
  for (const auto& p : params) append_f32_le_portable(bytes, p.tensor->data());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md, &md_len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < md_len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xF]);
  }
  return hex;
}

std::string feature_extractor_digest(const ModelBundle& bundle) {
  return parameter_digest(bundle.feature_extractor().parameters());
}

std::string model_digest(const ModelBundle& bundle) {
  return parameter_digest(bundle.parameters());
}

}  // namespace dendron
