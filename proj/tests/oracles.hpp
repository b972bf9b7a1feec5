#pragma once

// Reference computations written without the library's kernels. They favor
// obviousness over speed and use long double where rounding matters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dendron/data_io.hpp"
#include "dendron/model.hpp"
#include "dendron/training.hpp"

namespace oracle {

using dendron::Tensor;
using dendron::TaskId;

// y = W x + b, row by row.
inline std::vector<long double> matvec(const Tensor& w, const Tensor& x, const Tensor& b) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  std::vector<long double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    long double acc = b[r];
    for (std::size_t c = 0; c < cols; ++c) acc += static_cast<long double>(w[r * cols + c]) * x[c];
    y[r] = acc;
  }
  return y;
}

inline std::vector<long double> softmax(const std::vector<long double>& z) {
  long double m = z[0];
  for (auto v : z) m = std::max(m, v);
  long double s = 0;
  std::vector<long double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (auto& v : p) v /= s;
  return p;
}

// Valid 1-D convolution, ReLU, then max pool over non-overlapping groups.
// in: C x L, w: F x C x K. Returns F x floor((L-K+1)/P).
inline std::vector<std::vector<long double>> conv_block(const std::vector<std::vector<long double>>& in,
                                                        const Tensor& w, const Tensor& b,
                                                        std::size_t pool) {
  const std::size_t F = w.dim(0), C = w.dim(1), K = w.dim(2), L = in[0].size();
  const std::size_t conv_len = L - K + 1;
  std::vector<std::vector<long double>> out(F);
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<long double> act(conv_len);
    for (std::size_t t = 0; t < conv_len; ++t) {
      long double acc = b[f];
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t k = 0; k < K; ++k) acc += w[(f * C + c) * K + k] * in[c][t + k];
      }
      act[t] = std::max<long double>(acc, 0);
    }
    for (std::size_t g = 0; g + pool <= conv_len; g += pool) {
      out[f].push_back(*std::max_element(act.begin() + g, act.begin() + g + pool));
    }
  }
  return out;
}

inline std::vector<long double> features(const dendron::FeatureExtractor& fe, const Tensor& window) {
  const std::size_t C = window.dim(0), L = window.dim(1);
  std::vector<std::vector<long double>> sig(C, std::vector<long double>(L));
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < L; ++t) sig[c][t] = window[c * L + t];
  }
  for (const auto& layer : fe.layers()) sig = conv_block(sig, layer.weights, layer.bias, layer.spec.pool_size);
  std::vector<long double> flat;
  for (const auto& row : sig) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

inline std::vector<long double> head_probs(const dendron::Head& head, std::vector<long double> x) {
  for (std::size_t u = 0; u < head.layers().size(); ++u) {
    const auto& layer = head.layers()[u];
    std::vector<long double> y(layer.weights.dim(0));
    for (std::size_t r = 0; r < y.size(); ++r) {
      long double acc = layer.bias[r];
      for (std::size_t c = 0; c < x.size(); ++c) acc += layer.weights.at(r, c) * x[c];
      y[r] = (u + 1 < head.layers().size()) ? std::max<long double>(acc, 0) : acc;
    }
    x = std::move(y);
  }
  return softmax(x);
}

// Loss sum_i alpha_i * -log p_i[label_i] evaluated from scratch, alphas fixed.
inline long double weighted_loss(const dendron::ModelBundle& bundle, const Tensor& window,
                                 const dendron::TaskLabels& labels,
                                 const std::map<TaskId, double>& alphas) {
  const auto feat = features(bundle.feature_extractor(), window);
  long double total = 0;
  for (const auto& [id, head] : bundle.heads()) {
    const double a = alphas.at(id);
    if (a == 0.0) continue;
    std::size_t label = labels.at(id);
    if (label == dendron::kOffPath) label = dendron::kOffPathSurrogate;
    const auto p = head_probs(head, feat);
    total += a * -std::log(std::max<long double>(p[label], dendron::kProbabilityFloor));
  }
  return total;
}

// Central differences of f over every element of every tensor in `params`.
inline std::vector<std::vector<double>> numeric_gradient(const std::vector<dendron::ParamRef>& params,
                                                         const std::function<long double()>& f,
                                                         double eps) {
  std::vector<std::vector<double>> grads;
  for (const auto& p : params) {
    std::vector<double> g(p.tensor->size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double saved = (*p.tensor)[i];
      (*p.tensor)[i] = saved + eps;
      const long double up = f();
      (*p.tensor)[i] = saved - eps;
      const long double down = f();
      (*p.tensor)[i] = saved;
      g[i] = static_cast<double>((up - down) / (2 * static_cast<long double>(eps)));
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// ||a - n|| / max(||a||, ||n||, floor) over all elements.
inline double relative_error(const std::vector<dendron::Tensor>& analytic,
                             const std::vector<std::vector<double>>& numeric, double floor = 1e-6) {
  long double diff = 0, na = 0, nn = 0;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    for (std::size_t i = 0; i < numeric[t].size(); ++i) {
      const long double a = analytic[t][i], n = numeric[t][i];
      diff += (a - n) * (a - n);
      na += a * a;
      nn += n * n;
    }
  }
  const long double denom = std::max({std::sqrt(na), std::sqrt(nn), static_cast<long double>(floor)});
  return static_cast<double>(std::sqrt(diff) / denom);
}

// Sum over terminal labels of the product of confidences along every
// root-to-label route, found by walking the raw dependency list.
inline long double leaf_mass(const dendron::TaskGraph& g, const std::map<TaskId, Tensor>& probs) {
  const auto deps = g.dependencies();
  std::function<long double(TaskId, long double)> walk = [&](TaskId t, long double mass) {
    long double total = 0;
    const auto& labels = g.task(t).labels;
    for (std::size_t c = 0; c < labels.size(); ++c) {
      const long double m = mass * probs.at(t)[c];
      bool has_child = false;
      for (const auto& d : deps) {
        if (d.parent == t && d.label == labels[c]) {
          has_child = true;
          total += walk(d.task, m);
        }
      }
      if (!has_child) total += m;
    }
    return total;
  };
  for (const auto& task : g.tasks()) {
    bool has_parent = false;
    for (const auto& d : deps) has_parent = has_parent || d.task == task.id;
    if (!has_parent) return walk(task.id, 1.0L);
  }
  return 0;
}

// Parameter totals by summing tensor sizes, split on the name suffix.
struct Totals {
  std::uint64_t fe_weights = 0, fe_biases = 0;
  std::map<TaskId, std::uint64_t> head_weights, head_biases;
};

inline Totals count_tensors(const dendron::ModelBundle& bundle) {
  Totals t;
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& p : bundle.parameters()) {
    const bool bias = ends_with(p.name, ".bias");
    if (p.name.rfind("fe.", 0) == 0) {
      (bias ? t.fe_biases : t.fe_weights) += p.tensor->size();
    } else {
      const TaskId id = std::stoull(p.name.substr(4, p.name.find('.') - 4));
      (bias ? t.head_biases : t.head_weights)[id] += p.tensor->size();
    }
  }
  return t;
}

// Activation sizes observed by running the network on a zero window, then
// the largest adjacent-pair sum in bytes.
inline std::uint64_t observed_activation_peak(const dendron::ModelBundle& bundle,
                                              const std::vector<TaskId>& path) {
  const auto& spec = bundle.feature_extractor().spec();
  Tensor window({spec.input_channels, spec.window_len});
  dendron::FeatureExtractorTrace trace;
  const Tensor feature = bundle.feature_extractor().forward(window, &trace);
  std::vector<std::vector<std::uint64_t>> chains;
  std::vector<std::uint64_t> fe{window.size()};
  for (const auto& block : trace.blocks) {
    fe.push_back(block.pre_activation.size());
    fe.push_back(block.pool_argmax.size());
  }
  chains.push_back(fe);
  for (TaskId id : path) {
    dendron::HeadTrace ht;
    bundle.head(id).logits(feature, &ht);
    std::vector<std::uint64_t> chain{feature.size()};
    for (const auto& z : ht.pre_activations) chain.push_back(z.size());
    chains.push_back(chain);
  }
  std::uint64_t peak = 0;
  for (const auto& c : chains) {
    for (std::size_t i = 0; i + 1 < c.size(); ++i) peak = std::max(peak, c[i] + c[i + 1]);
  }
  return 4 * peak;
}

// Window start offsets found by trying every position.
inline std::vector<std::size_t> window_starts(std::size_t n, std::size_t w, std::size_t stride) {
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s < n; ++s) {
    if (s % stride == 0 && s + w <= n) starts.push_back(s);
  }
  return starts;
}

// Uniform random FE spec that fits `window_len`.
inline dendron::FeatureExtractorSpec random_fe_spec(dendron::Rng& rng, std::size_t channels,
                                                    std::size_t window_len, std::size_t max_blocks) {
  dendron::FeatureExtractorSpec spec{channels, window_len, {}};
  std::size_t len = window_len;
  const std::size_t blocks = rng.below(max_blocks + 1);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(4, len));
    const std::size_t conv_len = len - k + 1;
    const std::size_t pool = 1 + rng.below(std::min<std::size_t>(3, conv_len));
    spec.blocks.push_back({k, 1 + rng.below(4), pool});
    len = conv_len / pool;
    if (len < 2) break;
  }
  return spec;
}

inline Tensor random_window(dendron::Rng& rng, std::size_t channels, std::size_t len) {
  Tensor w({channels, len});
  for (auto& v : w.data()) v = rng.normal();
  return w;
}

}  // namespace oracle
