// SPDX-License-Identifier: Apache-2.0

#include "tataa/refmodel.hpp"

#include <cmath>
#include <stdexcept>

#include "tataa/errors.hpp"
#include "tataa/quantize.hpp"

namespace tataa::refmodel {

// ---- metrics ---------------------------------------------------------------

ErrorReport compare(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("compare: size mismatch");
  ErrorReport r;
  double se = 0, dot = 0, na = 0, nb = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    double d = a[k] - b[k];
    se += d * d;
    r.max_abs = std::max(r.max_abs, std::fabs(d));
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  r.rmse = a.empty() ? 0.0 : std::sqrt(se / static_cast<double>(a.size()));
  if (na == 0 && nb == 0) r.cosine = 1.0;
  else if (na == 0 || nb == 0) r.cosine = 0.0;
  else r.cosine = dot / (std::sqrt(na) * std::sqrt(nb));
  return r;
}

ErrorReport compare_bits(const std::vector<uint16_t>& a, const std::vector<uint16_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("compare_bits: size mismatch");
  std::vector<double> da(a.size()), db(b.size());
  ErrorReport r;
  for (size_t k = 0; k < a.size(); ++k) {
    Bf16 va = Bf16::from_bits(a[k]), vb = Bf16::from_bits(b[k]);
    da[k] = va.to_double();
    db[k] = vb.to_double();
    int32_t d = ulp_distance(va, vb);
    r.ulp_hist[d >= 8 ? 8 : d] += 1;
  }
  auto base = compare(da, db);
  base.ulp_hist = std::move(r.ulp_hist);
  return base;
}

// ---- deterministic rng -------------------------------------------------

uint64_t Rng::next() {
  state += 0x9E3779B97F4A7C15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  double u1 = uniform(), u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// ---- reference operators -------------------------------------------------

RefTensor matmul(const RefTensor& a, const RefTensor& b) {
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k) throw std::invalid_argument("ref matmul: shape mismatch");
  RefTensor z{std::vector<double>(static_cast<size_t>(m * n), 0.0), {m, n}};
  for (int64_t i = 0; i < m; ++i)
    for (int64_t kk = 0; kk < k; ++kk) {
      double av = a.data[static_cast<size_t>(i * k + kk)];
      if (av == 0) continue;
      for (int64_t j = 0; j < n; ++j)
        z.data[static_cast<size_t>(i * n + j)] += av * b.data[static_cast<size_t>(kk * n + j)];
    }
  return z;
}

RefTensor transpose(const RefTensor& a) {
  int64_t m = a.shape[0], n = a.shape[1];
  RefTensor t{std::vector<double>(a.data.size()), {n, m}};
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      t.data[static_cast<size_t>(j * m + i)] = a.data[static_cast<size_t>(i * n + j)];
  return t;
}

RefTensor add(const RefTensor& a, const RefTensor& b) {
  RefTensor z = a;
  if (b.shape == a.shape) {
    for (size_t k = 0; k < z.data.size(); ++k) z.data[k] += b.data[k];
  } else if (b.shape.size() == 1 && b.shape[0] == a.cols()) {
    int64_t n = a.cols();
    for (int64_t r = 0; r < a.rows(); ++r)
      for (int64_t c = 0; c < n; ++c) z.data[static_cast<size_t>(r * n + c)] += b.data[static_cast<size_t>(c)];
  } else {
    throw std::invalid_argument("ref add: shape mismatch");
  }
  return z;
}

RefTensor softmax_rows(const RefTensor& a) {
  RefTensor z = a;
  int64_t n = a.cols();
  for (int64_t r = 0; r < a.rows(); ++r) {
    double* row = z.data.data() + r * n;
    double mx = row[0];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double sum = 0;
    for (int64_t c = 0; c < n; ++c) sum += (row[c] = std::exp(row[c] - mx));
    for (int64_t c = 0; c < n; ++c) row[c] /= sum;
  }
  return z;
}

RefTensor layernorm(const RefTensor& x, const RefTensor& gamma, const RefTensor& beta, double eps) {
  RefTensor z = x;
  int64_t n = x.cols();
  for (int64_t r = 0; r < x.rows(); ++r) {
    double* row = z.data.data() + r * n;
    double mean = 0;
    for (int64_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0;
    for (int64_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t c = 0; c < n; ++c)
      row[c] = (row[c] - mean) * inv * gamma.data[static_cast<size_t>(c)] + beta.data[static_cast<size_t>(c)];
  }
  return z;
}

RefTensor rmsnorm(const RefTensor& x, const RefTensor& gamma, double eps) {
  RefTensor z = x;
  int64_t n = x.cols();
  for (int64_t r = 0; r < x.rows(); ++r) {
    double* row = z.data.data() + r * n;
    double ms = 0;
    for (int64_t c = 0; c < n; ++c) ms += row[c] * row[c];
    ms /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(ms + eps);
    for (int64_t c = 0; c < n; ++c) row[c] = row[c] * inv * gamma.data[static_cast<size_t>(c)];
  }
  return z;
}

RefTensor gelu(const RefTensor& x) {
  RefTensor z = x;
  for (auto& v : z.data) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return z;
}

RefTensor silu(const RefTensor& x) {
  RefTensor z = x;
  for (auto& v : z.data) v = v / (1.0 + std::exp(-v));
  return z;
}

RefTensor swiglu(const RefTensor& x, const RefTensor& wxb) {
  if (x.shape != wxb.shape) throw std::invalid_argument("ref swiglu: shape mismatch");
  RefTensor z = x;
  for (size_t k = 0; k < z.data.size(); ++k) {
    double v = x.data[k], w = wxb.data[k];
    double sv = v / (1.0 + std::exp(-v));
    double sw = 1.0 / (1.0 + std::exp(-w));
    z.data[k] = sv * v * sw;
  }
  return z;
}

RefTensor relu(const RefTensor& x) {
  RefTensor z = x;
  for (auto& v : z.data) v = v > 0 ? v : 0.0;
  return z;
}

// ---- block -----------------------------------------------------------------

namespace {

RefTensor randn(Rng& rng, std::vector<int64_t> shape, double stddev) {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  RefTensor t{std::vector<double>(static_cast<size_t>(n)), std::move(shape)};
  for (auto& v : t.data) v = rng.normal() * stddev;
  return t;
}

}  // namespace

TensorMap make_block_weights(const BlockSpec& spec, uint64_t seed) {
  Rng rng(seed * 0x9E3779B97F4A7C15ull + 1);
  TensorMap w;
  int D = spec.hidden, M = spec.mlp, dh = spec.head_dim();
  double s_attn = 1.0 / std::sqrt(static_cast<double>(D));
  double s_mlp1 = 1.0 / std::sqrt(static_cast<double>(D));
  double s_mlp2 = 1.0 / std::sqrt(static_cast<double>(M));
  for (int h = 0; h < spec.heads; ++h) {
    w["wq_h" + std::to_string(h)] = randn(rng, {D, dh}, s_attn);
    w["wk_h" + std::to_string(h)] = randn(rng, {D, dh}, s_attn);
    w["wv_h" + std::to_string(h)] = randn(rng, {D, dh}, s_attn);
    w["wp_h" + std::to_string(h)] = randn(rng, {dh, D}, 1.0 / std::sqrt(static_cast<double>(dh)));
  }
  w["w1"] = randn(rng, {D, M}, s_mlp1);
  w["w2"] = randn(rng, {M, D}, s_mlp2);
  // Norm parameters near identity.
  RefTensor g1{std::vector<double>(static_cast<size_t>(D)), {D}};
  RefTensor b1 = g1, g2 = g1, b2 = g1;
  for (int c = 0; c < D; ++c) {
    g1.data[static_cast<size_t>(c)] = 1.0 + 0.1 * rng.normal();
    b1.data[static_cast<size_t>(c)] = 0.1 * rng.normal();
    g2.data[static_cast<size_t>(c)] = 1.0 + 0.1 * rng.normal();
    b2.data[static_cast<size_t>(c)] = 0.1 * rng.normal();
  }
  w["g1"] = g1;
  w["b1"] = b1;
  w["g2"] = g2;
  w["b2"] = b2;
  if (spec.variant == BlockVariant::SwigluRmsNorm) {
    w["w_inner"] = randn(rng, {M, M}, 1.0 / std::sqrt(static_cast<double>(M)));
    w["b_inner"] = randn(rng, {M}, 0.1);
  }
  return w;
}

RefTensor make_block_input(const BlockSpec& spec, uint64_t seed) {
  Rng rng(seed * 0xD1B54A32D192ED03ull + 7);
  return randn(rng, {spec.seq, spec.hidden}, 1.0);
}

TensorMap ref_block(const BlockSpec& spec, const TensorMap& w, const RefTensor& x) {
  TensorMap t;
  int dh = spec.head_dim();
  bool enc = spec.variant == BlockVariant::EncoderGeluLayerNorm;
  t["x"] = x;
  RefTensor ln1 = enc ? layernorm(x, w.at("g1"), w.at("b1"), spec.eps)
                      : rmsnorm(x, w.at("g1"), spec.eps);
  t["ln1"] = ln1;
  t["ln1_q"] = ln1;  // int8 role: real values for calibration
  RefTensor attn;
  for (int h = 0; h < spec.heads; ++h) {
    std::string hs = std::to_string(h);
    RefTensor q = matmul(ln1, w.at("wq_h" + hs));
    RefTensor k = matmul(ln1, w.at("wk_h" + hs));
    RefTensor v = matmul(ln1, w.at("wv_h" + hs));
    t["q_q_h" + hs] = q;
    t["kT_q_h" + hs] = k;  // stored transposed on chip; same value range
    t["v_q_h" + hs] = v;
    RefTensor scores = matmul(q, transpose(k));
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (auto& s : scores.data) s *= scale;
    t["scores_h" + hs] = scores;
    RefTensor probs = softmax_rows(scores);
    t["probs_h" + hs] = probs;
    t["probs_q_h" + hs] = probs;
    RefTensor sv = matmul(probs, v);
    t["sv_q_h" + hs] = sv;
    RefTensor proj = matmul(sv, w.at("wp_h" + hs));
    t["proj_h" + hs] = proj;
    attn = h == 0 ? proj : add(attn, proj);
    if (h > 0) t["attn_acc" + hs] = attn;
  }
  t["attn"] = attn;
  RefTensor res1 = add(x, attn);
  t["res1"] = res1;
  RefTensor ln2 = enc ? layernorm(res1, w.at("g2"), w.at("b2"), spec.eps)
                      : rmsnorm(res1, w.at("g2"), spec.eps);
  t["ln2"] = ln2;
  t["ln2_q"] = ln2;
  RefTensor ffn1 = matmul(ln2, w.at("w1"));
  t["ffn1_bf"] = ffn1;
  RefTensor act;
  if (spec.variant == BlockVariant::EncoderGeluLayerNorm) {
    act = gelu(ffn1);
  } else if (spec.variant == BlockVariant::DecoderSiluRmsNorm) {
    act = silu(ffn1);
  } else {
    t["inner_q"] = ffn1;
    RefTensor inner = matmul(ffn1, w.at("w_inner"));
    t["inner_bf"] = inner;
    RefTensor wxb = add(inner, w.at("b_inner"));
    t["wxb"] = wxb;
    act = swiglu(ffn1, wxb);
  }
  t["act_bf"] = act;
  t["act_q"] = act;
  RefTensor ffn2 = matmul(act, w.at("w2"));
  t["ffn2_bf"] = ffn2;
  t["y"] = add(res1, ffn2);
  return t;
}

std::map<std::string, double> calibrate_block(const BlockSpec& spec, const TensorMap& weights,
                                              uint64_t seed, int n_samples) {
  std::map<std::string, std::vector<std::vector<double>>> samples;
  for (int s = 0; s < n_samples; ++s) {
    RefTensor x = make_block_input(spec, seed * 1000003ull + static_cast<uint64_t>(s));
    auto tape = ref_block(spec, weights, x);
    for (const auto& [name, tensor] : tape) samples[name].push_back(tensor.data);
  }
  std::map<std::string, double> scales;
  for (const auto& [name, vecs] : samples) scales[name] = quantize::calibrate_scale(vecs);
  return scales;
}

graph::Graph build_block_graph(const BlockSpec& spec, const TensorMap& weights,
                               const RefTensor& x, const std::map<std::string, double>& scales) {
  using graph::Format;
  using graph::OpKind;
  graph::Graph g;
  auto scale_of = [&](const std::string& name) {
    auto it = scales.find(name);
    if (it == scales.end()) throw CompileError("missing calibration scale for " + name);
    return it->second;
  };
  auto add_tensor = [&](const std::string& name, std::vector<int64_t> shape, Format fmt,
                        const char* kind, const std::vector<double>* data, double scale) {
    graph::TensorInfo t;
    t.name = name;
    t.shape = std::move(shape);
    t.format = fmt;
    t.is_input = std::string(kind) == "input";
    t.is_weight = std::string(kind) == "weight";
    t.is_output = std::string(kind) == "output";
    if (data) t.data = *data;
    t.scale = scale;
    g.tensors.emplace(name, std::move(t));
  };
  auto node = [&](const std::string& id, OpKind op, std::vector<std::string> inputs,
                  const std::string& output) -> graph::Node& {
    graph::Node n;
    n.id = id;
    n.op = op;
    n.inputs = std::move(inputs);
    n.output = output;
    g.nodes.push_back(std::move(n));
    return g.nodes.back();
  };

  int S = spec.seq, D = spec.hidden, M = spec.mlp, dh = spec.head_dim();
  bool enc = spec.variant == BlockVariant::EncoderGeluLayerNorm;

  add_tensor("x", {S, D}, Format::Bf16, "input", &x.data, 0);
  for (const auto& [name, wt] : weights) {
    bool is_int8 = name[0] == 'w';  // matmul weights; g*/b* norm parameters stay bf16
    add_tensor(name, wt.shape, is_int8 ? Format::Int8 : Format::Bf16, "weight", &wt.data, 0);
  }

  auto& norm1 = node("norm1", enc ? OpKind::LayerNorm : OpKind::RmsNorm, {"x"}, "ln1");
  norm1.eps = spec.eps;
  norm1.gamma = "g1";
  if (enc) norm1.beta = "b1";
  node("q_ln1", OpKind::Quantize, {"ln1"}, "ln1_q");

  std::vector<std::string> projs;
  for (int h = 0; h < spec.heads; ++h) {
    std::string hs = std::to_string(h);
    node("qgen" + hs, OpKind::MatMul, {"ln1_q", "wq_h" + hs}, "q_acc" + hs);
    node("qq" + hs, OpKind::Quantize, {"q_acc" + hs}, "q_q_h" + hs);
    node("kgen" + hs, OpKind::MatMul, {"ln1_q", "wk_h" + hs}, "k_acc" + hs);
    node("kq" + hs, OpKind::Quantize, {"k_acc" + hs}, "k_q_h" + hs);
    node("ktr" + hs, OpKind::Transpose, {"k_q_h" + hs}, "kT_q_h" + hs);
    node("vgen" + hs, OpKind::MatMul, {"ln1_q", "wv_h" + hs}, "v_acc" + hs);
    node("vq" + hs, OpKind::Quantize, {"v_acc" + hs}, "v_q_h" + hs);
    auto& qk = node("qk" + hs, OpKind::MatMul, {"q_q_h" + hs, "kT_q_h" + hs}, "scores_acc" + hs);
    qk.out_scale_mul = 1.0 / std::sqrt(static_cast<double>(dh));
    node("deq_scores" + hs, OpKind::Dequantize, {"scores_acc" + hs}, "scores_h" + hs);
    node("smax" + hs, OpKind::Softmax, {"scores_h" + hs}, "probs_h" + hs);
    node("probsq" + hs, OpKind::Quantize, {"probs_h" + hs}, "probs_q_h" + hs);
    node("sv" + hs, OpKind::MatMul, {"probs_q_h" + hs, "v_q_h" + hs}, "sv_acc" + hs);
    node("svq" + hs, OpKind::Quantize, {"sv_acc" + hs}, "sv_q_h" + hs);
    node("proj" + hs, OpKind::MatMul, {"sv_q_h" + hs, "wp_h" + hs}, "proj_acc" + hs);
    std::string proj_out = spec.heads == 1 ? "attn" : "proj_h" + hs;
    node("deq_proj" + hs, OpKind::Dequantize, {"proj_acc" + hs}, proj_out);
    projs.push_back(proj_out);
  }
  std::string attn = projs[0];
  for (size_t h = 1; h < projs.size(); ++h) {
    std::string out = h + 1 == projs.size() ? "attn" : "attn_acc" + std::to_string(h);
    node("attn_add" + std::to_string(h), OpKind::Add, {attn, projs[h]}, out);
    attn = out;
  }
  node("res1_add", OpKind::Add, {"x", "attn"}, "res1");
  auto& norm2 = node("norm2", enc ? OpKind::LayerNorm : OpKind::RmsNorm, {"res1"}, "ln2");
  norm2.eps = spec.eps;
  norm2.gamma = "g2";
  if (enc) norm2.beta = "b2";
  node("q_ln2", OpKind::Quantize, {"ln2"}, "ln2_q");
  node("ffn1", OpKind::MatMul, {"ln2_q", "w1"}, "ffn1_acc");
  node("deq_ffn1", OpKind::Dequantize, {"ffn1_acc"}, "ffn1_bf");
  if (spec.variant == BlockVariant::EncoderGeluLayerNorm) {
    node("act", OpKind::Gelu, {"ffn1_bf"}, "act_bf");
  } else if (spec.variant == BlockVariant::DecoderSiluRmsNorm) {
    node("act", OpKind::Silu, {"ffn1_bf"}, "act_bf");
  } else {
    node("q_inner", OpKind::Quantize, {"ffn1_bf"}, "inner_q");
    node("inner_mm", OpKind::MatMul, {"inner_q", "w_inner"}, "inner_acc");
    node("deq_inner", OpKind::Dequantize, {"inner_acc"}, "inner_bf");
    node("bias_inner", OpKind::Add, {"inner_bf", "b_inner"}, "wxb");
    node("act", OpKind::Swiglu, {"ffn1_bf", "wxb"}, "act_bf");
  }
  node("q_act", OpKind::Quantize, {"act_bf"}, "act_q");
  node("ffn2", OpKind::MatMul, {"act_q", "w2"}, "ffn2_acc");
  node("deq_ffn2", OpKind::Dequantize, {"ffn2_acc"}, "ffn2_bf");
  node("out_add", OpKind::Add, {"res1", "ffn2_bf"}, "y");

  // Shape inference and format propagation via the normal parse path is not
  // needed; bind shapes and quantization scales directly.
  std::vector<std::pair<std::string, std::vector<int64_t>>> inferred = {
      {"ln1", {S, D}}, {"ln1_q", {S, D}}, {"res1", {S, D}}, {"ln2", {S, D}},
      {"ln2_q", {S, D}}, {"ffn1_acc", {S, M}}, {"ffn1_bf", {S, M}}, {"act_bf", {S, M}},
      {"act_q", {S, M}}, {"ffn2_acc", {S, D}}, {"ffn2_bf", {S, D}}, {"attn", {S, D}},
      {"y", {S, D}}};
  for (int h = 0; h < spec.heads; ++h) {
    std::string hs = std::to_string(h);
    for (const char* base : {"q_acc", "k_acc", "v_acc"})
      inferred.push_back({base + hs, {S, dh}});
    inferred.push_back({"q_q_h" + hs, {S, dh}});
    inferred.push_back({"k_q_h" + hs, {S, dh}});
    inferred.push_back({"kT_q_h" + hs, {dh, S}});
    inferred.push_back({"v_q_h" + hs, {S, dh}});
    inferred.push_back({"scores_acc" + hs, {S, S}});
    inferred.push_back({"scores_h" + hs, {S, S}});
    inferred.push_back({"probs_h" + hs, {S, S}});
    inferred.push_back({"probs_q_h" + hs, {S, S}});
    inferred.push_back({"sv_acc" + hs, {S, dh}});
    inferred.push_back({"sv_q_h" + hs, {S, dh}});
    inferred.push_back({"proj_acc" + hs, {S, D}});
    if (spec.heads > 1) inferred.push_back({"proj_h" + hs, {S, D}});
    if (h > 0 && h + 1 < spec.heads)
      inferred.push_back({"attn_acc" + std::to_string(h), {S, D}});
  }
  if (spec.variant == BlockVariant::SwigluRmsNorm) {
    inferred.push_back({"inner_q", {S, M}});
    inferred.push_back({"inner_acc", {S, M}});
    inferred.push_back({"inner_bf", {S, M}});
    inferred.push_back({"wxb", {S, M}});
  }
  for (auto& [name, shape] : inferred)
    if (!g.tensors.count(name)) add_tensor(name, shape, Format::Bf16, "intermediate", nullptr, 0);

  // int8-role tensors with calibrated scales.
  std::vector<std::string> q_names = {"ln1_q", "ln2_q", "act_q"};
  for (int h = 0; h < spec.heads; ++h) {
    std::string hs = std::to_string(h);
    for (const char* base : {"q_q_h", "v_q_h", "probs_q_h", "sv_q_h"}) q_names.push_back(base + hs);
    q_names.push_back("kT_q_h" + hs);
    q_names.push_back("k_q_h" + hs);
  }
  if (spec.variant == BlockVariant::SwigluRmsNorm) q_names.push_back("inner_q");
  for (const auto& name : q_names) {
    auto& t = g.tensor(name);
    t.format = Format::Int8;
    // k_q_h carries the same values as kT_q_h; the tape records the latter.
    std::string key = name.rfind("k_q_h", 0) == 0 ? "kT_q_h" + name.substr(5) : name;
    t.scale = scale_of(key);
  }
  g.tensor("y").is_output = true;
  return g;
}

void golden_replay(const chain::Chain& ch, int lanes, std::vector<uint8_t>& mem,
                   const bfarith::ArithConfig& arith) {
  using chain::StepOp;
  std::map<int, std::vector<Bf16>> regs;
  auto reg = [&](int v) -> std::vector<Bf16>& {
    auto it = regs.find(v);
    if (it == regs.end()) throw std::invalid_argument("golden_replay: undefined register");
    return it->second;
  };
  auto fresh = [&](int v) -> std::vector<Bf16>& {
    return regs[v] = std::vector<Bf16>(static_cast<size_t>(lanes), Bf16::zero());
  };
  auto load_u16 = [&](uint64_t b) {
    return static_cast<uint16_t>(mem.at(b) | (mem.at(b + 1) << 8));
  };
  for (const auto& s : ch.steps) {
    switch (s.op) {
      case StepOp::Const: {
        auto& d = fresh(s.dst);
        for (auto& v : d) v = Bf16::from_bits(s.const_bits);
        break;
      }
      case StepOp::Load: {
        auto& d = fresh(s.dst);
        for (int l = 0; l < s.len; ++l)
          d[static_cast<size_t>(l)] = Bf16::from_bits(load_u16(s.byte_addr + 2 * static_cast<uint64_t>(l)));
        break;
      }
      case StepOp::LoadBcast: {
        auto& d = fresh(s.dst);
        Bf16 v = Bf16::from_bits(load_u16(s.byte_addr));
        for (int l = 0; l < s.len; ++l) d[static_cast<size_t>(l)] = v;
        break;
      }
      case StepOp::Mul:
      case StepOp::Add:
      case StepOp::Max:
      case StepOp::Min: {
        auto a = reg(s.a);
        auto b = reg(s.b);
        auto& d = fresh(s.dst);
        for (int l = 0; l < s.len; ++l) {
          size_t k = static_cast<size_t>(l);
          switch (s.op) {
            case StepOp::Mul: d[k] = bfarith::fpmul(a[k], b[k]); break;
            case StepOp::Add: d[k] = bfarith::fpadd(a[k], b[k], arith); break;
            case StepOp::Max: d[k] = bfarith::fpmax(a[k], b[k]); break;
            default: d[k] = bfarith::fpmin(a[k], b[k]); break;
          }
        }
        break;
      }
      case StepOp::Fold: {
        auto a = reg(s.a);
        auto& d = fresh(s.dst);
        int half = (s.len + 1) / 2;
        for (int l = 0; l < half; ++l) {
          Bf16 u = a[static_cast<size_t>(2 * l)];
          Bf16 v = 2 * l + 1 < s.len ? a[static_cast<size_t>(2 * l + 1)] : Bf16::zero();
          d[static_cast<size_t>(l)] = bfarith::fpadd(u, v, arith);
        }
        break;
      }
      case StepOp::AppSeed:
      case StepOp::AppSquare:
      case StepOp::Exp2: {
        auto a = reg(s.a);
        auto& d = fresh(s.dst);
        for (int l = 0; l < s.len; ++l) {
          size_t k = static_cast<size_t>(l);
          if (s.op == StepOp::Exp2) d[k] = bfarith::exp2_floor(a[k], arith);
          else d[k] = bfarith::fpapp(a[k], s.op == StepOp::AppSeed, arith);
        }
        break;
      }
      case StepOp::StoreBf16: {
        auto& a = reg(s.a);
        for (int l = 0; l < s.len; ++l) {
          uint16_t bits = a[static_cast<size_t>(l)].bits;
          mem.at(s.byte_addr + 2 * static_cast<uint64_t>(l)) = static_cast<uint8_t>(bits & 0xFF);
          mem.at(s.byte_addr + 2 * static_cast<uint64_t>(l) + 1) = static_cast<uint8_t>(bits >> 8);
        }
        break;
      }
      case StepOp::StoreInt8: {
        auto& a = reg(s.a);
        for (int l = 0; l < s.len; ++l)
          mem.at(s.byte_addr + static_cast<uint64_t>(l)) =
              static_cast<uint8_t>(quantize::bf16_to_int8(a[static_cast<size_t>(l)], s.scale));
        break;
      }
    }
  }
}

}  // namespace tataa::refmodel
