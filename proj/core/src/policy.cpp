#include "disco/policy.hpp"

#include "disco/errors.hpp"
#include "disco/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace disco::policy {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float64");

double LogProbTrace::sum() const {
  return std::accumulate(logp.begin(), logp.end(), 0.0);
}

double LogProbTrace::sum_reasoning() const {
  return std::accumulate(logp.begin(), logp.begin() + static_cast<std::ptrdiff_t>(r_len),
                         0.0);
}

double LogProbTrace::sum_code() const {
  return std::accumulate(logp.begin() + static_cast<std::ptrdiff_t>(r_len), logp.end(),
                         0.0);
}

namespace {

constexpr double kRmsEps = 1e-5;
constexpr double kGeluC = 0.7978845608028653558799;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu_forward(double x, double& tanh_cache) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  tanh_cache = std::tanh(u);
  return 0.5 * x * (1.0 + tanh_cache);
}

double gelu_backward(double x, double th) {
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

// y[t] = W x[t] for every row of a (rows x in) activation block; W is
// (out x in), row-major.
void linear_forward(const double* w, const double* x, double* y, std::size_t rows,
                    std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * in;
    double* yt = y + t * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xt[i];
      yt[o] = acc;
    }
  }
}

// Accumulates dW += dy^T x and dx += dy W for the same block shapes.
void linear_backward(const double* w, const double* x, const double* dy, double* dw,
                     double* dx, std::size_t rows, std::size_t in, std::size_t out) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * in;
    const double* dyt = dy + t * out;
    double* dxt = dx + t * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyt[o];
      if (g == 0.0) continue;
      const double* wo = w + o * in;
      double* dwo = dw + o * in;
      for (std::size_t i = 0; i < in; ++i) {
        dwo[i] += g * xt[i];
        dxt[i] += g * wo[i];
      }
    }
  }
}

void rmsnorm_forward(const double* x, double* y, double* r_inv, std::size_t rows,
                     std::size_t d) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * d;
    double* yt = y + t * d;
    double sum_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sum_sq += xt[j] * xt[j];
    const double r = 1.0 / std::sqrt(sum_sq / static_cast<double>(d) + kRmsEps);
    r_inv[t] = r;
    for (std::size_t j = 0; j < d; ++j) yt[j] = xt[j] * r;
  }
}

void rmsnorm_backward(const double* x, const double* r_inv, const double* dy, double* dx,
                      std::size_t rows, std::size_t d) {
  for (std::size_t t = 0; t < rows; ++t) {
    const double* xt = x + t * d;
    const double* dyt = dy + t * d;
    double* dxt = dx + t * d;
    const double r = r_inv[t];
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += dyt[j] * xt[j];
    const double coeff = r * r * r * dot / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) dxt[j] += r * dyt[j] - coeff * xt[j];
  }
}

}  // namespace

std::span<double> PolicyModel::tensor(std::string_view name) {
  for (const TensorSpec& spec : specs_) {
    if (spec.name == name) {
      return std::span<double>(params_.data() + spec.offset,
                               static_cast<std::size_t>(spec.rows) * spec.cols);
    }
  }
  throw Error(ErrorKind::internal, fmt::format("unknown tensor '{}'", name));
}

std::span<const double> PolicyModel::tensor(std::string_view name) const {
  return const_cast<PolicyModel*>(this)->tensor(name);
}

PolicyModel PolicyModel::init(const ModelConfig& config, std::uint64_t seed) {
  if (config.vocab < 2 || config.d_model < 1 || config.n_layers < 1 ||
      config.n_heads < 1 || config.context < 2 ||
      config.d_model % config.n_heads != 0) {
    throw Error(ErrorKind::validation, "invalid model configuration");
  }
  PolicyModel model;
  model.config_ = config;
  const int d = config.d_model;
  const int ff = config.d_ff();
  std::size_t offset = 0;
  auto add = [&](const std::string& name, int rows, int cols) {
    model.specs_.push_back({name, rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * cols;
  };
  add("wte", config.vocab, d);
  add("wpe", config.context, d);
  for (int l = 0; l < config.n_layers; ++l) {
    add(fmt::format("layer{}.attn.wq", l), d, d);
    add(fmt::format("layer{}.attn.wk", l), d, d);
    add(fmt::format("layer{}.attn.wv", l), d, d);
    add(fmt::format("layer{}.attn.wo", l), d, d);
    add(fmt::format("layer{}.mlp.fc1", l), ff, d);
    add(fmt::format("layer{}.mlp.fc2", l), d, ff);
  }
  add("lm_head", config.vocab, d);
  model.params_.assign(offset, 0.0);

  Rng rng(seed);
  constexpr double kInitStd = 0.02;
  for (const TensorSpec& spec : model.specs_) {
    if (spec.name == "lm_head") continue;  // zero head -> exactly uniform start
    double* data = model.params_.data() + spec.offset;
    const std::size_t count = static_cast<std::size_t>(spec.rows) * spec.cols;
    for (std::size_t i = 0; i < count; ++i) data[i] = kInitStd * rng.normal();
  }
  return model;
}

Evaluation PolicyModel::evaluate(const TokenSeq& prompt, const TokenSeq& reasoning,
                                 const TokenSeq& code) const {
  Evaluation eval;
  eval.seq.reserve(prompt.size() + reasoning.size() + code.size());
  eval.seq.insert(eval.seq.end(), prompt.begin(), prompt.end());
  eval.seq.insert(eval.seq.end(), reasoning.begin(), reasoning.end());
  eval.seq.insert(eval.seq.end(), code.begin(), code.end());
  eval.prompt_len = prompt.size();

  const std::size_t T = eval.seq.size();
  const std::size_t P = prompt.size();
  const std::size_t d = static_cast<std::size_t>(config_.d_model);
  const std::size_t V = static_cast<std::size_t>(config_.vocab);
  const std::size_t ff = static_cast<std::size_t>(config_.d_ff());
  const std::size_t H = static_cast<std::size_t>(config_.n_heads);
  const std::size_t hd = d / H;
  if (P == 0) {
    throw Error(ErrorKind::validation, "evaluate: empty prompt");
  }
  if (T == P) {
    throw Error(ErrorKind::validation, "evaluate: nothing to score after the prompt");
  }
  if (T > static_cast<std::size_t>(config_.context)) {
    throw Error(ErrorKind::validation,
                fmt::format("sequence length {} exceeds context {}", T, config_.context));
  }
  for (Token t : eval.seq) {
    if (t < 0 || t >= config_.vocab) {
      throw Error(ErrorKind::validation, fmt::format("token id {} outside vocab", t));
    }
  }

  const std::span<const double> wte = tensor("wte");
  const std::span<const double> wpe = tensor("wpe");
  eval.embedded.resize(T * d);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t tok = static_cast<std::size_t>(eval.seq[t]);
    for (std::size_t j = 0; j < d; ++j) {
      eval.embedded[t * d + j] = wte[tok * d + j] + wpe[t * d + j];
    }
  }

  std::vector<double> x = eval.embedded;
  eval.layers.resize(static_cast<std::size_t>(config_.n_layers));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int l = 0; l < config_.n_layers; ++l) {
    LayerCache& cache = eval.layers[static_cast<std::size_t>(l)];
    cache.input = x;
    cache.n1.resize(T * d);
    cache.rms1_inv.resize(T);
    rmsnorm_forward(cache.input.data(), cache.n1.data(), cache.rms1_inv.data(), T, d);

    cache.q.resize(T * d);
    cache.k.resize(T * d);
    cache.v.resize(T * d);
    const std::span<const double> wq = tensor(fmt::format("layer{}.attn.wq", l));
    const std::span<const double> wk = tensor(fmt::format("layer{}.attn.wk", l));
    const std::span<const double> wv = tensor(fmt::format("layer{}.attn.wv", l));
    const std::span<const double> wo = tensor(fmt::format("layer{}.attn.wo", l));
    linear_forward(wq.data(), cache.n1.data(), cache.q.data(), T, d, d);
    linear_forward(wk.data(), cache.n1.data(), cache.k.data(), T, d, d);
    linear_forward(wv.data(), cache.n1.data(), cache.v.data(), T, d, d);

    cache.att.assign(H * T * T, 0.0);
    cache.att_out.assign(T * d, 0.0);
    std::vector<double> scores;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        scores.assign(t + 1, 0.0);
        const double* qt = cache.q.data() + t * d + h * hd;
        double max_score = -1e300;
        for (std::size_t u = 0; u <= t; ++u) {
          const double* ku = cache.k.data() + u * d + h * hd;
          double acc = 0.0;
          for (std::size_t j = 0; j < hd; ++j) acc += qt[j] * ku[j];
          acc *= scale;
          scores[u] = acc;
          max_score = std::max(max_score, acc);
        }
        double denom = 0.0;
        for (std::size_t u = 0; u <= t; ++u) {
          scores[u] = std::exp(scores[u] - max_score);
          denom += scores[u];
        }
        double* att_row = cache.att.data() + (h * T + t) * T;
        double* out = cache.att_out.data() + t * d + h * hd;
        for (std::size_t u = 0; u <= t; ++u) {
          const double w = scores[u] / denom;
          att_row[u] = w;
          const double* vu = cache.v.data() + u * d + h * hd;
          for (std::size_t j = 0; j < hd; ++j) out[j] += w * vu[j];
        }
      }
    }

    std::vector<double> proj(T * d);
    linear_forward(wo.data(), cache.att_out.data(), proj.data(), T, d, d);
    cache.mid.resize(T * d);
    for (std::size_t i = 0; i < T * d; ++i) cache.mid[i] = cache.input[i] + proj[i];

    cache.n2.resize(T * d);
    cache.rms2_inv.resize(T);
    rmsnorm_forward(cache.mid.data(), cache.n2.data(), cache.rms2_inv.data(), T, d);

    const std::span<const double> w1 = tensor(fmt::format("layer{}.mlp.fc1", l));
    const std::span<const double> w2 = tensor(fmt::format("layer{}.mlp.fc2", l));
    cache.f_pre.resize(T * ff);
    cache.f_tanh.resize(T * ff);
    cache.f_act.resize(T * ff);
    linear_forward(w1.data(), cache.n2.data(), cache.f_pre.data(), T, d, ff);
    for (std::size_t i = 0; i < T * ff; ++i) {
      cache.f_act[i] = gelu_forward(cache.f_pre[i], cache.f_tanh[i]);
    }
    std::vector<double> f_out(T * d);
    linear_forward(w2.data(), cache.f_act.data(), f_out.data(), T, ff, d);
    for (std::size_t i = 0; i < T * d; ++i) x[i] = cache.mid[i] + f_out[i];
  }

  eval.final_res = x;
  eval.final_n.resize(T * d);
  eval.rmsf_inv.resize(T);
  rmsnorm_forward(eval.final_res.data(), eval.final_n.data(), eval.rmsf_inv.data(), T, d);

  eval.first_logit_row = P - 1;
  eval.last_logit_row = T - 2;
  eval.logits.assign(T * V, 0.0);
  eval.probs.assign(T * V, 0.0);
  eval.trace.prompt_len = P;
  eval.trace.r_len = reasoning.size();
  eval.trace.y_len = code.size();
  eval.trace.logp.resize(T - P);

  const std::span<const double> head = tensor("lm_head");
  for (std::size_t row = eval.first_logit_row; row <= eval.last_logit_row; ++row) {
    const double* fin = eval.final_n.data() + row * d;
    double* logits = eval.logits.data() + row * V;
    double max_logit = -1e300;
    for (std::size_t v = 0; v < V; ++v) {
      const double* hv = head.data() + v * d;
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += hv[j] * fin[j];
      logits[v] = acc;
      max_logit = std::max(max_logit, acc);
    }
    double denom = 0.0;
    for (std::size_t v = 0; v < V; ++v) denom += std::exp(logits[v] - max_logit);
    const double log_denom = max_logit + std::log(denom);
    double* prow = eval.probs.data() + row * V;
    for (std::size_t v = 0; v < V; ++v) prow[v] = std::exp(logits[v] - log_denom);
    const std::size_t target = static_cast<std::size_t>(eval.seq[row + 1]);
    eval.trace.logp[row + 1 - P] = logits[target] - log_denom;
  }
  return eval;
}

void PolicyModel::backward(Evaluation& eval, const std::vector<double>& d_trace,
                           std::vector<double>& grad) const {
  const std::size_t T = eval.seq.size();
  const std::size_t P = eval.prompt_len;
  const std::size_t d = static_cast<std::size_t>(config_.d_model);
  const std::size_t V = static_cast<std::size_t>(config_.vocab);
  const std::size_t ff = static_cast<std::size_t>(config_.d_ff());
  const std::size_t H = static_cast<std::size_t>(config_.n_heads);
  const std::size_t hd = d / H;
  if (d_trace.size() != eval.trace.logp.size()) {
    throw Error(ErrorKind::internal, "backward: trace gradient size mismatch");
  }
  if (grad.size() != params_.size()) {
    throw Error(ErrorKind::internal, "backward: gradient buffer size mismatch");
  }

  auto grad_of = [&](std::string_view name) -> double* {
    for (const TensorSpec& spec : specs_) {
      if (spec.name == name) return grad.data() + spec.offset;
    }
    throw Error(ErrorKind::internal, fmt::format("unknown tensor '{}'", name));
  };

  // Loss -> logits rows.
  eval.d_logits.assign(T * V, 0.0);
  for (std::size_t k = 0; k < d_trace.size(); ++k) {
    const double g = d_trace[k];
    if (g == 0.0) continue;
    const std::size_t row = P + k - 1;
    const std::size_t target = static_cast<std::size_t>(eval.seq[P + k]);
    const double* prow = eval.probs.data() + row * V;
    double* drow = eval.d_logits.data() + row * V;
    for (std::size_t v = 0; v < V; ++v) drow[v] -= g * prow[v];
    drow[target] += g;
  }

  // Head and final norm.
  const std::span<const double> head = tensor("lm_head");
  double* d_head = grad_of("lm_head");
  std::vector<double> d_final_n(T * d, 0.0);
  for (std::size_t row = eval.first_logit_row; row <= eval.last_logit_row; ++row) {
    const double* drow = eval.d_logits.data() + row * V;
    const double* fin = eval.final_n.data() + row * d;
    double* dfin = d_final_n.data() + row * d;
    for (std::size_t v = 0; v < V; ++v) {
      const double g = drow[v];
      if (g == 0.0) continue;
      const double* hv = head.data() + v * d;
      double* dhv = d_head + v * d;
      for (std::size_t j = 0; j < d; ++j) {
        dhv[j] += g * fin[j];
        dfin[j] += g * hv[j];
      }
    }
  }

  std::vector<double> dx(T * d, 0.0);
  rmsnorm_backward(eval.final_res.data(), eval.rmsf_inv.data(), d_final_n.data(),
                   dx.data(), T, d);

  std::vector<double> d_mid(T * d);
  std::vector<double> d_n2(T * d);
  std::vector<double> d_f_act(T * ff);
  std::vector<double> d_f_pre(T * ff);
  std::vector<double> d_att_out(T * d);
  std::vector<double> d_q(T * d);
  std::vector<double> d_k(T * d);
  std::vector<double> d_v(T * d);
  std::vector<double> d_n1(T * d);
  std::vector<double> d_input(T * d);
  std::vector<double> d_att_row;
  std::vector<double> d_score;

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int l = config_.n_layers - 1; l >= 0; --l) {
    LayerCache& cache = eval.layers[static_cast<std::size_t>(l)];
    const std::span<const double> wq = tensor(fmt::format("layer{}.attn.wq", l));
    const std::span<const double> wk = tensor(fmt::format("layer{}.attn.wk", l));
    const std::span<const double> wv = tensor(fmt::format("layer{}.attn.wv", l));
    const std::span<const double> wo = tensor(fmt::format("layer{}.attn.wo", l));
    const std::span<const double> w1 = tensor(fmt::format("layer{}.mlp.fc1", l));
    const std::span<const double> w2 = tensor(fmt::format("layer{}.mlp.fc2", l));
    double* dwq = grad_of(fmt::format("layer{}.attn.wq", l));
    double* dwk = grad_of(fmt::format("layer{}.attn.wk", l));
    double* dwv = grad_of(fmt::format("layer{}.attn.wv", l));
    double* dwo = grad_of(fmt::format("layer{}.attn.wo", l));
    double* dw1 = grad_of(fmt::format("layer{}.mlp.fc1", l));
    double* dw2 = grad_of(fmt::format("layer{}.mlp.fc2", l));

    // x_out = mid + W2 gelu(W1 n2);  dx currently holds d(x_out).
    d_mid = dx;
    std::fill(d_f_act.begin(), d_f_act.end(), 0.0);
    linear_backward(w2.data(), cache.f_act.data(), dx.data(), dw2, d_f_act.data(), T, ff,
                    d);
    for (std::size_t i = 0; i < T * ff; ++i) {
      d_f_pre[i] = d_f_act[i] * gelu_backward(cache.f_pre[i], cache.f_tanh[i]);
    }
    std::fill(d_n2.begin(), d_n2.end(), 0.0);
    linear_backward(w1.data(), cache.n2.data(), d_f_pre.data(), dw1, d_n2.data(), T, d,
                    ff);
    rmsnorm_backward(cache.mid.data(), cache.rms2_inv.data(), d_n2.data(), d_mid.data(),
                     T, d);

    // mid = input + Wo att_out;  d_mid holds d(mid).
    d_input = d_mid;
    std::fill(d_att_out.begin(), d_att_out.end(), 0.0);
    linear_backward(wo.data(), cache.att_out.data(), d_mid.data(), dwo,
                    d_att_out.data(), T, d, d);

    std::fill(d_q.begin(), d_q.end(), 0.0);
    std::fill(d_k.begin(), d_k.end(), 0.0);
    std::fill(d_v.begin(), d_v.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* datt_out_t = d_att_out.data() + t * d + h * hd;
        const double* att_row = cache.att.data() + (h * T + t) * T;
        d_att_row.assign(t + 1, 0.0);
        for (std::size_t u = 0; u <= t; ++u) {
          const double* vu = cache.v.data() + u * d + h * hd;
          double* dvu = d_v.data() + u * d + h * hd;
          double acc = 0.0;
          const double w = att_row[u];
          for (std::size_t j = 0; j < hd; ++j) {
            acc += datt_out_t[j] * vu[j];
            dvu[j] += w * datt_out_t[j];
          }
          d_att_row[u] = acc;
        }
        double dot = 0.0;
        for (std::size_t u = 0; u <= t; ++u) dot += att_row[u] * d_att_row[u];
        d_score.assign(t + 1, 0.0);
        for (std::size_t u = 0; u <= t; ++u) {
          d_score[u] = att_row[u] * (d_att_row[u] - dot);
        }
        const double* qt = cache.q.data() + t * d + h * hd;
        double* dqt = d_q.data() + t * d + h * hd;
        for (std::size_t u = 0; u <= t; ++u) {
          const double g = d_score[u] * scale;
          if (g == 0.0) continue;
          const double* ku = cache.k.data() + u * d + h * hd;
          double* dku = d_k.data() + u * d + h * hd;
          for (std::size_t j = 0; j < hd; ++j) {
            dqt[j] += g * ku[j];
            dku[j] += g * qt[j];
          }
        }
      }
    }

    std::fill(d_n1.begin(), d_n1.end(), 0.0);
    linear_backward(wq.data(), cache.n1.data(), d_q.data(), dwq, d_n1.data(), T, d, d);
    linear_backward(wk.data(), cache.n1.data(), d_k.data(), dwk, d_n1.data(), T, d, d);
    linear_backward(wv.data(), cache.n1.data(), d_v.data(), dwv, d_n1.data(), T, d, d);
    rmsnorm_backward(cache.input.data(), cache.rms1_inv.data(), d_n1.data(),
                     d_input.data(), T, d);
    dx = d_input;
  }

  double* d_wte = grad_of("wte");
  double* d_wpe = grad_of("wpe");
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t tok = static_cast<std::size_t>(eval.seq[t]);
    const double* dxt = dx.data() + t * d;
    double* dte = d_wte + tok * d;
    double* dpe = d_wpe + t * d;
    for (std::size_t j = 0; j < d; ++j) {
      dte[j] += dxt[j];
      dpe[j] += dxt[j];
    }
  }
}

namespace {

// Incremental decode state: per-layer key/value caches grown one position at
// a time. Produces bitwise the same logits as the teacher-forced pass because
// every inner reduction runs in the same order.
struct DecodeState {
  std::vector<std::vector<double>> k_cache;  // per layer, context * d
  std::vector<std::vector<double>> v_cache;
  std::size_t length = 0;
};

std::vector<double> decode_step(const PolicyModel& model, DecodeState& state, Token token) {
  const ModelConfig& config = model.config();
  const std::size_t d = static_cast<std::size_t>(config.d_model);
  const std::size_t V = static_cast<std::size_t>(config.vocab);
  const std::size_t ff = static_cast<std::size_t>(config.d_ff());
  const std::size_t H = static_cast<std::size_t>(config.n_heads);
  const std::size_t hd = d / H;
  const std::size_t pos = state.length;
  if (pos >= static_cast<std::size_t>(config.context)) {
    throw Error(ErrorKind::validation, "decode: context exhausted");
  }
  if (token < 0 || token >= config.vocab) {
    throw Error(ErrorKind::validation, fmt::format("token id {} outside vocab", token));
  }
  if (state.k_cache.empty()) {
    state.k_cache.resize(static_cast<std::size_t>(config.n_layers));
    state.v_cache.resize(static_cast<std::size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
      state.k_cache[static_cast<std::size_t>(l)].assign(
          static_cast<std::size_t>(config.context) * d, 0.0);
      state.v_cache[static_cast<std::size_t>(l)].assign(
          static_cast<std::size_t>(config.context) * d, 0.0);
    }
  }

  const std::span<const double> wte = model.tensor("wte");
  const std::span<const double> wpe = model.tensor("wpe");
  std::vector<double> x(d);
  for (std::size_t j = 0; j < d; ++j) {
    x[j] = wte[static_cast<std::size_t>(token) * d + j] + wpe[pos * d + j];
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> n1(d), q(d), k(d), v(d), att_out(d), proj(d), n2(d), f(ff), f2(d);
  std::vector<double> scores;
  double rms_unused = 0.0;
  for (int l = 0; l < config.n_layers; ++l) {
    rmsnorm_forward(x.data(), n1.data(), &rms_unused, 1, d);
    const std::span<const double> wq = model.tensor(fmt::format("layer{}.attn.wq", l));
    const std::span<const double> wk = model.tensor(fmt::format("layer{}.attn.wk", l));
    const std::span<const double> wv = model.tensor(fmt::format("layer{}.attn.wv", l));
    const std::span<const double> wo = model.tensor(fmt::format("layer{}.attn.wo", l));
    linear_forward(wq.data(), n1.data(), q.data(), 1, d, d);
    linear_forward(wk.data(), n1.data(), k.data(), 1, d, d);
    linear_forward(wv.data(), n1.data(), v.data(), 1, d, d);
    std::vector<double>& kc = state.k_cache[static_cast<std::size_t>(l)];
    std::vector<double>& vc = state.v_cache[static_cast<std::size_t>(l)];
    std::copy(k.begin(), k.end(), kc.begin() + static_cast<std::ptrdiff_t>(pos * d));
    std::copy(v.begin(), v.end(), vc.begin() + static_cast<std::ptrdiff_t>(pos * d));

    std::fill(att_out.begin(), att_out.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      scores.assign(pos + 1, 0.0);
      const double* qh = q.data() + h * hd;
      double max_score = -1e300;
      for (std::size_t u = 0; u <= pos; ++u) {
        const double* ku = kc.data() + u * d + h * hd;
        double acc = 0.0;
        for (std::size_t j = 0; j < hd; ++j) acc += qh[j] * ku[j];
        acc *= scale;
        scores[u] = acc;
        max_score = std::max(max_score, acc);
      }
      double denom = 0.0;
      for (std::size_t u = 0; u <= pos; ++u) {
        scores[u] = std::exp(scores[u] - max_score);
        denom += scores[u];
      }
      double* out = att_out.data() + h * hd;
      for (std::size_t u = 0; u <= pos; ++u) {
        const double w = scores[u] / denom;
        const double* vu = vc.data() + u * d + h * hd;
        for (std::size_t j = 0; j < hd; ++j) out[j] += w * vu[j];
      }
    }
    linear_forward(wo.data(), att_out.data(), proj.data(), 1, d, d);
    for (std::size_t j = 0; j < d; ++j) x[j] += proj[j];

    rmsnorm_forward(x.data(), n2.data(), &rms_unused, 1, d);
    const std::span<const double> w1 = model.tensor(fmt::format("layer{}.mlp.fc1", l));
    const std::span<const double> w2 = model.tensor(fmt::format("layer{}.mlp.fc2", l));
    linear_forward(w1.data(), n2.data(), f.data(), 1, d, ff);
    for (std::size_t i = 0; i < ff; ++i) {
      double th = 0.0;
      f[i] = gelu_forward(f[i], th);
    }
    linear_forward(w2.data(), f.data(), f2.data(), 1, ff, d);
    for (std::size_t j = 0; j < d; ++j) x[j] += f2[j];
  }

  rmsnorm_forward(x.data(), n1.data(), &rms_unused, 1, d);
  const std::span<const double> head = model.tensor("lm_head");
  std::vector<double> logits(V);
  linear_forward(head.data(), n1.data(), logits.data(), 1, d, V);
  state.length = pos + 1;
  return logits;
}

}  // namespace

std::vector<double> PolicyModel::next_token_logits(const TokenSeq& context) const {
  if (context.empty()) {
    throw Error(ErrorKind::validation, "next_token_logits: empty context");
  }
  DecodeState state;
  std::vector<double> logits;
  for (Token token : context) logits = decode_step(*this, state, token);
  return logits;
}

std::vector<std::vector<double>> PolicyModel::incremental_logits(
    const TokenSeq& seq) const {
  if (seq.empty()) {
    throw Error(ErrorKind::validation, "incremental_logits: empty sequence");
  }
  if (seq.size() > static_cast<std::size_t>(config_.context)) {
    throw Error(ErrorKind::capacity,
                fmt::format("incremental_logits: sequence of {} tokens exceeds "
                            "context {}",
                            seq.size(), config_.context));
  }
  DecodeState state;
  std::vector<std::vector<double>> rows;
  rows.reserve(seq.size());
  for (Token token : seq) rows.push_back(decode_step(*this, state, token));
  return rows;
}

TokenSeq PolicyModel::sample(const TokenSeq& prompt, double temperature,
                             int max_new_tokens, std::uint64_t seed) const {
  if (prompt.empty()) {
    throw Error(ErrorKind::validation, "sample: empty prompt");
  }
  if (!(temperature > 0.0)) {
    throw Error(ErrorKind::validation, "sample: temperature must be > 0");
  }
  if (prompt.size() >= static_cast<std::size_t>(config_.context)) {
    throw Error(ErrorKind::validation, "sample: prompt fills the whole context");
  }

  DecodeState state;
  std::vector<double> logits;
  for (Token token : prompt) logits = decode_step(*this, state, token);

  Rng rng(seed);
  TokenSeq generated;
  const std::size_t V = static_cast<std::size_t>(config_.vocab);
  std::vector<double> probs(V);
  const std::size_t room = static_cast<std::size_t>(config_.context) - prompt.size();
  const std::size_t budget =
      std::min<std::size_t>(room, static_cast<std::size_t>(std::max(0, max_new_tokens)));
  for (std::size_t step = 0; step < budget; ++step) {
    double max_logit = -1e300;
    for (std::size_t v = 0; v < V; ++v) max_logit = std::max(max_logit, logits[v]);
    double denom = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      probs[v] = std::exp((logits[v] - max_logit) / temperature);
      denom += probs[v];
    }
    const double draw = rng.uniform() * denom;
    double cumulative = 0.0;
    Token choice = static_cast<Token>(V - 1);
    for (std::size_t v = 0; v < V; ++v) {
      cumulative += probs[v];
      if (draw < cumulative) {
        choice = static_cast<Token>(v);
        break;
      }
    }
    generated.push_back(choice);
    if (choice == kEndOfSequence) break;
    if (state.length >= static_cast<std::size_t>(config_.context)) break;
    logits = decode_step(*this, state, choice);
  }
  return generated;
}

void save_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
  Json header{
      {"magic", "disco-checkpoint"},
      {"version", 1},
      {"byte_order", "little-endian"},
      {"model",
       {{"vocab", data.config.vocab},
        {"d_model", data.config.d_model},
        {"n_layers", data.config.n_layers},
        {"n_heads", data.config.n_heads},
        {"context", data.config.context}}},
      {"meta", data.meta},
  };
  Json arrays = Json::array();
  for (const auto& [name, values] : data.arrays) {
    arrays.push_back({{"name", name}, {"count", values.size()}});
  }
  header["arrays"] = arrays;
  const std::string header_text = header.dump();

  std::string blob;
  const std::uint64_t header_len = header_text.size();
  blob.append(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  blob.append(header_text);
  for (const auto& [name, values] : data.arrays) {
    blob.append(reinterpret_cast<const char*>(values.data()),
                values.size() * sizeof(double));
  }
  write_text_file(path, blob);
}

CheckpointData load_checkpoint_file(const std::filesystem::path& path) {
  const std::string blob = read_text_file(path);
  if (blob.size() < sizeof(std::uint64_t)) {
    throw Error(ErrorKind::parse, fmt::format("{}: truncated checkpoint", path.string()));
  }
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, blob.data(), sizeof(header_len));
  if (blob.size() < sizeof(header_len) + header_len) {
    throw Error(ErrorKind::parse, fmt::format("{}: truncated checkpoint", path.string()));
  }
  const Json header =
      Json::parse(blob.substr(sizeof(header_len), header_len), nullptr, false);
  if (header.is_discarded() || header.value("magic", "") != "disco-checkpoint") {
    throw Error(ErrorKind::parse,
                fmt::format("{}: not a recognized checkpoint", path.string()));
  }
  if (header.value("version", 0) != 1) {
    throw Error(ErrorKind::parse,
                fmt::format("{}: unsupported checkpoint version {}", path.string(),
                            header.value("version", 0)));
  }
  CheckpointData data;
  const Json& model = header["model"];
  data.config.vocab = model.value("vocab", 256);
  data.config.d_model = model.value("d_model", 64);
  data.config.n_layers = model.value("n_layers", 2);
  data.config.n_heads = model.value("n_heads", 4);
  data.config.context = model.value("context", 512);
  data.meta = header.value("meta", Json::object());
  std::size_t offset = sizeof(header_len) + header_len;
  for (const Json& entry : header["arrays"]) {
    const std::string name = entry.value("name", "");
    const std::size_t count = entry.value("count", std::size_t{0});
    if (offset + count * sizeof(double) > blob.size()) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}: checkpoint blob shorter than declared", path.string()));
    }
    std::vector<double> values(count);
    std::memcpy(values.data(), blob.data() + offset, count * sizeof(double));
    offset += count * sizeof(double);
    data.arrays.emplace_back(name, std::move(values));
  }
  return data;
}

PolicyModel model_from_checkpoint(const CheckpointData& data) {
  PolicyModel model = PolicyModel::init(data.config, 0);
  for (const auto& [name, values] : data.arrays) {
    if (name == "params") {
      if (values.size() != model.param_count()) {
        throw Error(ErrorKind::parse, "checkpoint parameter count mismatch");
      }
      model.params() = values;
      return model;
    }
  }
  throw Error(ErrorKind::parse, "checkpoint carries no 'params' array");
}

CheckpointData checkpoint_from_model(const PolicyModel& model, Json meta) {
  CheckpointData data;
  data.config = model.config();
  data.meta = std::move(meta);
  data.arrays.emplace_back("params", model.params());
  return data;
}

void PolicyModel::save(const std::filesystem::path& path) const {
  Json meta{{"kind", "policy-model"}};
  save_checkpoint_file(path, checkpoint_from_model(*this, meta));
}

PolicyModel PolicyModel::load(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint_file(path));
}

GradCheckResult grad_check(
    const std::function<double(PolicyModel&, std::vector<double>*)>& loss,
    PolicyModel& model, double epsilon, std::size_t min_probes, std::uint64_t seed) {
  std::vector<double> analytic(model.param_count(), 0.0);
  loss(model, &analytic);

  const std::size_t n = model.param_count();
  const std::size_t probes = std::min(min_probes, n);
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < probes; ++i) {
    const std::size_t j = i + rng.bounded(n - i);
    std::swap(indices[i], indices[j]);
  }

  GradCheckResult result;
  result.probes = probes;
  for (std::size_t i = 0; i < probes; ++i) {
    const std::size_t index = indices[i];
    const double original = model.params()[index];
    const double h = epsilon * (1.0 + std::abs(original));
    model.params()[index] = original + h;
    const double loss_plus = loss(model, nullptr);
    model.params()[index] = original - h;
    const double loss_minus = loss(model, nullptr);
    model.params()[index] = original;
    const double fd = (loss_plus - loss_minus) / (2.0 * h);
    const double g = analytic[index];
    const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(fd - g) / denom);
  }
  return result;
}

}  // namespace disco::policy
