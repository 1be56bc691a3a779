#include "disco/losses.hpp"

#include "disco/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace disco::losses {

namespace {

// log(1 - 1e-12): the ceiling applied to vulnerable-token log-probabilities
// before the unlikelihood term, so log(1 - P) stays finite as P -> 1.
const double kLogProbCeiling = std::log1p(-1e-12);

void check_grad_buffer(const policy::PolicyModel& model, std::vector<double>* grad) {
  if (grad != nullptr && grad->size() != model.param_count()) {
    throw Error(ErrorKind::internal, "gradient buffer size mismatch");
  }
}

std::vector<double> scaled(const std::vector<double>& values, double factor) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * factor;
  return out;
}

}  // namespace

bool EncodedInstance::mask_all_zero() const {
  auto zero = [](const std::vector<double>& mask) {
    return std::all_of(mask.begin(), mask.end(), [](double v) { return v == 0.0; });
  };
  return zero(mask_plus) && zero(mask_minus);
}

std::size_t EncodedInstance::total_plus_len() const {
  return reasoning.size() + y_plus.size();
}

std::size_t EncodedInstance::total_minus_len() const {
  return reasoning.size() + y_minus.size();
}

EncodedInstance encode_instance(const corpus::PreferenceInstance& instance,
                                int context) {
  EncodedInstance enc;
  enc.id = instance.id;

  const SequenceRegions regions =
      make_regions(instance.x, instance.reasoning, instance.y_plus);
  enc.prompt = encode_bytes(regions.prompt);
  enc.reasoning = encode_bytes(regions.reasoning);

  const TokenSeq plus_code = encode_bytes(instance.y_plus);
  const TokenSeq minus_code = encode_bytes(instance.y_minus);
  if (plus_code.empty() || minus_code.empty()) {
    throw Error(ErrorKind::validation,
                fmt::format("instance '{}' has an empty code side", instance.id));
  }

  const tokenmask::MaskPair masks =
      tokenmask::compute_masks(enc.reasoning, plus_code, minus_code);
  enc.mask_plus.assign(masks.m_plus.begin(), masks.m_plus.end());
  enc.mask_minus.assign(masks.m_minus.begin(), masks.m_minus.end());
  enc.mask_plus.push_back(0.0);   // terminator is shared, never localized
  enc.mask_minus.push_back(0.0);
  enc.pct_plus = masks.pct_plus;
  enc.pct_minus = masks.pct_minus;
  enc.degenerate = masks.degenerate;
  enc.y_plus_code_len = plus_code.size();
  enc.y_minus_code_len = minus_code.size();

  enc.y_plus = plus_code;
  enc.y_plus.push_back(kEndOfSequence);
  enc.y_minus = minus_code;
  enc.y_minus.push_back(kEndOfSequence);

  const std::size_t longest =
      enc.prompt.size() + enc.reasoning.size() +
      std::max(enc.y_plus.size(), enc.y_minus.size());
  if (longest > static_cast<std::size_t>(context)) {
    throw Error(ErrorKind::capacity,
                fmt::format("instance '{}' needs {} positions but the context is {}",
                            instance.id, longest, context));
  }
  return enc;
}

EncodedInstance encode_parts(const std::string& x, const std::string& reasoning,
                             const std::string& y, int context,
                             const std::string& id) {
  if (y.empty()) {
    throw Error(ErrorKind::validation,
                fmt::format("instance '{}' has an empty code side", id));
  }
  EncodedInstance enc;
  enc.id = id;
  const SequenceRegions regions = make_regions(x, reasoning, y);
  enc.prompt = encode_bytes(regions.prompt);
  enc.reasoning = encode_bytes(regions.reasoning);
  enc.y_plus = encode_bytes(regions.code);
  enc.y_plus.push_back(kEndOfSequence);
  enc.y_plus_code_len = enc.y_plus.size() - 1;
  enc.has_pair = false;
  const std::size_t total = enc.prompt.size() + enc.reasoning.size() + enc.y_plus.size();
  if (total > static_cast<std::size_t>(context)) {
    throw Error(ErrorKind::capacity,
                fmt::format("instance '{}' needs {} positions but the context is {}", id,
                            total, context));
  }
  return enc;
}

double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double log1mexp(double t) {
  // t must be < 0; switch branches at -ln 2 for full precision.
  if (t > -0.6931471805599453) return std::log(-std::expm1(t));
  return std::log1p(-std::exp(t));
}

double log1mexp_clamped(double t) { return log1mexp(std::min(t, kLogProbCeiling)); }

PairTerms lpo_pair(std::span<const double> tp, std::span<const double> tm,
                   std::span<const double> mask_plus,
                   std::span<const double> mask_minus, double norm_plus,
                   double norm_minus, const PreferenceHyper& hyper) {
  if (tp.size() != mask_plus.size() || tm.size() != mask_minus.size()) {
    throw Error(ErrorKind::internal, "lpo_pair: trace/mask length mismatch");
  }
  if (!(norm_plus > 0.0) || !(norm_minus > 0.0)) {
    throw Error(ErrorKind::internal, "lpo_pair: nonpositive length normalizer");
  }
  double sum_plus = 0.0;
  double sum_minus = 0.0;
  double anchor = 0.0;
  for (std::size_t k = 0; k < tp.size(); ++k) {
    sum_plus += mask_plus[k] * tp[k];
    anchor += (1.0 - mask_plus[k]) * tp[k];
  }
  for (std::size_t k = 0; k < tm.size(); ++k) sum_minus += mask_minus[k] * tm[k];

  PairTerms terms;
  terms.delta = hyper.beta * (sum_plus / norm_plus - sum_minus / norm_minus);
  const double z = terms.delta - hyper.gamma;
  terms.loss = softplus(-z) - hyper.alpha * anchor;
  terms.pref_correct = terms.delta > 0.0;

  const double s = std::exp(log_sigmoid(z));
  terms.d_plus.resize(tp.size());
  terms.d_minus.resize(tm.size());
  for (std::size_t k = 0; k < tp.size(); ++k) {
    terms.d_plus[k] = (s - 1.0) * hyper.beta * mask_plus[k] / norm_plus -
                      hyper.alpha * (1.0 - mask_plus[k]);
  }
  for (std::size_t k = 0; k < tm.size(); ++k) {
    terms.d_minus[k] = (1.0 - s) * hyper.beta * mask_minus[k] / norm_minus;
  }
  return terms;
}

PairTerms simpo_pair(std::span<const double> tp, std::span<const double> tm,
                     const SimpoHyper& hyper) {
  if (tp.empty() || tm.empty()) {
    throw Error(ErrorKind::internal, "simpo_pair: empty trace");
  }
  const double len_plus = static_cast<double>(tp.size());
  const double len_minus = static_cast<double>(tm.size());
  const double sum_plus = std::accumulate(tp.begin(), tp.end(), 0.0);
  const double sum_minus = std::accumulate(tm.begin(), tm.end(), 0.0);

  PairTerms terms;
  terms.delta = hyper.beta * (sum_plus / len_plus - sum_minus / len_minus);
  const double z = terms.delta - hyper.gamma;
  terms.loss = softplus(-z);
  terms.pref_correct = terms.delta > 0.0;

  const double s = std::exp(log_sigmoid(z));
  terms.d_plus.assign(tp.size(), (s - 1.0) * hyper.beta / len_plus);
  terms.d_minus.assign(tm.size(), (1.0 - s) * hyper.beta / len_minus);
  return terms;
}

PairTerms dpo_pair(std::span<const double> tp, std::span<const double> tm,
                   double ref_plus_sum, double ref_minus_sum, double beta) {
  const double sum_plus = std::accumulate(tp.begin(), tp.end(), 0.0);
  const double sum_minus = std::accumulate(tm.begin(), tm.end(), 0.0);

  PairTerms terms;
  terms.delta = beta * ((sum_plus - ref_plus_sum) - (sum_minus - ref_minus_sum));
  terms.loss = softplus(-terms.delta);
  terms.pref_correct = terms.delta > 0.0;

  const double s = std::exp(log_sigmoid(terms.delta));
  terms.d_plus.assign(tp.size(), (s - 1.0) * beta);
  terms.d_minus.assign(tm.size(), (1.0 - s) * beta);
  return terms;
}

PairTerms safecoder_pair(std::span<const double> tp, std::span<const double> tm,
                         std::span<const double> mask_plus,
                         std::span<const double> mask_minus) {
  if (tp.size() != mask_plus.size() || tm.size() != mask_minus.size()) {
    throw Error(ErrorKind::internal, "safecoder_pair: trace/mask length mismatch");
  }
  PairTerms terms;
  terms.d_plus.resize(tp.size());
  terms.d_minus.resize(tm.size());
  for (std::size_t k = 0; k < tp.size(); ++k) {
    terms.loss -= mask_plus[k] * tp[k];
    terms.d_plus[k] = -mask_plus[k];
  }
  for (std::size_t k = 0; k < tm.size(); ++k) {
    if (mask_minus[k] == 0.0) {
      terms.d_minus[k] = 0.0;
      continue;
    }
    terms.loss -= mask_minus[k] * log1mexp_clamped(tm[k]);
    // Past the ceiling the term is constant, so its derivative vanishes.
    terms.d_minus[k] = tm[k] >= kLogProbCeiling
                           ? 0.0
                           : mask_minus[k] / std::expm1(-tm[k]);
  }
  return terms;
}

PairTerms sft_terms(std::span<const double> tp) {
  PairTerms terms;
  terms.loss = -std::accumulate(tp.begin(), tp.end(), 0.0);
  terms.d_plus.assign(tp.size(), -1.0);
  return terms;
}

BatchReport batch_sft(const policy::PolicyModel& model,
                      std::span<const EncodedInstance> batch,
                      std::vector<double>* grad) {
  check_grad_buffer(model, grad);
  if (batch.empty()) {
    throw Error(ErrorKind::validation, "sft: empty batch");
  }
  BatchReport report;
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss_sum = 0.0;
  for (const EncodedInstance& inst : batch) {
    policy::Evaluation eval = model.evaluate(inst.prompt, inst.reasoning, inst.y_plus);
    const PairTerms terms = sft_terms(eval.trace.logp);
    loss_sum += terms.loss;
    if (grad != nullptr) {
      model.backward(eval, scaled(terms.d_plus, inv), *grad);
    }
  }
  report.loss = loss_sum * inv;
  report.used = batch.size();
  return report;
}

namespace {

// Shared driver for the paired objectives: filters unusable instances, runs
// both evaluations, maps PairTerms through backward(), and averages.
template <typename TermsFn>
BatchReport run_paired(const policy::PolicyModel& model,
                       std::span<const EncodedInstance> batch, bool needs_masks,
                       const char* label, std::vector<double>* grad, TermsFn&& terms_fn) {
  check_grad_buffer(model, grad);
  std::vector<const EncodedInstance*> usable;
  usable.reserve(batch.size());
  for (const EncodedInstance& inst : batch) {
    if (!inst.has_pair) continue;
    if (needs_masks && (inst.degenerate || inst.mask_all_zero())) continue;
    usable.push_back(&inst);
  }
  if (usable.empty()) {
    throw Error(
        ErrorKind::validation,
        fmt::format("{}: no usable instances in batch of {} "
                    "(instances without a pair or without localized tokens are skipped)",
                    label, batch.size()));
  }

  BatchReport report;
  report.used = usable.size();
  report.skipped = batch.size() - usable.size();
  const double inv = 1.0 / static_cast<double>(usable.size());
  double loss_sum = 0.0;
  double delta_sum = 0.0;
  std::size_t correct = 0;
  for (const EncodedInstance* inst : usable) {
    policy::Evaluation eval_plus =
        model.evaluate(inst->prompt, inst->reasoning, inst->y_plus);
    policy::Evaluation eval_minus =
        model.evaluate(inst->prompt, inst->reasoning, inst->y_minus);
    const PairTerms terms = terms_fn(*inst, eval_plus, eval_minus);
    loss_sum += terms.loss;
    delta_sum += terms.delta;
    correct += terms.pref_correct ? 1 : 0;
    if (grad != nullptr) {
      model.backward(eval_plus, scaled(terms.d_plus, inv), *grad);
      model.backward(eval_minus, scaled(terms.d_minus, inv), *grad);
    }
  }
  report.loss = loss_sum * inv;
  report.delta_mean = delta_sum * inv;
  report.pref_acc = static_cast<double>(correct) * inv;
  return report;
}

}  // namespace

BatchReport batch_lpo(const policy::PolicyModel& model,
                      std::span<const EncodedInstance> batch,
                      const PreferenceHyper& hyper, std::vector<double>* grad) {
  return run_paired(
      model, batch, /*needs_masks=*/true, "lpo", grad,
      [&](const EncodedInstance& inst, policy::Evaluation& eval_plus,
          policy::Evaluation& eval_minus) {
        const bool full = hyper.delta_norm == DeltaNorm::full;
        const double norm_plus =
            full ? static_cast<double>(inst.total_plus_len())
                 : static_cast<double>(inst.y_plus_code_len);
        const double norm_minus =
            full ? static_cast<double>(inst.total_minus_len())
                 : static_cast<double>(inst.y_minus_code_len);
        return lpo_pair(eval_plus.trace.logp, eval_minus.trace.logp, inst.mask_plus,
                        inst.mask_minus, norm_plus, norm_minus, hyper);
      });
}

BatchReport batch_simpo(const policy::PolicyModel& model,
                        std::span<const EncodedInstance> batch,
                        const SimpoHyper& hyper, std::vector<double>* grad) {
  return run_paired(model, batch, /*needs_masks=*/false, "simpo", grad,
                    [&](const EncodedInstance&, policy::Evaluation& eval_plus,
                        policy::Evaluation& eval_minus) {
                      return simpo_pair(eval_plus.trace.logp, eval_minus.trace.logp,
                                        hyper);
                    });
}

BatchReport batch_dpo(const policy::PolicyModel& model,
                      const policy::PolicyModel& reference,
                      std::span<const EncodedInstance> batch, double beta,
                      std::vector<double>* grad) {
  return run_paired(model, batch, /*needs_masks=*/false, "dpo", grad,
                    [&](const EncodedInstance& inst, policy::Evaluation& eval_plus,
                        policy::Evaluation& eval_minus) {
                      const double ref_plus =
                          reference.evaluate(inst.prompt, inst.reasoning, inst.y_plus)
                              .trace.sum();
                      const double ref_minus =
                          reference.evaluate(inst.prompt, inst.reasoning, inst.y_minus)
                              .trace.sum();
                      return dpo_pair(eval_plus.trace.logp, eval_minus.trace.logp,
                                      ref_plus, ref_minus, beta);
                    });
}

BatchReport batch_safecoder(const policy::PolicyModel& model,
                            std::span<const EncodedInstance> batch,
                            std::vector<double>* grad) {
  return run_paired(model, batch, /*needs_masks=*/true, "safecoder", grad,
                    [&](const EncodedInstance& inst, policy::Evaluation& eval_plus,
                        policy::Evaluation& eval_minus) {
                      return safecoder_pair(eval_plus.trace.logp, eval_minus.trace.logp,
                                            inst.mask_plus, inst.mask_minus);
                    });
}

}  // namespace disco::losses
