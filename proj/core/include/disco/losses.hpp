#pragma once

#include "disco/corpus.hpp"
#include "disco/policy.hpp"
#include "disco/tokenmask.hpp"
#include "disco/tokens.hpp"

#include <span>
#include <string>
#include <vector>

namespace disco::losses {

// Which length the per-side margin terms are divided by.
//   code: the code-token count of that side, terminator excluded (default)
//   full: every scored position (reasoning + code + terminator)
enum class DeltaNorm { code, full };

struct PreferenceHyper {
  double beta = 10.0;
  double gamma = 5.4;
  double alpha = 0.05;  // weight of the anchor term on unmasked y+ positions
  DeltaNorm delta_norm = DeltaNorm::code;
};

struct SimpoHyper {
  double beta = 2.0;
  double gamma = 0.5;
};

// A preference instance tokenized against the policy scaffold. The y columns
// carry the end-of-sequence terminator; the masks cover every scored position
// (reasoning first, then code, then a final zero for the terminator).
struct EncodedInstance {
  std::string id;
  TokenSeq prompt;
  TokenSeq reasoning;
  TokenSeq y_plus;
  TokenSeq y_minus;
  std::vector<double> mask_plus;
  std::vector<double> mask_minus;
  std::size_t y_plus_code_len = 0;   // terminator excluded
  std::size_t y_minus_code_len = 0;  // terminator excluded
  double pct_plus = 0.0;
  double pct_minus = 0.0;
  bool degenerate = false;  // identical code bodies: no localized signal
  bool has_pair = true;     // false when built from bare (x, r, y) parts

  bool mask_all_zero() const;
  std::size_t total_plus_len() const;
  std::size_t total_minus_len() const;
};

// Tokenizes a full preference instance. Throws a capacity error when either
// assembled sequence would not fit in `context` positions.
EncodedInstance encode_instance(const corpus::PreferenceInstance& instance, int context);

// Tokenizes a bare (instruction, reasoning, code) triple for SFT-style use;
// the result has no minus side and empty masks.
EncodedInstance encode_parts(const std::string& x, const std::string& reasoning,
                             const std::string& y, int context,
                             const std::string& id = "");

// ---------------------------------------------------------------------------
// Numerics shared by the losses.
double log_sigmoid(double z);          // log(sigmoid(z)), stable both ways
double softplus(double z);             // log(1 + e^z), stable both ways
double log1mexp(double t);             // log(1 - e^t) for t < 0, stable
double log1mexp_clamped(double t);     // same, with t clamped below log(1-1e-12)

// ---------------------------------------------------------------------------
// Pure per-pair terms over log-probability traces. `tp`/`tm` hold the scored
// per-position log-probabilities of the preferred / rejected sequences. These
// carry the loss value and its gradient with respect to each trace entry so
// callers can test the math without a model in the loop.
struct PairTerms {
  double loss = 0.0;
  double delta = 0.0;  // margin statistic before the threshold is applied
  bool pref_correct = false;
  std::vector<double> d_plus;
  std::vector<double> d_minus;
};

// Localized preference loss. Masked, length-normalized margin plus an anchor
// on the unmasked preferred positions:
//   delta = beta/np * sum(mask_p * tp) - beta/nm * sum(mask_m * tm)
//   loss  = -log sigmoid(delta - gamma) - alpha * sum((1 - mask_p) * tp)
PairTerms lpo_pair(std::span<const double> tp, std::span<const double> tm,
                   std::span<const double> mask_plus,
                   std::span<const double> mask_minus, double norm_plus,
                   double norm_minus, const PreferenceHyper& hyper);

// Reference-free margin over full-sequence mean log-probabilities.
PairTerms simpo_pair(std::span<const double> tp, std::span<const double> tm,
                     const SimpoHyper& hyper);

// Margin against a frozen reference model; ref sums enter as constants.
PairTerms dpo_pair(std::span<const double> tp, std::span<const double> tm,
                   double ref_plus_sum, double ref_minus_sum, double beta);

// Token-wise dual objective: likelihood on masked secure tokens, explicit
// unlikelihood on masked vulnerable tokens.
PairTerms safecoder_pair(std::span<const double> tp, std::span<const double> tm,
                         std::span<const double> mask_plus,
                         std::span<const double> mask_minus);

// Plain negative log-likelihood over every scored position.
PairTerms sft_terms(std::span<const double> tp);

// ---------------------------------------------------------------------------
// Batch objectives coupling the pair terms to the policy model. Each returns
// the mean loss over the instances it used; when `grad` is non-null the
// parameter gradient of that mean is accumulated into it (the buffer must be
// param_count() long). Losses that depend on the masks skip degenerate and
// all-zero-mask instances; a batch with nothing usable raises a validation
// error.
struct BatchReport {
  double loss = 0.0;
  double delta_mean = 0.0;  // mean margin statistic over used pairs
  double pref_acc = 0.0;    // fraction of used pairs with a positive margin
  std::size_t used = 0;
  std::size_t skipped = 0;
};

BatchReport batch_sft(const policy::PolicyModel& model,
                      std::span<const EncodedInstance> batch,
                      std::vector<double>* grad);

BatchReport batch_lpo(const policy::PolicyModel& model,
                      std::span<const EncodedInstance> batch,
                      const PreferenceHyper& hyper, std::vector<double>* grad);

BatchReport batch_simpo(const policy::PolicyModel& model,
                        std::span<const EncodedInstance> batch,
                        const SimpoHyper& hyper, std::vector<double>* grad);

BatchReport batch_dpo(const policy::PolicyModel& model,
                      const policy::PolicyModel& reference,
                      std::span<const EncodedInstance> batch, double beta,
                      std::vector<double>* grad);

BatchReport batch_safecoder(const policy::PolicyModel& model,
                            std::span<const EncodedInstance> batch,
                            std::vector<double>* grad);

}  // namespace disco::losses
