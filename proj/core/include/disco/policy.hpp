#pragma once

#include "disco/jsonl.hpp"
#include "disco/tokens.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace disco::policy {

// A deliberately small byte-level autoregressive transformer: pre-norm causal
// self-attention blocks, GELU MLPs, untied zero-initialized output head, all
// in 64-bit floats. The zero head makes the initial next-token distribution
// exactly uniform.
struct ModelConfig {
  int vocab = 256;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int context = 512;

  bool operator==(const ModelConfig&) const = default;
  int head_dim() const { return d_model / n_heads; }
  int d_ff() const { return 4 * d_model; }
};

struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;  // into the flat parameter vector
};

// Per-position log-probabilities of the realized tokens over the reasoning
// and code regions (teacher-forced). Entry k scores the token at absolute
// position prompt_len + k given everything before it.
struct LogProbTrace {
  std::vector<double> logp;
  std::size_t prompt_len = 0;
  std::size_t r_len = 0;
  std::size_t y_len = 0;

  double sum() const;
  double sum_reasoning() const;
  double sum_code() const;
};

// Forward-pass caches kept for the backward pass. d_logits is filled by
// PolicyModel::backward with the loss gradient at every scored position's
// logits row, which makes gradient-locality properties directly inspectable.
struct LayerCache {
  std::vector<double> input;     // residual stream entering the block (T x d)
  std::vector<double> n1;        // rmsnorm(input)
  std::vector<double> rms1_inv;  // T
  std::vector<double> q, k, v;   // T x d
  std::vector<double> att;       // n_heads x T x T (causal rows)
  std::vector<double> att_out;   // T x d, heads concatenated
  std::vector<double> mid;       // residual after attention
  std::vector<double> n2;        // rmsnorm(mid)
  std::vector<double> rms2_inv;  // T
  std::vector<double> f_pre;     // T x d_ff
  std::vector<double> f_tanh;    // cached tanh() inside gelu
  std::vector<double> f_act;     // T x d_ff
};

struct Evaluation {
  TokenSeq seq;  // prompt ++ reasoning ++ code
  std::size_t prompt_len = 0;
  std::size_t first_logit_row = 0;  // rows carrying scored positions
  std::size_t last_logit_row = 0;   // inclusive
  std::vector<LayerCache> layers;
  std::vector<double> embedded;   // T x d
  std::vector<double> final_res;  // T x d
  std::vector<double> final_n;    // T x d
  std::vector<double> rmsf_inv;   // T
  std::vector<double> logits;     // T x V, rows only in the scored range
  std::vector<double> probs;      // T x V, rows only in the scored range
  LogProbTrace trace;
  std::vector<double> d_logits;  // T x V after backward()
};

class PolicyModel {
 public:
  static PolicyModel init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<TensorSpec>& tensors() const { return specs_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;

  // Teacher-forced forward pass over prompt ++ reasoning ++ code.
  Evaluation evaluate(const TokenSeq& prompt, const TokenSeq& reasoning,
                      const TokenSeq& code) const;

  // Accumulates d(loss)/d(params) into grad (same length as params) given
  // d(loss)/d(trace entry); also stores per-row logits gradients in eval.
  void backward(Evaluation& eval, const std::vector<double>& d_trace,
                std::vector<double>& grad) const;

  // Ancestral sampling after the prompt; stops at end-of-sequence or
  // max_new_tokens or the context limit. temperature must be positive; as it
  // approaches zero sampling becomes greedy argmax.
  TokenSeq sample(const TokenSeq& prompt, double temperature, int max_new_tokens,
                  std::uint64_t seed) const;

  // Logits for the token following the given context (for tests/inspection).
  std::vector<double> next_token_logits(const TokenSeq& context) const;

  // One incremental decode pass over the whole sequence; entry t holds the
  // logits produced after consuming seq[0..t]. This is the generation path
  // (single-row forward with a key/value cache), exposed so it can be checked
  // against the teacher-forced pass position by position.
  std::vector<std::vector<double>> incremental_logits(const TokenSeq& seq) const;

  void save(const std::filesystem::path& path) const;
  static PolicyModel load(const std::filesystem::path& path);

  // An empty model (no parameters); fill it via init() or a checkpoint.
  PolicyModel() = default;

 private:
  ModelConfig config_;
  std::vector<double> params_;
  std::vector<TensorSpec> specs_;
};

// Generic versioned checkpoint container: a JSON header (model shape plus
// free-form metadata) followed by named little-endian float64 blobs.
struct CheckpointData {
  ModelConfig config;
  Json meta;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;
};

void save_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint_file(const std::filesystem::path& path);

PolicyModel model_from_checkpoint(const CheckpointData& data);
CheckpointData checkpoint_from_model(const PolicyModel& model, Json meta = Json::object());

// Central-difference gradient check. loss(model, grad_out) must return the
// loss and, when grad_out is non-null, accumulate analytic gradients into it.
// Returns the maximum relative error over >= min_probes randomly chosen
// parameters.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

GradCheckResult grad_check(
    const std::function<double(PolicyModel&, std::vector<double>*)>& loss,
    PolicyModel& model, double epsilon, std::size_t min_probes, std::uint64_t seed);

}  // namespace disco::policy
