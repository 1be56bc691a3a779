#pragma once

#include "disco/corpus.hpp"
#include "disco/jsonl.hpp"
#include "disco/losses.hpp"
#include "disco/policy.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace disco::train {

enum class Stage { sft, lpo, simpo, dpo, safecoder };

std::string stage_name(Stage stage);
Stage stage_from_string(const std::string& name);

// Which side of the preference pair SFT memorizes.
//   plus:       (x, reasoning, y+)   -- the aligned target
//   minus:      (x, reasoning, y-)
//   minus_bare: (x, "", y-)          -- no security thought; a "base" model
enum class SftTarget { plus, minus, minus_bare };

std::string sft_target_name(SftTarget target);
SftTarget sft_target_from_string(const std::string& name);

struct TrainConfig {
  Stage stage = Stage::sft;
  policy::ModelConfig model;
  double lr = 0.05;
  int batch_size = 8;
  int epochs = 1;
  std::uint64_t seed = 1;
  double momentum = 0.9;
  double clip_norm = 1.0;
  losses::PreferenceHyper lpo;
  losses::SimpoHyper simpo;
  double dpo_beta = 0.1;
  SftTarget sft_target = SftTarget::plus;
  bool allow_no_sft = false;  // let preference stages run without a prior sft stage
  int log_every = 0;          // batch-level log cadence; 0 logs epochs only
};

// Model plus optimizer state. `stage_history` records the stage sequence this
// model went through; the last entry decides whether a new train_stage call
// continues the stage (momentum kept) or enters a new one (momentum reset).
struct TrainState {
  policy::PolicyModel model;
  std::vector<double> velocity;
  std::vector<double> dpo_ref_params;  // frozen reference; only during a dpo stage
  std::int64_t epochs_done = 0;        // across every stage; keys the shuffle
  std::vector<std::string> stage_history;
};

TrainState init_state(const TrainConfig& config);

void save_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_state(const std::filesystem::path& path);

// Line-per-event JSONL log. Events carry no timestamps so that replayed runs
// are byte-identical. A default-constructed log discards everything.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& path);

  void write(const Json& event);
  bool enabled() const { return static_cast<bool>(out_); }

 private:
  std::shared_ptr<std::ofstream> out_;
};

struct EncodedDataset {
  std::vector<losses::EncodedInstance> instances;
  std::size_t skipped_too_long = 0;
};

// Tokenizes a corpus for a given stage, dropping instances that cannot fit in
// the model context. SFT uses `target` to pick the memorized side; the
// preference stages always encode the full pair.
EncodedDataset encode_dataset(std::span<const corpus::PreferenceInstance> instances,
                              Stage stage, SftTarget target, int context);

struct TrainDataset {
  std::vector<losses::EncodedInstance> train;
  std::vector<losses::EncodedInstance> validation;  // may be empty
};

struct TrainSummary {
  int epochs_run = 0;
  double final_train_loss = 0.0;
  std::optional<double> final_val_loss;
  double final_delta_mean = 0.0;
  double final_pref_acc = 0.0;
  std::size_t used_instances = 0;
  std::size_t skipped_instances = 0;
};

// Runs `config.epochs` epochs of the configured stage on a single thread.
// Shuffling is keyed by derive_seed(config.seed, global epoch index), so a
// save/load between epochs resumes bit-exactly. Throws a divergence error if
// the loss or gradient stops being finite.
TrainSummary train_stage(TrainState& state, const TrainDataset& data,
                         const TrainConfig& config, MetricsLog& log);

}  // namespace disco::train
