#include "disco/train.hpp"

#include "disco/errors.hpp"
#include "disco/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace disco::train {

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::sft: return "sft";
    case Stage::lpo: return "lpo";
    case Stage::simpo: return "simpo";
    case Stage::dpo: return "dpo";
    case Stage::safecoder: return "safecoder";
  }
  throw Error(ErrorKind::internal, "unknown stage");
}

Stage stage_from_string(const std::string& name) {
  if (name == "sft") return Stage::sft;
  if (name == "lpo") return Stage::lpo;
  if (name == "simpo") return Stage::simpo;
  if (name == "dpo") return Stage::dpo;
  if (name == "safecoder") return Stage::safecoder;
  throw Error(ErrorKind::validation,
              fmt::format("unknown training stage '{}' "
                          "(expected sft, lpo, simpo, dpo, or safecoder)",
                          name));
}

std::string sft_target_name(SftTarget target) {
  switch (target) {
    case SftTarget::plus: return "plus";
    case SftTarget::minus: return "minus";
    case SftTarget::minus_bare: return "minus-bare";
  }
  throw Error(ErrorKind::internal, "unknown sft target");
}

SftTarget sft_target_from_string(const std::string& name) {
  if (name == "plus") return SftTarget::plus;
  if (name == "minus") return SftTarget::minus;
  if (name == "minus-bare") return SftTarget::minus_bare;
  throw Error(ErrorKind::validation,
              fmt::format("unknown sft target '{}' "
                          "(expected plus, minus, or minus-bare)",
                          name));
}

TrainState init_state(const TrainConfig& config) {
  TrainState state;
  state.model = policy::PolicyModel::init(config.model, config.seed);
  state.velocity.assign(state.model.param_count(), 0.0);
  return state;
}

MetricsLog::MetricsLog(const std::filesystem::path& path) {
  auto out = std::make_shared<std::ofstream>(path, std::ios::trunc);
  if (!*out) {
    throw Error(ErrorKind::io, fmt::format("cannot open metrics log '{}'", path.string()));
  }
  out_ = std::move(out);
}

void MetricsLog::write(const Json& event) {
  if (!out_) return;
  *out_ << dump_json(event) << '\n';
  out_->flush();
}

EncodedDataset encode_dataset(std::span<const corpus::PreferenceInstance> instances,
                              Stage stage, SftTarget target, int context) {
  EncodedDataset dataset;
  dataset.instances.reserve(instances.size());
  for (const corpus::PreferenceInstance& inst : instances) {
    try {
      if (stage == Stage::sft) {
        switch (target) {
          case SftTarget::plus:
            dataset.instances.push_back(
                losses::encode_parts(inst.x, inst.reasoning, inst.y_plus, context, inst.id));
            break;
          case SftTarget::minus:
            dataset.instances.push_back(
                losses::encode_parts(inst.x, inst.reasoning, inst.y_minus, context, inst.id));
            break;
          case SftTarget::minus_bare:
            dataset.instances.push_back(
                losses::encode_parts(inst.x, "", inst.y_minus, context, inst.id));
            break;
        }
      } else {
        dataset.instances.push_back(losses::encode_instance(inst, context));
      }
    } catch (const Error& err) {
      if (err.kind() == ErrorKind::capacity) {
        ++dataset.skipped_too_long;
        continue;
      }
      throw;
    }
  }
  return dataset;
}

namespace {

bool usable_for(Stage stage, const losses::EncodedInstance& inst) {
  switch (stage) {
    case Stage::sft:
      return true;
    case Stage::lpo:
    case Stage::safecoder:
      return inst.has_pair && !inst.degenerate && !inst.mask_all_zero();
    case Stage::simpo:
    case Stage::dpo:
      return inst.has_pair;
  }
  return false;
}

std::vector<losses::EncodedInstance> filter_usable(
    Stage stage, std::span<const losses::EncodedInstance> instances) {
  std::vector<losses::EncodedInstance> out;
  out.reserve(instances.size());
  for (const losses::EncodedInstance& inst : instances) {
    if (usable_for(stage, inst)) out.push_back(inst);
  }
  return out;
}

double l2_norm(const std::vector<double>& values) {
  double sum_sq = 0.0;
  for (double v : values) sum_sq += v * v;
  return std::sqrt(sum_sq);
}

struct BatchRunner {
  const TrainConfig& config;
  const policy::PolicyModel* dpo_reference = nullptr;

  losses::BatchReport operator()(const policy::PolicyModel& model,
                                 std::span<const losses::EncodedInstance> batch,
                                 std::vector<double>* grad) const {
    switch (config.stage) {
      case Stage::sft:
        return losses::batch_sft(model, batch, grad);
      case Stage::lpo:
        return losses::batch_lpo(model, batch, config.lpo, grad);
      case Stage::simpo:
        return losses::batch_simpo(model, batch, config.simpo, grad);
      case Stage::dpo:
        return losses::batch_dpo(model, *dpo_reference, batch, config.dpo_beta, grad);
      case Stage::safecoder:
        return losses::batch_safecoder(model, batch, grad);
    }
    throw Error(ErrorKind::internal, "unknown stage");
  }
};

// Loss-only pass over a filtered dataset, weighted by the instances each
// chunk actually used.
std::optional<double> evaluate_split(const BatchRunner& run,
                                     const policy::PolicyModel& model,
                                     std::span<const losses::EncodedInstance> data,
                                     int batch_size) {
  if (data.empty()) return std::nullopt;
  double loss_sum = 0.0;
  std::size_t used = 0;
  for (std::size_t start = 0; start < data.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(static_cast<std::size_t>(batch_size), data.size() - start);
    const losses::BatchReport report =
        run(model, data.subspan(start, count), nullptr);
    loss_sum += report.loss * static_cast<double>(report.used);
    used += report.used;
  }
  return loss_sum / static_cast<double>(used);
}

}  // namespace

TrainSummary train_stage(TrainState& state, const TrainDataset& data,
                         const TrainConfig& config, MetricsLog& log) {
  if (config.batch_size < 1) {
    throw Error(ErrorKind::validation, "batch_size must be >= 1");
  }
  if (config.epochs < 0) {
    throw Error(ErrorKind::validation, "epochs must be >= 0");
  }
  if (!(config.lr >= 0.0) || !(config.momentum >= 0.0) || config.momentum >= 1.0) {
    throw Error(ErrorKind::validation, "lr must be >= 0 and momentum in [0, 1)");
  }
  const std::string name = stage_name(config.stage);
  if (config.stage != Stage::sft && !config.allow_no_sft &&
      std::find(state.stage_history.begin(), state.stage_history.end(), "sft") ==
          state.stage_history.end()) {
    throw Error(ErrorKind::validation,
                fmt::format("stage '{}' expects a completed sft stage first "
                            "(use allow_no_sft to override)",
                            name));
  }
  if (state.velocity.size() != state.model.param_count()) {
    throw Error(ErrorKind::internal, "velocity/parameter size mismatch");
  }

  const bool continuing =
      !state.stage_history.empty() && state.stage_history.back() == name;
  if (!continuing) {
    std::fill(state.velocity.begin(), state.velocity.end(), 0.0);
    state.stage_history.push_back(name);
    if (config.stage == Stage::dpo) {
      state.dpo_ref_params = state.model.params();
    } else {
      state.dpo_ref_params.clear();
    }
  } else if (config.stage == Stage::dpo &&
             state.dpo_ref_params.size() != state.model.param_count()) {
    throw Error(ErrorKind::validation,
                "resuming a dpo stage but the saved reference parameters are missing");
  }

  std::vector<losses::EncodedInstance> train_set =
      filter_usable(config.stage, data.train);
  std::vector<losses::EncodedInstance> val_set =
      filter_usable(config.stage, data.validation);
  if (train_set.empty()) {
    throw Error(ErrorKind::validation,
                fmt::format("stage '{}': no usable training instances "
                            "(of {} provided)",
                            name, data.train.size()));
  }

  policy::PolicyModel reference;
  BatchRunner run{config, nullptr};
  if (config.stage == Stage::dpo) {
    reference = policy::PolicyModel::init(config.model, 0);
    if (reference.param_count() != state.dpo_ref_params.size()) {
      throw Error(ErrorKind::validation,
                  "dpo reference parameters do not match the configured model");
    }
    reference.params() = state.dpo_ref_params;
    run.dpo_reference = &reference;
  }

  TrainSummary summary;
  summary.used_instances = train_set.size();
  summary.skipped_instances = data.train.size() - train_set.size();
  log.write({{"event", "stage_start"},
             {"stage", name},
             {"train_instances", train_set.size()},
             {"train_skipped", summary.skipped_instances},
             {"val_instances", val_set.size()},
             {"epochs", config.epochs},
             {"lr", config.lr},
             {"batch_size", config.batch_size}});

  std::vector<double> grad(state.model.param_count(), 0.0);
  std::vector<std::size_t> order(train_set.size());
  std::vector<losses::EncodedInstance> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::uint64_t global_epoch = static_cast<std::uint64_t>(state.epochs_done);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(derive_seed(config.seed, global_epoch));
    shuffler.shuffle(order);

    double loss_weighted = 0.0;
    double delta_weighted = 0.0;
    double pref_weighted = 0.0;
    double grad_norm_sum = 0.0;
    std::size_t used_total = 0;
    std::size_t batches = 0;
    std::size_t clipped = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count = std::min<std::size_t>(
          static_cast<std::size_t>(config.batch_size), order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < count; ++i) {
        batch.push_back(train_set[order[start + i]]);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      const losses::BatchReport report = run(state.model, batch, &grad);
      double norm = l2_norm(grad);
      if (!std::isfinite(report.loss) || !std::isfinite(norm) ||
          std::abs(report.loss) > 1e9) {
        throw Error(ErrorKind::divergence,
                    fmt::format("stage '{}' diverged at epoch {} batch {}: "
                                "loss={:.6g} grad_norm={:.6g} (try a smaller lr)",
                                name, global_epoch, batches, report.loss, norm));
      }
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        const double scale = config.clip_norm / norm;
        for (double& g : grad) g *= scale;
        ++clipped;
      }
      for (std::size_t i = 0; i < grad.size(); ++i) {
        state.velocity[i] = config.momentum * state.velocity[i] + grad[i];
        state.model.params()[i] -= config.lr * state.velocity[i];
      }

      loss_weighted += report.loss * static_cast<double>(report.used);
      delta_weighted += report.delta_mean * static_cast<double>(report.used);
      pref_weighted += report.pref_acc * static_cast<double>(report.used);
      used_total += report.used;
      grad_norm_sum += norm;
      ++batches;
      if (config.log_every > 0 &&
          batches % static_cast<std::size_t>(config.log_every) == 0) {
        log.write({{"event", "batch"},
                   {"stage", name},
                   {"epoch", global_epoch},
                   {"batch", batches - 1},
                   {"loss", report.loss},
                   {"grad_norm", norm}});
      }
    }

    summary.final_train_loss = loss_weighted / static_cast<double>(used_total);
    summary.final_delta_mean = delta_weighted / static_cast<double>(used_total);
    summary.final_pref_acc = pref_weighted / static_cast<double>(used_total);
    summary.final_val_loss =
        evaluate_split(run, state.model, val_set, config.batch_size);
    summary.epochs_run = epoch + 1;
    state.epochs_done += 1;

    Json event{{"event", "epoch"},
               {"stage", name},
               {"epoch", global_epoch},
               {"train_loss", summary.final_train_loss},
               {"delta_mean", summary.final_delta_mean},
               {"pref_acc", summary.final_pref_acc},
               {"grad_norm_mean", grad_norm_sum / static_cast<double>(batches)},
               {"batches", batches},
               {"clipped", clipped}};
    event["val_loss"] =
        summary.final_val_loss ? Json(*summary.final_val_loss) : Json(nullptr);
    log.write(event);
  }

  Json end_event{{"event", "stage_end"},
                 {"stage", name},
                 {"epochs_run", summary.epochs_run},
                 {"train_loss", summary.final_train_loss}};
  end_event["val_loss"] =
      summary.final_val_loss ? Json(*summary.final_val_loss) : Json(nullptr);
  log.write(end_event);
  return summary;
}

void save_state(const std::filesystem::path& path, const TrainState& state) {
  Json history = Json::array();
  for (const std::string& stage : state.stage_history) history.push_back(stage);
  policy::CheckpointData data;
  data.config = state.model.config();
  data.meta = Json{{"kind", "train-state"},
                   {"epochs_done", state.epochs_done},
                   {"stage_history", history}};
  data.arrays.emplace_back("params", state.model.params());
  data.arrays.emplace_back("velocity", state.velocity);
  if (!state.dpo_ref_params.empty()) {
    data.arrays.emplace_back("dpo_ref", state.dpo_ref_params);
  }
  save_checkpoint_file(path, data);
}

TrainState load_state(const std::filesystem::path& path) {
  const policy::CheckpointData data = policy::load_checkpoint_file(path);
  TrainState state;
  state.model = policy::model_from_checkpoint(data);
  state.velocity.assign(state.model.param_count(), 0.0);
  for (const auto& [name, values] : data.arrays) {
    if (name == "velocity") {
      if (values.size() != state.model.param_count()) {
        throw Error(ErrorKind::parse, "checkpoint velocity size mismatch");
      }
      state.velocity = values;
    } else if (name == "dpo_ref") {
      if (values.size() != state.model.param_count()) {
        throw Error(ErrorKind::parse, "checkpoint reference size mismatch");
      }
      state.dpo_ref_params = values;
    }
  }
  state.epochs_done = data.meta.value("epochs_done", std::int64_t{0});
  for (const Json& stage : data.meta.value("stage_history", Json::array())) {
    state.stage_history.push_back(stage.get<std::string>());
  }
  return state;
}

}  // namespace disco::train
