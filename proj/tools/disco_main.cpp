#include "disco/analyze.hpp"
#include "disco/config.hpp"
#include "disco/corpus.hpp"
#include "disco/distill.hpp"
#include "disco/errors.hpp"
#include "disco/jsonl.hpp"
#include "disco/knowledge.hpp"
#include "disco/llm_client.hpp"
#include "disco/manifest.hpp"
#include "disco/metrics.hpp"
#include "disco/policy.hpp"
#include "disco/refine.hpp"
#include "disco/report.hpp"
#include "disco/rng.hpp"
#include "disco/tokenmask.hpp"
#include "disco/tokens.hpp"
#include "disco/train.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace {

using disco::Error;
using disco::ErrorKind;
using disco::Json;

// Shared bookkeeping for one executed subcommand: what ran, what it read and
// wrote, and where the provenance sidecar should go.
struct RunContext {
  std::string command;
  std::vector<std::string> argv;
  Json config = Json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string manifest_path;  // empty: derive from the first output
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void in(const std::string& path) { inputs.push_back(path); }
  void out(const std::string& path) { outputs.push_back(path); }

  void finish() const {
    std::string target = manifest_path;
    if (target.empty()) {
      if (outputs.empty()) return;  // nothing written, nothing to describe
      target = outputs.front() + ".manifest.json";
    }
    disco::manifest::RunManifest manifest;
    manifest.command = command;
    manifest.argv = argv;
    manifest.config = config;
    manifest.inputs = inputs;
    manifest.outputs = outputs;
    manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    manifest.finished_utc = disco::llm::utc_timestamp_now();
    disco::manifest::write_manifest(target, manifest);
  }
};

// ---------------------------------------------------------------------------
// Client selection shared by `distill run` and `refine run`.
struct ClientArgs {
  std::string replay_path;
  bool live = false;
  std::string model_label;
  std::string record_path;

  void attach(CLI::App* cmd, const char* default_label) {
    model_label = default_label;
    cmd->add_option("--replay", replay_path,
                    "Replay responses from a recorded cassette (JSONL)");
    cmd->add_flag("--live", live,
                  "Call the completion service at DISCO_LLM_ENDPOINT");
    cmd->add_option("--model", model_label, "Model label recorded in transcripts");
    cmd->add_option("--record", record_path,
                    "Write the request/response transcript to this JSONL file");
  }

  std::unique_ptr<disco::llm::TextGenClient> make() const {
    if (!replay_path.empty() && live) {
      throw Error(ErrorKind::validation, "--replay and --live are mutually exclusive");
    }
    if (!replay_path.empty()) {
      return std::make_unique<disco::llm::ReplayClient>(replay_path);
    }
    if (live) {
      auto options = disco::llm::LiveClient::options_from_env();
      options.model_label = model_label;
      return std::make_unique<disco::llm::LiveClient>(std::move(options));
    }
    throw Error(ErrorKind::validation,
                "choose a completion source: --replay <cassette> or --live");
  }
};

std::vector<disco::analyze::ToyRule> load_rules_channel(
    const std::vector<disco::analyze::ToyRule>& rules, const std::string& channel) {
  std::vector<disco::analyze::ToyRule> out;
  for (const auto& rule : rules) {
    if (rule.channel == channel) out.push_back(rule);
  }
  return out;
}

std::string prompt_text_for(const std::string& instruction) {
  return disco::make_regions(instruction, "", "").prompt;
}

// Loads either a bare model checkpoint or a full training state.
disco::policy::PolicyModel load_model_file(const std::string& path) {
  return disco::train::load_state(path).model;
}

std::vector<disco::metrics::GenerationInput> load_generation_inputs(
    const std::string& path) {
  std::vector<disco::metrics::GenerationInput> generations;
  std::size_t line_no = 0;
  for (const Json& row : disco::read_jsonl(path)) {
    ++line_no;
    disco::metrics::GenerationInput input;
    input.id = disco::require_string(row, "id", path, line_no);
    input.text = disco::require_string(row, "text", path, line_no);
    generations.push_back(std::move(input));
  }
  return generations;
}

void write_or_print(const std::string& output, const Json& doc) {
  if (output.empty()) {
    fmt::print("{}\n", disco::dump_json(doc, 2));
  } else {
    disco::write_json_file(output, doc);
  }
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns normally on success; failures throw Error.

struct KbLoadArgs {
  std::string kb_path;
  std::string packages_path;
};

void run_kb_load(const KbLoadArgs& args, RunContext& ctx) {
  ctx.in(args.kb_path);
  const auto issues = disco::knowledge::load_knowledge_base(args.kb_path);
  std::set<std::string> cwes;
  for (const auto& issue : issues) cwes.insert(issue.cwe_id);
  fmt::print("knowledge base: {} issues across {} CWEs\n", issues.size(), cwes.size());
  if (!args.packages_path.empty()) {
    ctx.in(args.packages_path);
    const auto packages = disco::knowledge::load_packages(args.packages_path);
    fmt::print("packages: {}\n", packages.size());
  }
}

struct PromptsGenArgs {
  std::string kb_path;
  std::string packages_path;
  std::string template_path;
  std::size_t count = 0;
  std::uint64_t seed = 1;
  std::string output;
};

void run_prompts_gen(const PromptsGenArgs& args, RunContext& ctx) {
  ctx.in(args.kb_path);
  ctx.in(args.template_path);
  const auto issues = disco::knowledge::load_knowledge_base(args.kb_path);
  std::vector<disco::knowledge::PackageRecord> packages;
  if (!args.packages_path.empty()) {
    ctx.in(args.packages_path);
    packages = disco::knowledge::load_packages(args.packages_path);
  }
  const std::string template_text = disco::read_text_file(args.template_path);
  const auto prompts = disco::knowledge::generate_prompts(issues, packages,
                                                          template_text, args.count,
                                                          args.seed);
  std::vector<Json> rows;
  rows.reserve(prompts.size());
  for (const auto& prompt : prompts) {
    rows.push_back(disco::knowledge::prompt_to_json(prompt));
  }
  disco::write_jsonl(args.output, rows);
  ctx.out(args.output);
  ctx.config = Json{{"count", args.count}, {"seed", args.seed}};
  fmt::print("wrote {} prompts to {}\n", prompts.size(), args.output);
}

struct DistillRunArgs {
  std::string prompts_path;
  std::string output;
  std::string failures_path;
  double temperature = 0.7;
  int max_tokens = 2048;
  int workers = 1;
  ClientArgs client;
};

void run_distill(const DistillRunArgs& args, RunContext& ctx) {
  ctx.in(args.prompts_path);
  std::vector<disco::knowledge::PromptRecord> prompts;
  for (const Json& row : disco::read_jsonl(args.prompts_path)) {
    prompts.push_back(disco::knowledge::prompt_from_json(row));
  }
  auto client = args.client.make();
  if (!args.client.replay_path.empty()) ctx.in(args.client.replay_path);

  disco::distill::DistillOptions options;
  options.temperature = args.temperature;
  options.max_tokens = args.max_tokens;
  options.workers = args.workers;
  const auto outcome = disco::distill::run_distillation(prompts, *client, options);
  if (outcome.records.empty()) {
    throw Error(ErrorKind::validation,
                fmt::format("distillation produced no usable generations "
                            "({} prompts all failed)",
                            prompts.size()));
  }

  std::vector<Json> rows;
  for (const auto& record : outcome.records) {
    rows.push_back(disco::distill::generation_to_json(record));
  }
  disco::write_jsonl(args.output, rows);
  ctx.out(args.output);
  if (!args.failures_path.empty()) {
    std::vector<Json> failure_rows;
    for (const auto& failure : outcome.failures) {
      failure_rows.push_back(Json{{"id", failure.id}, {"error", failure.error}});
    }
    disco::write_jsonl(args.failures_path, failure_rows);
    ctx.out(args.failures_path);
  }
  if (!args.client.record_path.empty()) {
    client->save_transcript(args.client.record_path);
    ctx.out(args.client.record_path);
  }
  ctx.config = Json{{"temperature", args.temperature},
                    {"max_tokens", args.max_tokens},
                    {"workers", args.workers}};
  fmt::print("distilled {} generations ({} failures) -> {}\n", outcome.records.size(),
             outcome.failures.size(), args.output);
}

struct RefineRunArgs {
  std::string generations_path;
  std::string rules_path;
  std::string template_path;
  std::string output;
  int max_rounds = 1;
  double temperature = 0.0;
  int max_tokens = 2048;
  ClientArgs client;
};

void run_refine(const RefineRunArgs& args, RunContext& ctx) {
  ctx.in(args.generations_path);
  ctx.in(args.rules_path);
  ctx.in(args.template_path);
  std::vector<disco::distill::GenerationRecord> records;
  for (const Json& row : disco::read_jsonl(args.generations_path)) {
    records.push_back(disco::distill::generation_from_json(row));
  }
  const auto rules = disco::analyze::load_toy_rules(args.rules_path);
  const auto bandit_rules = load_rules_channel(rules, "bandit");
  const auto codeql_rules = load_rules_channel(rules, "codeql");
  const std::string template_text = disco::read_text_file(args.template_path);
  auto client = args.client.make();
  if (!args.client.replay_path.empty()) ctx.in(args.client.replay_path);

  disco::refine::RefineOptions options;
  options.max_rounds = args.max_rounds;
  options.temperature = args.temperature;
  options.max_tokens = args.max_tokens;
  const disco::refine::ChannelAnalyzer bandit =
      [&](const std::string& code, const std::string& label) {
        return disco::analyze::toy_analyze(code, label, bandit_rules);
      };
  const disco::refine::ChannelAnalyzer codeql =
      [&](const std::string& code, const std::string& label) {
        return disco::analyze::toy_analyze(code, label, codeql_rules);
      };

  std::size_t insecure_before = 0;
  std::size_t insecure_after = 0;
  std::size_t refined_count = 0;
  std::vector<Json> rows;
  rows.reserve(records.size());
  for (const auto& record : records) {
    const bool was_insecure =
        !disco::analyze::dedupe_findings(bandit(record.parsed.sec_code, record.id))
             .empty() ||
        !disco::analyze::dedupe_findings(codeql(record.parsed.sec_code, record.id))
             .empty();
    insecure_before += was_insecure ? 1 : 0;
    const auto refined = disco::refine::refine_loop(record, bandit, codeql,
                                                    template_text, *client, options);
    insecure_after += refined.still_insecure ? 1 : 0;
    refined_count += refined.refined ? 1 : 0;
    rows.push_back(disco::refine::refined_to_json(refined));
  }
  disco::write_jsonl(args.output, rows);
  ctx.out(args.output);
  if (!args.client.record_path.empty()) {
    client->save_transcript(args.client.record_path);
    ctx.out(args.client.record_path);
  }
  ctx.config = Json{{"max_rounds", args.max_rounds}, {"temperature", args.temperature}};
  fmt::print("refined {} of {} records; insecure {} -> {} ({:.1f}% -> {:.1f}%)\n",
             refined_count, records.size(), insecure_before, insecure_after,
             records.empty() ? 0.0
                             : 100.0 * static_cast<double>(insecure_before) /
                                   static_cast<double>(records.size()),
             records.empty() ? 0.0
                             : 100.0 * static_cast<double>(insecure_after) /
                                   static_cast<double>(records.size()));
}

struct CorpusBuildArgs {
  std::string refined_path;
  std::string template_path;
  std::string output;
  bool drop_insecure = false;
};

void run_corpus_build(const CorpusBuildArgs& args, RunContext& ctx) {
  ctx.in(args.refined_path);
  ctx.in(args.template_path);
  std::vector<disco::refine::RefinedRecord> records;
  for (const Json& row : disco::read_jsonl(args.refined_path)) {
    records.push_back(disco::refine::refined_from_json(row));
  }
  const std::string template_text = disco::read_text_file(args.template_path);
  const auto instances =
      disco::corpus::build_corpus(records, template_text, args.drop_insecure);
  disco::corpus::save_instances(args.output, instances);
  ctx.out(args.output);
  ctx.config = Json{{"drop_insecure", args.drop_insecure}};
  fmt::print("built {} preference instances from {} records -> {}\n", instances.size(),
             records.size(), args.output);
}

struct CorpusSplitArgs {
  std::string corpus_path;
  std::string output_dir;
  std::vector<double> proportions;
  std::uint64_t seed = 1;
};

void run_corpus_split(const CorpusSplitArgs& args, RunContext& ctx) {
  ctx.in(args.corpus_path);
  const auto instances = disco::corpus::load_instances(args.corpus_path);
  std::array<double, 3> proportions = disco::corpus::reference_split_proportions();
  if (!args.proportions.empty()) {
    if (args.proportions.size() != 3) {
      throw Error(ErrorKind::validation,
                  "--proportions needs exactly three values (train,validation,test)");
    }
    std::copy(args.proportions.begin(), args.proportions.end(), proportions.begin());
  }
  const auto split =
      disco::corpus::split_indices(instances.size(), proportions, args.seed);

  std::filesystem::create_directories(args.output_dir);
  const auto save_subset = [&](const std::vector<std::size_t>& indices,
                               const std::string& name) {
    std::vector<disco::corpus::PreferenceInstance> subset;
    subset.reserve(indices.size());
    for (std::size_t index : indices) subset.push_back(instances[index]);
    const std::string path =
        (std::filesystem::path(args.output_dir) / (name + ".jsonl")).string();
    disco::corpus::save_instances(path, subset);
    ctx.out(path);
    return subset.size();
  };
  const std::size_t n_train = save_subset(split.train, "train");
  const std::size_t n_val = save_subset(split.validation, "validation");
  const std::size_t n_test = save_subset(split.test, "test");
  ctx.config = Json{{"proportions", proportions}, {"seed", args.seed}};
  fmt::print("split {} instances -> {} train / {} validation / {} test in {}\n",
             instances.size(), n_train, n_val, n_test, args.output_dir);
}

struct CorpusStatsArgs {
  std::string corpus_path;
  std::string output;
};

void run_corpus_stats(const CorpusStatsArgs& args, RunContext& ctx) {
  ctx.in(args.corpus_path);
  const auto instances = disco::corpus::load_instances(args.corpus_path);
  const auto stats = disco::corpus::dataset_stats(instances);
  const Json doc = disco::corpus::stats_to_json(stats);
  write_or_print(args.output, doc);
  if (!args.output.empty()) ctx.out(args.output);
}

struct CorpusOodArgs {
  std::string corpus_path;
  std::vector<std::string> cwes;
  std::string in_dist_output;
  std::string held_out_output;
};

void run_corpus_ood(const CorpusOodArgs& args, RunContext& ctx) {
  ctx.in(args.corpus_path);
  const auto instances = disco::corpus::load_instances(args.corpus_path);
  const std::set<std::string> held(args.cwes.begin(), args.cwes.end());
  const auto split = disco::corpus::ood_filter(instances, held);
  disco::corpus::save_instances(args.in_dist_output, split.in_distribution);
  ctx.out(args.in_dist_output);
  disco::corpus::save_instances(args.held_out_output, split.held_out);
  ctx.out(args.held_out_output);
  ctx.config = Json{{"held_out_cwes", args.cwes}};
  fmt::print("kept {} in-distribution, held out {} instances\n",
             split.in_distribution.size(), split.held_out.size());
}

struct MasksComputeArgs {
  std::string corpus_path;
  std::string output;
};

void run_masks_compute(const MasksComputeArgs& args, RunContext& ctx) {
  ctx.in(args.corpus_path);
  const auto instances = disco::corpus::load_instances(args.corpus_path);
  std::vector<Json> rows;
  rows.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto regions = disco::make_regions(inst.x, inst.reasoning, "");
    const auto masks = disco::tokenmask::compute_masks(
        disco::encode_bytes(regions.reasoning), disco::encode_bytes(inst.y_plus),
        disco::encode_bytes(inst.y_minus));
    rows.push_back(Json{{"id", inst.id},
                        {"r_len", masks.r_len},
                        {"y_plus_len", masks.y_plus_len},
                        {"y_minus_len", masks.y_minus_len},
                        {"m_plus", masks.m_plus},
                        {"m_minus", masks.m_minus},
                        {"pct_plus", masks.pct_plus},
                        {"pct_minus", masks.pct_minus},
                        {"degenerate", masks.degenerate}});
  }
  disco::write_jsonl(args.output, rows);
  ctx.out(args.output);
  fmt::print("wrote masks for {} instances to {}\n", rows.size(), args.output);
}

struct TrainArgs {
  std::string config_path;
  std::string train_path;
  std::string val_path;
  std::string init_path;
  std::string output;
  std::string metrics_path;
  // CLI overrides; only set when the flag was passed.
  std::optional<std::string> stage;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> momentum;
  std::optional<double> clip_norm;
  std::optional<double> dpo_beta;
  std::optional<int> log_every;
  std::optional<std::string> sft_target;
  bool allow_no_sft = false;
};

void run_train(const TrainArgs& args, RunContext& ctx) {
  Json config_json = Json::object();
  if (!args.config_path.empty()) {
    ctx.in(args.config_path);
    config_json = disco::config::load_config_file(args.config_path);
  }
  Json overrides = Json::object();
  if (args.stage) overrides["stage"] = *args.stage;
  if (args.lr) overrides["lr"] = *args.lr;
  if (args.epochs) overrides["epochs"] = *args.epochs;
  if (args.batch_size) overrides["batch_size"] = *args.batch_size;
  if (args.seed) overrides["seed"] = *args.seed;
  if (args.momentum) overrides["momentum"] = *args.momentum;
  if (args.clip_norm) overrides["clip_norm"] = *args.clip_norm;
  if (args.dpo_beta) overrides["dpo_beta"] = *args.dpo_beta;
  if (args.log_every) overrides["log_every"] = *args.log_every;
  if (args.sft_target) overrides["sft_target"] = *args.sft_target;
  if (args.allow_no_sft) overrides["allow_no_sft"] = true;
  config_json = disco::config::merge_config(config_json, overrides);
  disco::train::TrainConfig config = disco::config::train_config_from_json(config_json);

  disco::train::TrainState state;
  if (!args.init_path.empty()) {
    ctx.in(args.init_path);
    state = disco::train::load_state(args.init_path);
    if (config_json.contains("model")) {
      const auto& loaded = state.model.config();
      if (loaded.vocab != config.model.vocab || loaded.d_model != config.model.d_model ||
          loaded.n_layers != config.model.n_layers ||
          loaded.n_heads != config.model.n_heads ||
          loaded.context != config.model.context) {
        throw Error(ErrorKind::validation,
                    "checkpoint model shape differs from the [model] config section");
      }
    }
    config.model = state.model.config();
  } else {
    state = disco::train::init_state(config);
  }

  ctx.in(args.train_path);
  const auto train_instances = disco::corpus::load_instances(args.train_path);
  disco::train::TrainDataset dataset;
  auto encoded = disco::train::encode_dataset(train_instances, config.stage,
                                              config.sft_target, config.model.context);
  dataset.train = std::move(encoded.instances);
  std::size_t dropped = encoded.skipped_too_long;
  if (!args.val_path.empty()) {
    ctx.in(args.val_path);
    const auto val_instances = disco::corpus::load_instances(args.val_path);
    auto encoded_val = disco::train::encode_dataset(val_instances, config.stage,
                                                    config.sft_target,
                                                    config.model.context);
    dataset.validation = std::move(encoded_val.instances);
    dropped += encoded_val.skipped_too_long;
  }
  if (dropped > 0) {
    fmt::print("note: {} instances were too long for the context and were dropped\n",
               dropped);
  }

  disco::train::MetricsLog log;
  if (!args.metrics_path.empty()) {
    log = disco::train::MetricsLog(args.metrics_path);
  }
  const auto summary = disco::train::train_stage(state, dataset, config, log);
  disco::train::save_state(args.output, state);
  ctx.out(args.output);
  if (!args.metrics_path.empty()) ctx.out(args.metrics_path);
  ctx.config = disco::config::train_config_to_json(config);

  if (summary.final_val_loss) {
    fmt::print("stage {} done: {} epochs, train loss {:.4f}, val loss {:.4f} -> {}\n",
               disco::train::stage_name(config.stage), summary.epochs_run,
               summary.final_train_loss, *summary.final_val_loss, args.output);
  } else {
    fmt::print("stage {} done: {} epochs, train loss {:.4f} -> {}\n",
               disco::train::stage_name(config.stage), summary.epochs_run,
               summary.final_train_loss, args.output);
  }
}

struct EvalSecurityArgs {
  std::string generations_path;
  std::string checkpoint_path;
  std::string prompts_path;
  std::string rules_path;
  int samples = 5;
  double temperature = 0.4;
  int max_new = 400;
  std::uint64_t seed = 1;
  std::string output;
  std::string details_path;
  std::string generations_out;
};

void run_eval_security(const EvalSecurityArgs& args, RunContext& ctx) {
  ctx.in(args.rules_path);
  const auto rules = disco::analyze::load_toy_rules(args.rules_path);
  const disco::metrics::AnalyzerFn analyzer =
      [&](const std::string& code, const std::string& label) {
        return disco::analyze::toy_analyze(code, label, rules);
      };

  std::vector<disco::metrics::GenerationInput> generations;
  if (!args.generations_path.empty()) {
    if (!args.checkpoint_path.empty()) {
      throw Error(ErrorKind::validation,
                  "--generations and --checkpoint are mutually exclusive");
    }
    ctx.in(args.generations_path);
    generations = load_generation_inputs(args.generations_path);
  } else {
    if (args.checkpoint_path.empty() || args.prompts_path.empty()) {
      throw Error(ErrorKind::validation,
                  "sampling mode needs --checkpoint and --prompts");
    }
    if (args.samples < 1) {
      throw Error(ErrorKind::validation, "--samples must be >= 1");
    }
    ctx.in(args.checkpoint_path);
    ctx.in(args.prompts_path);
    const auto model = load_model_file(args.checkpoint_path);
    const auto instances = disco::corpus::load_instances(args.prompts_path);
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto prompt_tokens =
          disco::encode_bytes(prompt_text_for(instances[i].x));
      for (int s = 0; s < args.samples; ++s) {
        const std::uint64_t sample_seed = disco::derive_seed(
            args.seed, i * static_cast<std::size_t>(args.samples) +
                           static_cast<std::size_t>(s));
        const auto tokens = model.sample(prompt_tokens, args.temperature, args.max_new,
                                         sample_seed);
        generations.push_back({fmt::format("{}#{}", instances[i].id, s),
                               disco::decode_bytes(tokens)});
      }
    }
  }

  const auto result = disco::metrics::security_eval(generations, analyzer);
  if (!args.generations_out.empty()) {
    std::vector<Json> rows;
    for (const auto& generation : generations) {
      rows.push_back(Json{{"id", generation.id}, {"text", generation.text}});
    }
    disco::write_jsonl(args.generations_out, rows);
    ctx.out(args.generations_out);
  }
  if (!args.details_path.empty()) {
    std::vector<Json> rows;
    for (const auto& detail : result.details) {
      rows.push_back(disco::metrics::detail_to_json(detail));
    }
    disco::write_jsonl(args.details_path, rows);
    ctx.out(args.details_path);
  }
  const Json doc = disco::metrics::summary_to_json(result.summary);
  write_or_print(args.output, doc);
  if (!args.output.empty()) ctx.out(args.output);
  ctx.config = Json{{"samples", args.samples},
                    {"temperature", args.temperature},
                    {"seed", args.seed}};
}

struct EvalUtilityArgs {
  std::string counts_path;
  std::string generations_path;
  std::string judge = "validity";
  std::vector<int> ks{1, 5};
  std::string output;
};

void run_eval_utility(const EvalUtilityArgs& args, RunContext& ctx) {
  std::vector<disco::metrics::ProblemResult> problems;
  if (!args.counts_path.empty()) {
    if (!args.generations_path.empty()) {
      throw Error(ErrorKind::validation,
                  "--counts and --generations are mutually exclusive");
    }
    ctx.in(args.counts_path);
    std::size_t line_no = 0;
    for (const Json& row : disco::read_jsonl(args.counts_path)) {
      ++line_no;
      disco::metrics::ProblemResult problem;
      problem.problem_id = disco::require_string(row, "problem", args.counts_path, line_no);
      if (!row.contains("n") || !row.contains("c") || !row["n"].is_number_integer() ||
          !row["c"].is_number_integer()) {
        throw Error(ErrorKind::parse,
                    fmt::format("{}:{}: expected integer fields 'n' and 'c'",
                                args.counts_path, line_no));
      }
      problem.n = row["n"].get<int>();
      problem.c = row["c"].get<int>();
      problems.push_back(std::move(problem));
    }
  } else if (!args.generations_path.empty()) {
    if (args.judge != "validity") {
      throw Error(ErrorKind::validation,
                  fmt::format("unknown judge '{}' (only 'validity' is built in)",
                              args.judge));
    }
    ctx.in(args.generations_path);
    std::vector<std::string> order;
    std::map<std::string, disco::metrics::ProblemResult> by_problem;
    std::size_t line_no = 0;
    for (const Json& row : disco::read_jsonl(args.generations_path)) {
      ++line_no;
      // Sampled generations carry "<instance>#<sample>" ids; group those by
      // instance when no explicit problem label is present.
      std::string problem = disco::optional_string(row, "problem", "");
      if (problem.empty()) {
        problem = disco::require_string(row, "id", args.generations_path, line_no);
        problem = problem.substr(0, problem.rfind('#'));
      }
      const std::string text =
          disco::require_string(row, "text", args.generations_path, line_no);
      auto [it, inserted] = by_problem.try_emplace(problem);
      if (inserted) {
        it->second.problem_id = problem;
        order.push_back(problem);
      }
      it->second.n += 1;
      it->second.c += disco::analyze::extract_code(text).valid ? 1 : 0;
    }
    for (const std::string& problem : order) problems.push_back(by_problem[problem]);
  } else {
    throw Error(ErrorKind::validation, "provide --counts or --generations");
  }

  Json doc = Json::array();
  for (int k : args.ks) {
    disco::metrics::UtilitySummary summary;
    summary.k = k;
    summary.mean_pass = disco::metrics::mean_pass_at_k(problems, k);
    summary.problems = problems;
    doc.push_back(disco::metrics::utility_to_json(summary));
  }
  write_or_print(args.output, doc);
  if (!args.output.empty()) ctx.out(args.output);
  ctx.config = Json{{"k", args.ks}, {"judge", args.judge}};
}

struct ReportArgs {
  std::vector<std::string> rows;  // label=security.json[,utility.json]
  std::string output;
  int top_cwes = 10;
};

void run_report(const ReportArgs& args, RunContext& ctx) {
  if (args.rows.empty()) {
    throw Error(ErrorKind::validation,
                "add at least one row: --add label=security.json[,utility.json]");
  }
  std::vector<disco::report::ReportRow> rows;
  for (const std::string& spec : args.rows) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::validation,
                  fmt::format("bad --add value '{}'; expected "
                              "label=security.json[,utility.json]",
                              spec));
    }
    disco::report::ReportRow row;
    row.label = spec.substr(0, eq);
    std::string paths = spec.substr(eq + 1);
    const std::size_t comma = paths.find(',');
    const std::string security_path = paths.substr(0, comma);
    if (!security_path.empty()) {
      ctx.in(security_path);
      row.security =
          disco::metrics::summary_from_json(disco::read_json_file(security_path));
    }
    if (comma != std::string::npos) {
      const std::string utility_path = paths.substr(comma + 1);
      ctx.in(utility_path);
      const Json doc = disco::read_json_file(utility_path);
      const Json list = doc.is_array() ? doc : Json::array({doc});
      for (const Json& entry : list) {
        const auto summary = disco::metrics::utility_from_json(entry);
        if (summary.k == 1) row.pass_at_1 = summary.mean_pass;
        if (summary.k == 5) row.pass_at_5 = summary.mean_pass;
      }
    }
    rows.push_back(std::move(row));
  }
  const std::string text = disco::report::render_report(rows, args.top_cwes);
  if (args.output.empty()) {
    fmt::print("{}", text);
  } else {
    disco::write_text_file(args.output, text);
    ctx.out(args.output);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure-code alignment toolkit: preference-data synthesis, "
               "localized masks, policy training, and security/utility evaluation"};
  app.require_subcommand(1);

  RunContext ctx;
  for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);

  // Every subcommand accepts --manifest; commands that write files default to
  // "<first output>.manifest.json".
  const auto add_manifest = [&](CLI::App* cmd) {
    cmd->add_option("--manifest", ctx.manifest_path,
                    "Where to write the run manifest (default: next to the "
                    "first output)");
  };

  std::function<void()> action;

  // kb load ---------------------------------------------------------------
  auto* kb = app.add_subcommand("kb", "Inspect curated security knowledge");
  auto kb_load_args = std::make_shared<KbLoadArgs>();
  {
    auto* cmd = kb->add_subcommand("load", "Validate a knowledge base");
    cmd->add_option("--kb", kb_load_args->kb_path, "Security-issue JSONL")->required();
    cmd->add_option("--packages", kb_load_args->packages_path, "Package JSONL");
    add_manifest(cmd);
    cmd->callback([&, kb_load_args] {
      ctx.command = "kb load";
      action = [&, kb_load_args] { run_kb_load(*kb_load_args, ctx); };
    });
  }

  // prompts gen ------------------------------------------------------------
  auto* prompts = app.add_subcommand("prompts", "Generation-prompt synthesis");
  auto prompts_args = std::make_shared<PromptsGenArgs>();
  {
    auto* cmd = prompts->add_subcommand("gen", "Render distillation prompts");
    cmd->add_option("--kb", prompts_args->kb_path, "Security-issue JSONL")->required();
    cmd->add_option("--packages", prompts_args->packages_path, "Package JSONL");
    cmd->add_option("--template", prompts_args->template_path,
                    "Generation prompt template")
        ->required();
    cmd->add_option("--count", prompts_args->count, "Total prompts to emit")
        ->required();
    cmd->add_option("--seed", prompts_args->seed, "Sampling seed");
    cmd->add_option("--output", prompts_args->output, "Prompt JSONL to write")
        ->required();
    add_manifest(cmd);
    cmd->callback([&, prompts_args] {
      ctx.command = "prompts gen";
      action = [&, prompts_args] { run_prompts_gen(*prompts_args, ctx); };
    });
  }

  // distill run ------------------------------------------------------------
  auto* distill = app.add_subcommand("distill", "Teacher distillation");
  auto distill_args = std::make_shared<DistillRunArgs>();
  {
    auto* cmd = distill->add_subcommand("run", "Collect VUL/SEC generations");
    cmd->add_option("--prompts", distill_args->prompts_path, "Prompt JSONL")
        ->required();
    cmd->add_option("--output", distill_args->output, "Generation JSONL to write")
        ->required();
    cmd->add_option("--failures", distill_args->failures_path,
                    "Where to write per-prompt failures");
    cmd->add_option("--temperature", distill_args->temperature, "Sampling temperature");
    cmd->add_option("--max-tokens", distill_args->max_tokens, "Completion budget");
    cmd->add_option("--workers", distill_args->workers, "Concurrent requests");
    distill_args->client.attach(cmd, "distiller");
    add_manifest(cmd);
    cmd->callback([&, distill_args] {
      ctx.command = "distill run";
      action = [&, distill_args] { run_distill(*distill_args, ctx); };
    });
  }

  // refine run -------------------------------------------------------------
  auto* refine = app.add_subcommand("refine", "Analyzer-guided refinement");
  auto refine_args = std::make_shared<RefineRunArgs>();
  {
    auto* cmd = refine->add_subcommand("run", "Repair still-insecure secure code");
    cmd->add_option("--generations", refine_args->generations_path, "Generation JSONL")
        ->required();
    cmd->add_option("--rules", refine_args->rules_path, "Analyzer rule JSONL")
        ->required();
    cmd->add_option("--template", refine_args->template_path,
                    "Refinement prompt template")
        ->required();
    cmd->add_option("--output", refine_args->output, "Refined JSONL to write")
        ->required();
    cmd->add_option("--max-rounds", refine_args->max_rounds, "Refinement rounds cap");
    cmd->add_option("--temperature", refine_args->temperature, "Sampling temperature");
    cmd->add_option("--max-tokens", refine_args->max_tokens, "Completion budget");
    refine_args->client.attach(cmd, "refiner");
    add_manifest(cmd);
    cmd->callback([&, refine_args] {
      ctx.command = "refine run";
      action = [&, refine_args] { run_refine(*refine_args, ctx); };
    });
  }

  // corpus ... -------------------------------------------------------------
  auto* corpus = app.add_subcommand("corpus", "Preference-corpus operations");
  auto build_args = std::make_shared<CorpusBuildArgs>();
  {
    auto* cmd = corpus->add_subcommand("build", "Refined records -> instances");
    cmd->add_option("--refined", build_args->refined_path, "Refined JSONL")->required();
    cmd->add_option("--template", build_args->template_path,
                    "Reasoning template file")
        ->required();
    cmd->add_option("--output", build_args->output, "Instance JSONL to write")
        ->required();
    cmd->add_flag("--drop-insecure", build_args->drop_insecure,
                  "Drop instances whose secure code still has findings");
    add_manifest(cmd);
    cmd->callback([&, build_args] {
      ctx.command = "corpus build";
      action = [&, build_args] { run_corpus_build(*build_args, ctx); };
    });
  }
  auto split_args = std::make_shared<CorpusSplitArgs>();
  {
    auto* cmd = corpus->add_subcommand("split", "Seeded train/validation/test split");
    cmd->add_option("--corpus", split_args->corpus_path, "Instance JSONL")->required();
    cmd->add_option("--output-dir", split_args->output_dir, "Directory for the splits")
        ->required();
    cmd->add_option("--proportions", split_args->proportions,
                    "Three fractions, e.g. 0.95 0.03 0.02 (default: the "
                    "published ratio)")
        ->expected(3);
    cmd->add_option("--seed", split_args->seed, "Shuffle seed");
    add_manifest(cmd);
    cmd->callback([&, split_args] {
      ctx.command = "corpus split";
      action = [&, split_args] { run_corpus_split(*split_args, ctx); };
    });
  }
  auto stats_args = std::make_shared<CorpusStatsArgs>();
  {
    auto* cmd = corpus->add_subcommand("stats", "Dataset statistics");
    cmd->add_option("--corpus", stats_args->corpus_path, "Instance JSONL")->required();
    cmd->add_option("--output", stats_args->output,
                    "Write JSON here instead of stdout");
    add_manifest(cmd);
    cmd->callback([&, stats_args] {
      ctx.command = "corpus stats";
      action = [&, stats_args] { run_corpus_stats(*stats_args, ctx); };
    });
  }
  auto ood_args = std::make_shared<CorpusOodArgs>();
  {
    auto* cmd = corpus->add_subcommand("ood-filter",
                                       "Hold out whole CWEs for OOD evaluation");
    cmd->add_option("--corpus", ood_args->corpus_path, "Instance JSONL")->required();
    cmd->add_option("--cwes", ood_args->cwes, "CWE ids to hold out")
        ->required()
        ->delimiter(',');
    cmd->add_option("--in-dist", ood_args->in_dist_output,
                    "In-distribution output JSONL")
        ->required();
    cmd->add_option("--held-out", ood_args->held_out_output, "Held-out output JSONL")
        ->required();
    add_manifest(cmd);
    cmd->callback([&, ood_args] {
      ctx.command = "corpus ood-filter";
      action = [&, ood_args] { run_corpus_ood(*ood_args, ctx); };
    });
  }

  // masks compute ----------------------------------------------------------
  auto* masks = app.add_subcommand("masks", "Security-localization masks");
  auto masks_args = std::make_shared<MasksComputeArgs>();
  {
    auto* cmd = masks->add_subcommand("compute", "Alignment masks per instance");
    cmd->add_option("--corpus", masks_args->corpus_path, "Instance JSONL")->required();
    cmd->add_option("--output", masks_args->output, "Mask JSONL to write")->required();
    add_manifest(cmd);
    cmd->callback([&, masks_args] {
      ctx.command = "masks compute";
      action = [&, masks_args] { run_masks_compute(*masks_args, ctx); };
    });
  }

  // train ------------------------------------------------------------------
  auto train_args = std::make_shared<TrainArgs>();
  {
    auto* cmd = app.add_subcommand("train", "Train the built-in policy model");
    cmd->add_option("--config", train_args->config_path,
                    "Config file (JSON or key=value sections)");
    cmd->add_option("--train", train_args->train_path, "Training instance JSONL")
        ->required();
    cmd->add_option("--val", train_args->val_path, "Validation instance JSONL");
    cmd->add_option("--init", train_args->init_path,
                    "Checkpoint to continue from (default: fresh init)");
    cmd->add_option("--output", train_args->output, "Checkpoint to write")->required();
    cmd->add_option("--metrics", train_args->metrics_path, "Metrics JSONL log");
    cmd->add_option("--stage", train_args->stage,
                    "sft | lpo | simpo | dpo | safecoder");
    cmd->add_option("--lr", train_args->lr, "Learning rate");
    cmd->add_option("--epochs", train_args->epochs, "Epochs to run");
    cmd->add_option("--batch-size", train_args->batch_size, "Instances per step");
    cmd->add_option("--seed", train_args->seed, "Init/shuffle seed");
    cmd->add_option("--momentum", train_args->momentum, "SGD momentum");
    cmd->add_option("--clip-norm", train_args->clip_norm,
                    "Global gradient-norm cap (0 disables)");
    cmd->add_option("--dpo-beta", train_args->dpo_beta, "DPO temperature");
    cmd->add_option("--log-every", train_args->log_every,
                    "Batch-level metric events every N batches");
    cmd->add_option("--sft-target", train_args->sft_target,
                    "plus | minus | minus-bare");
    cmd->add_flag("--allow-no-sft", train_args->allow_no_sft,
                  "Run a preference stage without a prior sft stage");
    add_manifest(cmd);
    cmd->callback([&, train_args] {
      ctx.command = "train";
      action = [&, train_args] { run_train(*train_args, ctx); };
    });
  }

  // eval ... ---------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Security and utility evaluation");
  auto sec_args = std::make_shared<EvalSecurityArgs>();
  {
    auto* cmd = eval->add_subcommand("security", "Insecurity metrics for generations");
    cmd->add_option("--generations", sec_args->generations_path,
                    "Pre-made generations JSONL ({id, text})");
    cmd->add_option("--checkpoint", sec_args->checkpoint_path,
                    "Sample from this checkpoint instead");
    cmd->add_option("--prompts", sec_args->prompts_path,
                    "Instance JSONL whose instructions to sample from");
    cmd->add_option("--rules", sec_args->rules_path, "Analyzer rule JSONL")->required();
    cmd->add_option("--samples", sec_args->samples, "Samples per prompt");
    cmd->add_option("--temperature", sec_args->temperature, "Sampling temperature");
    cmd->add_option("--max-new", sec_args->max_new, "Max generated tokens");
    cmd->add_option("--seed", sec_args->seed, "Sampling seed");
    cmd->add_option("--output", sec_args->output, "Summary JSON (default: stdout)");
    cmd->add_option("--details", sec_args->details_path, "Per-generation detail JSONL");
    cmd->add_option("--generations-out", sec_args->generations_out,
                    "Save sampled generations here");
    add_manifest(cmd);
    cmd->callback([&, sec_args] {
      ctx.command = "eval security";
      action = [&, sec_args] { run_eval_security(*sec_args, ctx); };
    });
  }
  auto util_args = std::make_shared<EvalUtilityArgs>();
  {
    auto* cmd = eval->add_subcommand("utility", "pass@k from sample counts");
    cmd->add_option("--counts", util_args->counts_path,
                    "JSONL with {problem, n, c} per line");
    cmd->add_option("--generations", util_args->generations_path,
                    "JSONL with {problem, text}; judged by --judge");
    cmd->add_option("--judge", util_args->judge, "Correctness judge (validity)");
    cmd->add_option("--k", util_args->ks, "k values to report")->delimiter(',');
    cmd->add_option("--output", util_args->output, "Summary JSON (default: stdout)");
    add_manifest(cmd);
    cmd->callback([&, util_args] {
      ctx.command = "eval utility";
      action = [&, util_args] { run_eval_utility(*util_args, ctx); };
    });
  }

  // report -----------------------------------------------------------------
  auto report_args = std::make_shared<ReportArgs>();
  {
    auto* cmd = app.add_subcommand("report", "Side-by-side run comparison");
    cmd->add_option("--add", report_args->rows,
                    "label=security.json[,utility.json]; repeatable");
    cmd->add_option("--output", report_args->output, "Write the table here");
    cmd->add_option("--top", report_args->top_cwes, "CWE bars to show");
    add_manifest(cmd);
    cmd->callback([&, report_args] {
      ctx.command = "report";
      action = [&, report_args] { run_report(*report_args, ctx); };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    action();
    ctx.finish();
  } catch (const Error& e) {
    fmt::print(stderr, "disco: {}: {}\n", to_string(e.kind()), e.what());
    return e.is_usage_error() ? 1 : 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "disco: internal: {}\n", e.what());
    return 2;
  }
  return 0;
}
