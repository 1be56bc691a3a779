// Acceptance gate for the toolkit. Each criterion prints exactly one line,
//
//   [PASS] criterion N: <what was verified> -- <measured detail> (<seconds>)
//
// and the binary exits nonzero when any criterion fails. Every check compares
// the library against an independent oracle (enumeration, central differences,
// recorded corpora, a second process) rather than against itself, and every
// tolerance is pinned here as a named constant.

#include "disco/analyze.hpp"
#include "disco/corpus.hpp"
#include "disco/distill.hpp"
#include "disco/errors.hpp"
#include "disco/jsonl.hpp"
#include "disco/knowledge.hpp"
#include "disco/llm_client.hpp"
#include "disco/losses.hpp"
#include "disco/metrics.hpp"
#include "disco/policy.hpp"
#include "disco/refine.hpp"
#include "disco/rng.hpp"
#include "disco/tokenmask.hpp"
#include "disco/tokens.hpp"
#include "disco/toysuite.hpp"
#include "disco/train.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using namespace disco;

namespace {

constexpr double kLogitTol = 1e-10;      // criterion 1: forward-pass agreement
constexpr double kGradTol = 1e-4;        // criterion 2: max relative error
constexpr double kExactTol = 1e-12;      // closed-form values (criteria 3, 4, 5)
constexpr double kMonteCarloTol = 1e-2;  // criterion 4: sampled estimate

fs::path fixture(const char* rel) { return fs::path(DISCO_FIXTURES_DIR) / rel; }

// Failure collector. `detail` is shown on the pass line; the first recorded
// failure is shown on the fail line.
struct Criterion {
  std::vector<std::string> failures;
  std::string detail;

  void require(bool ok, std::string what) {
    if (!ok) failures.push_back(std::move(what));
  }
};

refine::ChannelAnalyzer channel_analyzer(const std::vector<analyze::ToyRule>& rules,
                                         const std::string& channel) {
  std::vector<analyze::ToyRule> subset;
  for (const auto& rule : rules) {
    if (rule.channel == channel) subset.push_back(rule);
  }
  return [subset = std::move(subset)](const std::string& code, const std::string& label) {
    return analyze::toy_analyze(code, label, subset);
  };
}

// ---------------------------------------------------------------------------
// 1. The teacher-forced batch forward pass and the cached single-row decode
//    pass are the same function: their logits agree everywhere they overlap.

void criterion_reduction_identity(Criterion& c) {
  const policy::ModelConfig config;
  const auto model = policy::PolicyModel::init(config, 17);
  Rng rng(1001);
  const int rounds = 100;
  double worst = 0.0;
  for (int round = 0; round < rounds; ++round) {
    const auto draw = [&](std::size_t len) {
      TokenSeq seq(len);
      for (auto& token : seq) token = static_cast<Token>(1 + rng.bounded(255));
      return seq;
    };
    TokenSeq prompt = draw(4 + rng.bounded(21));
    TokenSeq reasoning = draw(rng.bounded(25));
    TokenSeq code = draw(4 + rng.bounded(45));
    code.push_back(kEndOfSequence);

    const auto eval = model.evaluate(prompt, reasoning, code);
    const auto rows = model.incremental_logits(eval.seq);
    c.require(rows.size() == eval.seq.size(),
              fmt::format("round {}: {} decode rows for {} tokens", round, rows.size(),
                          eval.seq.size()));
    if (!c.failures.empty()) return;
    for (std::size_t t = eval.first_logit_row; t <= eval.last_logit_row; ++t) {
      for (int v = 0; v < config.vocab; ++v) {
        worst = std::max(worst, std::abs(rows[t][v] -
                                         eval.logits[t * static_cast<std::size_t>(config.vocab) + v]));
      }
    }
  }
  c.require(worst <= kLogitTol,
            fmt::format("max |logit difference| {:.3e} above {:.0e}", worst, kLogitTol));
  c.detail = fmt::format("max |logit difference| {:.1e} over {} random sequences", worst, rounds);
}

// ---------------------------------------------------------------------------
// 2. Analytic parameter gradients of every training objective match central
//    finite differences on a shared 20-instance batch.

void criterion_gradients(Criterion& c) {
  const policy::ModelConfig config{256, 8, 1, 2, 192};
  std::vector<losses::EncodedInstance> batch;
  for (int i = 0; i < 20; ++i) {
    corpus::PreferenceInstance instance;
    instance.id = fmt::format("grad-{:02d}", i);
    instance.x = fmt::format("write helper {}", i);
    instance.reasoning = i % 4 == 0 ? std::string{} : fmt::format("avoid bug {}", i % 7);
    instance.y_minus = fmt::format("v{} = risky_call(x{})", i, i % 5);
    instance.y_plus = fmt::format("v{} = safe_call(x{}, check=True)", i, i % 5);
    batch.push_back(losses::encode_instance(instance, config.context));
  }

  losses::PreferenceHyper code_hyper;
  losses::PreferenceHyper full_hyper;
  full_hyper.delta_norm = losses::DeltaNorm::full;
  const losses::SimpoHyper simpo_hyper;
  const auto reference = policy::PolicyModel::init(config, 77);

  using LossFn = std::function<double(policy::PolicyModel&, std::vector<double>*)>;
  struct Objective {
    const char* name;
    LossFn loss;
  };
  const std::vector<Objective> objectives = {
      {"sft",
       [&](policy::PolicyModel& m, std::vector<double>* g) {
         return losses::batch_sft(m, batch, g).loss;
       }},
      {"lpo/code",
       [&](policy::PolicyModel& m, std::vector<double>* g) {
         return losses::batch_lpo(m, batch, code_hyper, g).loss;
       }},
      {"lpo/full",
       [&](policy::PolicyModel& m, std::vector<double>* g) {
         return losses::batch_lpo(m, batch, full_hyper, g).loss;
       }},
      {"simpo",
       [&](policy::PolicyModel& m, std::vector<double>* g) {
         return losses::batch_simpo(m, batch, simpo_hyper, g).loss;
       }},
      {"dpo",
       [&](policy::PolicyModel& m, std::vector<double>* g) {
         return losses::batch_dpo(m, reference, batch, 0.3, g).loss;
       }},
      {"safecoder",
       [&](policy::PolicyModel& m, std::vector<double>* g) {
         return losses::batch_safecoder(m, batch, g).loss;
       }},
  };

  double worst = 0.0;
  const char* worst_name = "none";
  std::uint64_t probe_seed = 501;
  for (const auto& objective : objectives) {
    auto model = policy::PolicyModel::init(config, 21);
    const auto result = policy::grad_check(objective.loss, model, 1e-5, 50, probe_seed++);
    c.require(result.probes >= 50,
              fmt::format("{}: only {} probed parameters", objective.name, result.probes));
    if (result.max_rel_error > worst) {
      worst = result.max_rel_error;
      worst_name = objective.name;
    }
    c.require(result.max_rel_error <= kGradTol,
              fmt::format("{}: max relative error {:.3e} above {:.0e}", objective.name,
                          result.max_rel_error, kGradTol));
  }
  c.detail = fmt::format("worst relative error {:.1e} ({}) across 6 objectives x 50 probes",
                         worst, worst_name);
}

// ---------------------------------------------------------------------------
// 3. align_tokens returns the lexicographically smallest maximal alignment.
//    Oracle: enumerate every longest-common-subsequence alignment explicitly
//    and take the smallest, on sequences short enough for full enumeration.

using AlignPairs = std::vector<std::pair<std::size_t, std::size_t>>;

std::vector<std::vector<std::size_t>> lcs_suffix_table(std::span<const Token> a,
                                                       std::span<const Token> b) {
  std::vector<std::vector<std::size_t>> suffix(a.size() + 1,
                                               std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = a.size(); i-- > 0;) {
    for (std::size_t j = b.size(); j-- > 0;) {
      suffix[i][j] = a[i] == b[j] ? suffix[i + 1][j + 1] + 1
                                  : std::max(suffix[i + 1][j], suffix[i][j + 1]);
    }
  }
  return suffix;
}

// Every maximal alignment, each built exactly once by always appending the
// next match pair in increasing position order.
void gather_alignments(std::span<const Token> a, std::span<const Token> b,
                       const std::vector<std::vector<std::size_t>>& suffix, std::size_t i,
                       std::size_t j, std::size_t need, AlignPairs& current,
                       std::vector<AlignPairs>& out) {
  if (need == 0) {
    out.push_back(current);
    return;
  }
  for (std::size_t p = i; p < a.size(); ++p) {
    for (std::size_t q = j; q < b.size(); ++q) {
      if (a[p] == b[q] && suffix[p + 1][q + 1] + 1 >= need) {
        current.emplace_back(p, q);
        gather_alignments(a, b, suffix, p + 1, q + 1, need - 1, current, out);
        current.pop_back();
      }
    }
  }
}

void criterion_mask_oracle(Criterion& c) {
  Rng rng(909);
  const int rounds = 1000;
  int checked = 0;
  for (int round = 0; round < rounds && c.failures.empty(); ++round) {
    TokenSeq a(rng.bounded(10));
    TokenSeq b(rng.bounded(10));
    for (auto& token : a) token = static_cast<Token>(5 + rng.bounded(3));
    for (auto& token : b) token = static_cast<Token>(5 + rng.bounded(3));

    const auto suffix = lcs_suffix_table(a, b);
    const std::size_t lcs = suffix[0][0];
    std::vector<AlignPairs> all;
    AlignPairs current;
    gather_alignments(a, b, suffix, 0, 0, lcs, current, all);
    const AlignPairs expected = *std::min_element(all.begin(), all.end());

    const auto got = tokenmask::align_tokens(a, b);
    c.require(got.size() == lcs,
              fmt::format("round {}: alignment length {} but LCS is {}", round, got.size(), lcs));
    c.require(got == expected,
              fmt::format("round {}: alignment is not the lexicographically smallest "
                          "({} candidates)",
                          round, all.size()));
    ++checked;
  }

  // Worked example: two reasoning tokens, one substitution ("CD" -> "XYD")
  // inside otherwise identical code.
  const TokenSeq reasoning{9, 9};
  const TokenSeq y_plus{65, 66, 88, 89, 68};
  const TokenSeq y_minus{65, 66, 67, 68};
  const auto masks = tokenmask::compute_masks(reasoning, y_plus, y_minus);
  const std::vector<std::uint8_t> want_plus{0, 0, 0, 0, 1, 1, 0};
  const std::vector<std::uint8_t> want_minus{0, 0, 0, 0, 1, 0};
  c.require(masks.m_plus == want_plus, "worked example: m+ mismatch");
  c.require(masks.m_minus == want_minus, "worked example: m- mismatch");
  c.require(std::abs(masks.pct_plus - 40.0) <= kExactTol,
            fmt::format("worked example: pct+ {} != 40", masks.pct_plus));
  c.require(std::abs(masks.pct_minus - 25.0) <= kExactTol,
            fmt::format("worked example: pct- {} != 25", masks.pct_minus));
  c.require(!masks.degenerate && masks.r_len == 2, "worked example: shape flags wrong");
  c.detail = fmt::format("{} random pairs match the enumeration oracle", checked);
}

// ---------------------------------------------------------------------------
// 4. pass@k agrees with exhaustive subset enumeration for every (n, c, k)
//    with n <= 8 and with Monte Carlo sampling for larger draws.

double pass_at_k_enumeration(int n, int c, int k) {
  const unsigned total = 1u << n;
  std::size_t subsets = 0;
  std::size_t hits = 0;
  for (unsigned bits = 0; bits < total; ++bits) {
    if (std::popcount(bits) != k) continue;
    ++subsets;
    if ((bits & ((1u << c) - 1u)) != 0) ++hits;  // a correct sample was drawn
  }
  return static_cast<double>(hits) / static_cast<double>(subsets);
}

void criterion_pass_at_k(Criterion& c) {
  double worst_exact = 0.0;
  for (int n = 1; n <= 8; ++n) {
    for (int correct = 0; correct <= n; ++correct) {
      for (int k = 1; k <= n; ++k) {
        const double diff =
            std::abs(metrics::pass_at_k(n, correct, k) - pass_at_k_enumeration(n, correct, k));
        worst_exact = std::max(worst_exact, diff);
      }
    }
  }
  c.require(worst_exact <= kExactTol,
            fmt::format("enumeration disagreement {:.3e} above {:.0e}", worst_exact, kExactTol));
  c.require(std::abs(metrics::pass_at_k(5, 2, 1) - 0.4) <= kExactTol, "pass@1(n=5,c=2) != 0.4");
  c.require(std::abs(metrics::pass_at_k(10, 3, 5) - 11.0 / 12.0) <= kExactTol,
            "pass@5(n=10,c=3) != 11/12");

  Rng rng(424242);
  const std::array<std::array<int, 3>, 3> combos{{{10, 3, 5}, {20, 7, 3}, {12, 5, 2}}};
  const int trials = 100000;
  double worst_sampled = 0.0;
  for (const auto& combo : combos) {
    const int n = combo[0];
    const int correct = combo[1];
    const int k = combo[2];
    std::vector<int> order(static_cast<std::size_t>(n));
    int hits = 0;
    for (int trial = 0; trial < trials; ++trial) {
      std::iota(order.begin(), order.end(), 0);
      bool hit = false;
      for (int draw = 0; draw < k && !hit; ++draw) {
        const std::size_t j =
            static_cast<std::size_t>(draw) + rng.bounded(static_cast<std::size_t>(n - draw));
        std::swap(order[static_cast<std::size_t>(draw)], order[j]);
        hit = order[static_cast<std::size_t>(draw)] < correct;
      }
      hits += hit ? 1 : 0;
    }
    const double estimate = static_cast<double>(hits) / trials;
    worst_sampled = std::max(worst_sampled,
                             std::abs(estimate - metrics::pass_at_k(n, correct, k)));
  }
  c.require(worst_sampled <= kMonteCarloTol,
            fmt::format("sampled estimate off by {:.4f}, above {:.2f}", worst_sampled,
                        kMonteCarloTol));
  c.detail = fmt::format("exhaustive n<=8 exact; {} draws within {:.4f}", trials, worst_sampled);
}

// ---------------------------------------------------------------------------
// 5. The security evaluator reproduces hand-counted numbers on a constructed
//    set of generations, and analyzer dedupe is a union that is idempotent.

void criterion_security_eval(Criterion& c) {
  const auto rules = analyze::load_toy_rules(fixture("toy/toy_rules.jsonl"));
  const metrics::AnalyzerFn analyzer = [&](const std::string& code, const std::string& label) {
    return analyze::toy_analyze(code, label, rules);
  };

  // One insecure and one secure fenced answer per family, plus one generation
  // whose extracted code cannot parse: 13 total, 12 valid, 6 insecure, one
  // finding each.
  std::vector<metrics::GenerationInput> generations;
  for (std::size_t family = 0; family < toy::families().size(); ++family) {
    generations.push_back({fmt::format("vul-{}", family),
                           fmt::format("Sure.\n```python\n{}```\n", toy::vul_code(family, false))});
    generations.push_back({fmt::format("sec-{}", family),
                           fmt::format("Sure.\n```python\n{}```\n", toy::sec_code(family, false))});
  }
  generations.push_back({"broken", "### Response:\nresult = handler(((\n"});

  const auto result = metrics::security_eval(generations, analyzer);
  const auto& summary = result.summary;
  c.require(summary.total == 13, fmt::format("total {} != 13", summary.total));
  c.require(summary.valid == 12, fmt::format("valid {} != 12", summary.valid));
  c.require(summary.insecure == 6, fmt::format("insecure {} != 6", summary.insecure));
  c.require(summary.findings == 6, fmt::format("findings {} != 6", summary.findings));
  c.require(summary.insecurity && std::abs(*summary.insecurity - 50.0) <= kExactTol,
            "insecurity != 50.0");
  c.require(summary.issues_per_100 && std::abs(*summary.issues_per_100 - 50.0) <= kExactTol,
            "issues per 100 != 50.0");
  const std::vector<std::string> want_cwes{"CWE-78",  "CWE-94",  "CWE-295",
                                           "CWE-327", "CWE-377", "CWE-502"};
  c.require(summary.histogram.size() == want_cwes.size(),
            fmt::format("histogram has {} buckets, want {}", summary.histogram.size(),
                        want_cwes.size()));
  if (summary.histogram.size() == want_cwes.size()) {
    for (std::size_t i = 0; i < want_cwes.size(); ++i) {
      c.require(summary.histogram[i].cwe_id == want_cwes[i] && summary.histogram[i].count == 1,
                fmt::format("histogram bucket {}: {} x{}", i, summary.histogram[i].cwe_id,
                            summary.histogram[i].count));
    }
  }

  // Dedupe over a mixed SARIF + bandit report: one overlapping finding, so
  // six findings collapse to five, and a second pass changes nothing.
  const auto sarif = analyze::parse_sarif(read_json_file(fixture("analyzers/sarif_sample.json")));
  const auto bandit =
      analyze::parse_bandit(read_json_file(fixture("analyzers/bandit_sample.json")));
  std::vector<analyze::Finding> merged = sarif;
  merged.insert(merged.end(), bandit.begin(), bandit.end());
  const auto once = analyze::dedupe_findings(merged);
  const auto twice = analyze::dedupe_findings(once);
  c.require(merged.size() == 6, fmt::format("fixture findings {} != 6", merged.size()));
  c.require(once.size() == 5, fmt::format("deduped findings {} != 5", once.size()));
  c.require(once.size() == twice.size(), "dedupe is not idempotent (size changed)");
  for (std::size_t i = 0; i < std::min(once.size(), twice.size()); ++i) {
    c.require(once[i].fingerprint() == twice[i].fingerprint() && once[i].tools == twice[i].tools,
              fmt::format("dedupe is not idempotent (entry {} changed)", i));
  }
  int two_tool = 0;
  for (const auto& finding : once) two_tool += finding.tools.size() == 2 ? 1 : 0;
  c.require(two_tool == 1, fmt::format("{} findings carry two tools, want 1", two_tool));
  c.detail = "13 constructed generations score exactly; 6 mixed findings dedupe to 5, idempotent";
}

// ---------------------------------------------------------------------------
// 6. End-to-end on the replayable toy world: distill -> refine -> corpus ->
//    train three models -> sampled security eval. The aligned model must be
//    strictly safer than its SFT base, which must be strictly safer than a
//    model trained on the insecure side without security reasoning.

void criterion_toy_pipeline(Criterion& c) {
  const auto generation_template = read_text_file(fixture("templates/generation_prompt.txt"));
  const auto refine_template = read_text_file(fixture("templates/refine_prompt.txt"));
  const auto reasoning_template = read_text_file(fixture("templates/reasoning_template.txt"));
  const auto kb = knowledge::load_knowledge_base(fixture("toy/toy_kb.jsonl"));
  const auto packages = knowledge::load_packages(fixture("toy/toy_packages.jsonl"));
  const auto prompts =
      knowledge::generate_prompts(kb, packages, generation_template, toy::kPromptCount,
                                  toy::kPromptSeed);

  llm::ReplayClient generation_client(fixture("toy/generation_cassette.jsonl"));
  const auto outcome = distill::run_distillation(prompts, generation_client, {});
  c.require(outcome.failures.empty() && outcome.records.size() == toy::kPromptCount,
            fmt::format("distillation: {} records, {} failures", outcome.records.size(),
                        outcome.failures.size()));
  if (!c.failures.empty()) return;

  const auto rules = analyze::load_toy_rules(fixture("toy/toy_rules.jsonl"));
  const auto bandit = channel_analyzer(rules, "bandit");
  const auto codeql = channel_analyzer(rules, "codeql");
  llm::ReplayClient refine_client(fixture("toy/refinement_cassette.jsonl"));
  std::vector<refine::RefinedRecord> refined;
  refined.reserve(outcome.records.size());
  for (const auto& record : outcome.records) {
    refined.push_back(refine::refine_loop(record, bandit, codeql, refine_template,
                                          refine_client, {}));
  }

  const auto instances = corpus::build_corpus(refined, reasoning_template, false);
  const auto split = corpus::split_indices(instances.size(), {0.8, 0.1, 0.1}, 11);
  const auto subset = [&](const std::vector<std::size_t>& indices) {
    std::vector<corpus::PreferenceInstance> out;
    out.reserve(indices.size());
    for (const std::size_t index : indices) out.push_back(instances[index]);
    return out;
  };
  const auto train_set = subset(split.train);
  const auto test_set = subset(split.test);
  c.require(train_set.size() == 192 && test_set.size() == 24,
            fmt::format("split sizes {}/{}", train_set.size(), test_set.size()));
  if (!c.failures.empty()) return;

  train::MetricsLog silent;
  train::TrainConfig sft_config;
  sft_config.stage = train::Stage::sft;
  sft_config.lr = 0.05;
  sft_config.batch_size = 8;
  sft_config.epochs = 24;
  sft_config.seed = 3;
  sft_config.clip_norm = 5.0;
  const int context = sft_config.model.context;

  const auto run_sft = [&](train::SftTarget target) {
    train::TrainConfig config = sft_config;
    config.sft_target = target;
    const auto data = train::encode_dataset(train_set, config.stage, target, context);
    c.require(data.skipped_too_long == 0,
              fmt::format("{} instances over context", data.skipped_too_long));
    auto state = train::init_state(config);
    train::train_stage(state, {data.instances, {}}, config, silent);
    return state;
  };
  const auto base_state = run_sft(train::SftTarget::minus_bare);  // insecure, no reasoning
  const auto sft_state = run_sft(train::SftTarget::plus);         // secure with reasoning

  train::TrainConfig lpo_config = sft_config;
  lpo_config.stage = train::Stage::lpo;
  lpo_config.lr = 0.02;
  lpo_config.epochs = 4;
  lpo_config.seed = 5;
  const auto lpo_data =
      train::encode_dataset(train_set, lpo_config.stage, lpo_config.sft_target, context);
  train::TrainState lpo_state = sft_state;
  train::train_stage(lpo_state, {lpo_data.instances, {}}, lpo_config, silent);
  if (!c.failures.empty()) return;

  const metrics::AnalyzerFn analyzer = [&](const std::string& code, const std::string& label) {
    return analyze::toy_analyze(code, label, rules);
  };
  const auto insecurity = [&](const train::TrainState& state) {
    const int samples = 5;
    const int max_new = 400;
    const double temperature = 0.4;
    const std::uint64_t seed = 9;
    std::vector<metrics::GenerationInput> generations;
    generations.reserve(test_set.size() * samples);
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      const auto prompt = encode_bytes(make_regions(test_set[i].x, "", "").prompt);
      for (int s = 0; s < samples; ++s) {
        const auto tokens = state.model.sample(prompt, temperature, max_new,
                                               derive_seed(seed, i * samples + s));
        generations.push_back({fmt::format("{}#{}", test_set[i].id, s), decode_bytes(tokens)});
      }
    }
    return metrics::security_eval(generations, analyzer).summary.insecurity;
  };
  const auto base_pct = insecurity(base_state);
  const auto sft_pct = insecurity(sft_state);
  const auto lpo_pct = insecurity(lpo_state);
  c.require(base_pct.has_value() && sft_pct.has_value() && lpo_pct.has_value(),
            "a trained model produced no valid generations");
  if (!c.failures.empty()) return;
  c.require(*base_pct > *sft_pct,
            fmt::format("base {:.1f}% not above sft {:.1f}%", *base_pct, *sft_pct));
  c.require(*sft_pct > *lpo_pct,
            fmt::format("sft {:.2f}% not above lpo {:.2f}%", *sft_pct, *lpo_pct));
  c.detail = fmt::format("insecurity base {:.1f}% > sft {:.2f}% > lpo {:.2f}% (120 samples each)",
                         *base_pct, *sft_pct, *lpo_pct);
}

// ---------------------------------------------------------------------------
// 7. Refinement bookkeeping on the recorded 100-generation demo corpus lands
//    on the known counts: 37 insecure before, 12 after, 25 actually changed,
//    2 kept on parse failure.

void criterion_refinement_accounting(Criterion& c) {
  std::vector<distill::GenerationRecord> records;
  for (const Json& row : read_jsonl(fixture("refine_demo/generations.jsonl"))) {
    records.push_back(distill::generation_from_json(row));
  }
  c.require(records.size() == 100, fmt::format("{} demo records != 100", records.size()));
  if (!c.failures.empty()) return;

  const auto rules = analyze::load_toy_rules(fixture("toy/toy_rules.jsonl"));
  const auto bandit = channel_analyzer(rules, "bandit");
  const auto codeql = channel_analyzer(rules, "codeql");
  const auto refine_template = read_text_file(fixture("templates/refine_prompt.txt"));
  llm::ReplayClient client(fixture("refine_demo/cassette.jsonl"));

  std::size_t insecure_before = 0;
  std::size_t insecure_after = 0;
  std::size_t refined_count = 0;
  std::size_t parse_failures = 0;
  for (const auto& record : records) {
    const bool was_insecure =
        !analyze::dedupe_findings(bandit(record.parsed.sec_code, record.id)).empty() ||
        !analyze::dedupe_findings(codeql(record.parsed.sec_code, record.id)).empty();
    insecure_before += was_insecure ? 1 : 0;
    const auto result = refine::refine_loop(record, bandit, codeql, refine_template, client, {});
    insecure_after += result.still_insecure ? 1 : 0;
    refined_count += result.refined ? 1 : 0;
    parse_failures += result.kept_on_parse_failure ? 1 : 0;
  }
  c.require(insecure_before == 37, fmt::format("insecure before {} != 37", insecure_before));
  c.require(insecure_after == 12, fmt::format("insecure after {} != 12", insecure_after));
  c.require(refined_count == 25, fmt::format("refined {} != 25", refined_count));
  c.require(parse_failures == 2, fmt::format("parse failures {} != 2", parse_failures));
  c.detail = "insecure 37 -> 12 across 100 records; 25 refined, 2 kept on parse failure";
}

// ---------------------------------------------------------------------------
// 8. The reference split proportions reproduce the published 9489/298/200
//    partition of 9987 instances regardless of the shuffle seed.

void criterion_reference_split(Criterion& c) {
  const auto proportions = corpus::reference_split_proportions();
  for (const std::uint64_t seed : {std::uint64_t{123}, std::uint64_t{9001}}) {
    const auto split = corpus::split_indices(9987, proportions, seed);
    c.require(split.train.size() == 9489 && split.validation.size() == 298 &&
                  split.test.size() == 200,
              fmt::format("seed {}: sizes {}/{}/{}", seed, split.train.size(),
                          split.validation.size(), split.test.size()));
    std::vector<std::size_t> all;
    all.reserve(9987);
    all.insert(all.end(), split.train.begin(), split.train.end());
    all.insert(all.end(), split.validation.begin(), split.validation.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    std::sort(all.begin(), all.end());
    bool covers = all.size() == 9987;
    for (std::size_t i = 0; covers && i < all.size(); ++i) covers = all[i] == i;
    c.require(covers, fmt::format("seed {}: split is not a partition", seed));
  }
  c.detail = "9987 instances split 9489/298/200 under either probed seed";
}

// ---------------------------------------------------------------------------
// 9. Two fresh processes replaying the full pipeline with fixed seeds emit
//    byte-identical artifacts (manifests excluded: they carry wall times).

void criterion_cli_determinism(Criterion& c) {
  const std::string cli = DISCO_CLI_PATH;
  c.require(fs::exists(cli), fmt::format("cli binary missing: {}", cli));
  if (!c.failures.empty()) return;

  std::random_device entropy;
  const fs::path scratch =
      fs::temp_directory_path() / fmt::format("disco-accept-{:08x}", entropy());
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{scratch};

  const auto run_pipeline = [&](const fs::path& dir) {
    fs::create_directories(dir);
    const auto shell = [&](const std::string& args) {
      const std::string command = fmt::format("\"{}\" {} > /dev/null 2>&1", cli, args);
      const int status = std::system(command.c_str());
      if (status != 0) {
        throw Error(ErrorKind::io, fmt::format("command failed (status {}): {}", status, args));
      }
    };
    const auto fx = [](const char* rel) { return fixture(rel).string(); };
    const std::string d = dir.string();
    shell(fmt::format("prompts gen --kb {} --packages {} --template {} --count 240 --seed 7 "
                      "--output {}/prompts.jsonl",
                      fx("toy/toy_kb.jsonl"), fx("toy/toy_packages.jsonl"),
                      fx("templates/generation_prompt.txt"), d));
    shell(fmt::format("distill run --prompts {}/prompts.jsonl --replay {} "
                      "--output {}/generations.jsonl --failures {}/failures.jsonl",
                      d, fx("toy/generation_cassette.jsonl"), d, d));
    shell(fmt::format("refine run --generations {}/generations.jsonl --rules {} --template {} "
                      "--replay {} --output {}/refined.jsonl",
                      d, fx("toy/toy_rules.jsonl"), fx("templates/refine_prompt.txt"),
                      fx("toy/refinement_cassette.jsonl"), d));
    shell(fmt::format("corpus build --refined {}/refined.jsonl --template {} "
                      "--output {}/corpus.jsonl",
                      d, fx("templates/reasoning_template.txt"), d));
    shell(fmt::format("corpus split --corpus {}/corpus.jsonl --output-dir {}/splits "
                      "--proportions 0.8 0.1 0.1 --seed 11",
                      d, d));
    shell(fmt::format("masks compute --corpus {}/splits/test.jsonl --output {}/masks.jsonl", d,
                      d));
    shell(fmt::format("train --stage sft --train {}/splits/validation.jsonl --epochs 1 "
                      "--lr 0.05 --batch-size 8 --seed 3 --clip-norm 5 "
                      "--output {}/model.ckpt --metrics {}/metrics.jsonl",
                      d, d, d));
    shell(fmt::format("eval security --checkpoint {}/model.ckpt --prompts {}/splits/test.jsonl "
                      "--rules {} --samples 1 --temperature 0.4 --max-new 120 --seed 9 "
                      "--output {}/security.json --details {}/details.jsonl "
                      "--generations-out {}/samples.jsonl",
                      d, d, fx("toy/toy_rules.jsonl"), d, d, d));
  };

  const auto snapshot = [](const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename().string().ends_with(".manifest.json")) continue;
      std::ifstream in(entry.path(), std::ios::binary);
      std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      files.emplace(fs::relative(entry.path(), dir).generic_string(), std::move(body));
    }
    return files;
  };

  run_pipeline(scratch / "a");
  run_pipeline(scratch / "b");
  const auto first = snapshot(scratch / "a");
  const auto second = snapshot(scratch / "b");
  c.require(!first.empty(), "first run produced no artifacts");
  c.require(first.size() == second.size(),
            fmt::format("artifact count differs: {} vs {}", first.size(), second.size()));
  std::size_t compared = 0;
  for (const auto& [rel, body] : first) {
    const auto other = second.find(rel);
    if (other == second.end()) {
      c.require(false, fmt::format("missing from second run: {}", rel));
      continue;
    }
    c.require(other->second == body, fmt::format("differs between runs: {}", rel));
    ++compared;
  }
  c.detail = fmt::format("{} artifacts byte-identical across two pipeline processes", compared);
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    void (*fn)(Criterion&);
  };
  const std::vector<Entry> entries = {
      {1, "teacher-forced and incremental logits agree", criterion_reduction_identity},
      {2, "analytic gradients match central differences", criterion_gradients},
      {3, "alignment masks match the enumeration oracle", criterion_mask_oracle},
      {4, "pass@k matches enumeration and sampling", criterion_pass_at_k},
      {5, "security metrics reproduce hand-counted values", criterion_security_eval},
      {6, "toy pipeline ranks base > sft > lpo on insecurity", criterion_toy_pipeline},
      {7, "refinement accounting matches the recorded demo", criterion_refinement_accounting},
      {8, "reference proportions split 9987 into 9489/298/200", criterion_reference_split},
      {9, "replayed cli pipeline is byte-for-byte deterministic", criterion_cli_determinism},
  };

  int failed = 0;
  const auto started = std::chrono::steady_clock::now();
  for (const auto& entry : entries) {
    Criterion criterion;
    const auto begun = std::chrono::steady_clock::now();
    try {
      entry.fn(criterion);
    } catch (const std::exception& error) {
      criterion.failures.push_back(fmt::format("exception: {}", error.what()));
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - begun).count();
    if (criterion.failures.empty()) {
      fmt::print("[PASS] criterion {}: {}{} ({:.1f}s)\n", entry.id, entry.name,
                 criterion.detail.empty() ? std::string{}
                                          : fmt::format(" -- {}", criterion.detail),
                 seconds);
    } else {
      ++failed;
      fmt::print("[FAIL] criterion {}: {} -- {} ({:.1f}s)\n", entry.id, entry.name,
                 criterion.failures.front(), seconds);
    }
  }
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (failed == 0) {
    fmt::print("all {} criteria passed ({:.1f}s)\n", entries.size(), total);
  } else {
    fmt::print("{} of {} criteria FAILED ({:.1f}s)\n", failed, entries.size(), total);
  }
  return failed == 0 ? 0 : 1;
}
