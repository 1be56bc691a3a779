#include "disco/config.hpp"

#include "disco/errors.hpp"
#include "disco/losses.hpp"

#include <fmt/format.h>

#include <cctype>
#include <string_view>

namespace disco::config {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

// Drops a trailing '#' comment, honoring double-quoted strings.
std::string_view strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

bool valid_key(std::string_view key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') {
      return false;
    }
  }
  return true;
}

Json parse_scalar(std::string_view raw, const std::string& origin, std::size_t lineno) {
  const std::string token{trim(raw)};
  if (token.empty()) {
    throw Error(ErrorKind::parse,
                fmt::format("{}:{}: missing value", origin, lineno));
  }
  if (token == "true") return Json(true);
  if (token == "false") return Json(false);
  // Quoted strings and numbers are both valid JSON scalars already.
  const Json value = Json::parse(token, nullptr, false);
  if (!value.is_discarded() &&
      (value.is_string() || value.is_number() || value.is_boolean())) {
    return value;
  }
  throw Error(ErrorKind::parse,
              fmt::format("{}:{}: cannot parse value '{}' "
                          "(use a quoted string, a number, or true/false)",
                          origin, lineno, token));
}

}  // namespace

Json parse_sections_text(const std::string& text, const std::string& origin) {
  Json root = Json::object();
  Json* current = &root;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string_view line{text.data() + start,
                          (end == std::string::npos ? text.size() : end) - start};
    start = (end == std::string::npos) ? text.size() + 1 : end + 1;
    ++lineno;

    line = trim(strip_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorKind::parse,
                    fmt::format("{}:{}: unterminated section header", origin, lineno));
      }
      const std::string_view name = trim(line.substr(1, line.size() - 2));
      if (!valid_key(name)) {
        throw Error(ErrorKind::parse,
                    fmt::format("{}:{}: bad section name '{}'", origin, lineno, name));
      }
      const std::string key{name};
      if (root.contains(key) && !root[key].is_object()) {
        throw Error(ErrorKind::parse,
                    fmt::format("{}:{}: '{}' is both a key and a section", origin,
                                lineno, key));
      }
      if (!root.contains(key)) root[key] = Json::object();
      current = &root[key];
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}:{}: expected 'key = value' or '[section]'", origin,
                              lineno));
    }
    const std::string_view key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}:{}: bad key '{}'", origin, lineno, key));
    }
    const std::string key_str{key};
    if (current->contains(key_str)) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}:{}: duplicate key '{}'", origin, lineno, key_str));
    }
    (*current)[key_str] = parse_scalar(line.substr(eq + 1), origin, lineno);
  }
  return root;
}

Json load_config_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  if (path.extension() == ".json") {
    const Json json = Json::parse(text, nullptr, false);
    if (json.is_discarded() || !json.is_object()) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}: not a JSON object", path.string()));
    }
    return json;
  }
  return parse_sections_text(text, path.string());
}

Json merge_config(Json base, const Json& patch) {
  if (!base.is_object() || !patch.is_object()) return patch;
  for (const auto& [key, value] : patch.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object()) {
      base[key] = merge_config(base[key], value);
    } else {
      base[key] = value;
    }
  }
  return base;
}

namespace {

void check_known_keys(const Json& object, std::initializer_list<std::string_view> known,
                      const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    bool found = false;
    for (std::string_view k : known) {
      if (key == k) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw Error(ErrorKind::validation,
                  fmt::format("unknown config key '{}' in {}", key, where));
    }
  }
}

double get_number(const Json& object, const char* key, double fallback) {
  if (!object.contains(key)) return fallback;
  if (!object[key].is_number()) {
    throw Error(ErrorKind::validation, fmt::format("config key '{}' must be a number", key));
  }
  return object[key].get<double>();
}

int get_int(const Json& object, const char* key, int fallback) {
  if (!object.contains(key)) return fallback;
  if (!object[key].is_number_integer()) {
    throw Error(ErrorKind::validation,
                fmt::format("config key '{}' must be an integer", key));
  }
  return object[key].get<int>();
}

bool get_bool(const Json& object, const char* key, bool fallback) {
  if (!object.contains(key)) return fallback;
  if (!object[key].is_boolean()) {
    throw Error(ErrorKind::validation,
                fmt::format("config key '{}' must be true or false", key));
  }
  return object[key].get<bool>();
}

std::string get_string(const Json& object, const char* key, const std::string& fallback) {
  if (!object.contains(key)) return fallback;
  if (!object[key].is_string()) {
    throw Error(ErrorKind::validation,
                fmt::format("config key '{}' must be a string", key));
  }
  return object[key].get<std::string>();
}

}  // namespace

train::TrainConfig train_config_from_json(const Json& json) {
  if (!json.is_object()) {
    throw Error(ErrorKind::validation, "config must be a JSON object");
  }
  check_known_keys(json,
                   {"stage", "lr", "batch_size", "epochs", "seed", "momentum",
                    "clip_norm", "sft_target", "allow_no_sft", "log_every", "dpo_beta",
                    "model", "loss"},
                   "the top level");

  train::TrainConfig config;
  config.stage = train::stage_from_string(get_string(json, "stage", "sft"));
  config.lr = get_number(json, "lr", config.lr);
  config.batch_size = get_int(json, "batch_size", config.batch_size);
  config.epochs = get_int(json, "epochs", config.epochs);
  if (json.contains("seed")) {
    if (!json["seed"].is_number_integer()) {
      throw Error(ErrorKind::validation, "config key 'seed' must be an integer");
    }
    config.seed = json["seed"].get<std::uint64_t>();
  }
  config.momentum = get_number(json, "momentum", config.momentum);
  config.clip_norm = get_number(json, "clip_norm", config.clip_norm);
  config.sft_target =
      train::sft_target_from_string(get_string(json, "sft_target", "plus"));
  config.allow_no_sft = get_bool(json, "allow_no_sft", config.allow_no_sft);
  config.log_every = get_int(json, "log_every", config.log_every);
  config.dpo_beta = get_number(json, "dpo_beta", config.dpo_beta);

  if (json.contains("model")) {
    const Json& model = json["model"];
    check_known_keys(model, {"vocab", "d_model", "n_layers", "n_heads", "context"},
                     "[model]");
    config.model.vocab = get_int(model, "vocab", config.model.vocab);
    config.model.d_model = get_int(model, "d_model", config.model.d_model);
    config.model.n_layers = get_int(model, "n_layers", config.model.n_layers);
    config.model.n_heads = get_int(model, "n_heads", config.model.n_heads);
    config.model.context = get_int(model, "context", config.model.context);
  }
  if (json.contains("loss")) {
    const Json& loss = json["loss"];
    check_known_keys(loss, {"beta", "gamma", "alpha", "delta_norm", "simpo_beta",
                            "simpo_gamma"},
                     "[loss]");
    config.lpo.beta = get_number(loss, "beta", config.lpo.beta);
    config.lpo.gamma = get_number(loss, "gamma", config.lpo.gamma);
    config.lpo.alpha = get_number(loss, "alpha", config.lpo.alpha);
    const std::string norm = get_string(loss, "delta_norm", "code");
    if (norm == "code") {
      config.lpo.delta_norm = losses::DeltaNorm::code;
    } else if (norm == "full") {
      config.lpo.delta_norm = losses::DeltaNorm::full;
    } else {
      throw Error(ErrorKind::validation,
                  fmt::format("config key 'delta_norm' must be 'code' or 'full', "
                              "got '{}'",
                              norm));
    }
    config.simpo.beta = get_number(loss, "simpo_beta", config.simpo.beta);
    config.simpo.gamma = get_number(loss, "simpo_gamma", config.simpo.gamma);
  }
  return config;
}

Json train_config_to_json(const train::TrainConfig& config) {
  return Json{
      {"stage", train::stage_name(config.stage)},
      {"lr", config.lr},
      {"batch_size", config.batch_size},
      {"epochs", config.epochs},
      {"seed", config.seed},
      {"momentum", config.momentum},
      {"clip_norm", config.clip_norm},
      {"sft_target", train::sft_target_name(config.sft_target)},
      {"allow_no_sft", config.allow_no_sft},
      {"log_every", config.log_every},
      {"dpo_beta", config.dpo_beta},
      {"model",
       {{"vocab", config.model.vocab},
        {"d_model", config.model.d_model},
        {"n_layers", config.model.n_layers},
        {"n_heads", config.model.n_heads},
        {"context", config.model.context}}},
      {"loss",
       {{"beta", config.lpo.beta},
        {"gamma", config.lpo.gamma},
        {"alpha", config.lpo.alpha},
        {"delta_norm",
         config.lpo.delta_norm == losses::DeltaNorm::code ? "code" : "full"},
        {"simpo_beta", config.simpo.beta},
        {"simpo_gamma", config.simpo.gamma}}},
  };
}

}  // namespace disco::config
