#include "kgrec/config.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace kgrec {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    std::istringstream is(v);
    is >> out;
    if (!is || !is.eof()) throw ConfigError("config field '" + key + "': expected a number, got '" + v + "'");
  } else {
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("config field '" + key + "': expected an integer, got '" + v + "'");
    }
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config field '" + key + "': expected true/false, got '" + v + "'");
}

SelectionMode parse_mode(const std::string& key, const std::string& v) {
  if (v == "rationale") return SelectionMode::kRationale;
  if (v == "random") return SelectionMode::kRandom;
  throw ConfigError("config field '" + key + "': expected rationale/random, got '" + v + "'");
}

Reduction parse_reduction(const std::string& key, const std::string& v) {
  if (v == "sum") return Reduction::kSum;
  if (v == "mean") return Reduction::kMean;
  throw ConfigError("config field '" + key + "': expected sum/mean, got '" + v + "'");
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

struct Field {
  std::string key;
  std::string section;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define KGREC_SIZE(sec, name, member)                                                                   \
  Field {                                                                                               \
    name, sec, [](TrainConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(name, v); }, \
        [](const TrainConfig& c) { return std::to_string(c.member); }                                   \
  }
#define KGREC_DOUBLE(sec, name, member)                                                             \
  Field {                                                                                           \
    name, sec, [](TrainConfig& c, const std::string& v) { c.member = parse_number<double>(name, v); }, \
        [](const TrainConfig& c) { return fmt_double(c.member); }                                   \
  }
#define KGREC_BOOL(sec, name, member)                                                       \
  Field {                                                                                   \
    name, sec, [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      KGREC_SIZE("model", "dim", dim),
      Field{"layers", "model",
            [](TrainConfig& c, const std::string& v) { c.layers = parse_number<int>("layers", v); },
            [](const TrainConfig& c) { return std::to_string(c.layers); }},
      KGREC_BOOL("model", "include_layer0", include_layer0),
      KGREC_BOOL("model", "inverse_relations", inverse_relations),
      KGREC_BOOL("model", "rec_on_masked", rec_on_masked),
      KGREC_BOOL("model", "separate_cf_tables", separate_cf_tables),
      KGREC_DOUBLE("optim", "lr", lr),
      KGREC_DOUBLE("optim", "weight_decay", weight_decay),
      KGREC_DOUBLE("optim", "adam_beta1", adam_beta1),
      KGREC_DOUBLE("optim", "adam_beta2", adam_beta2),
      KGREC_DOUBLE("optim", "adam_eps", adam_eps),
      KGREC_SIZE("train", "epochs", epochs),
      KGREC_SIZE("train", "batch_size", batch_size),
      Field{"seed", "train",
            [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      KGREC_SIZE("train", "eval_every", eval_every),
      KGREC_SIZE("train", "patience", patience),
      KGREC_SIZE("train", "workers", workers),
      KGREC_SIZE("train", "topn", topn),
      Field{"loss_reduction", "train",
            [](TrainConfig& c, const std::string& v) { c.loss_reduction = parse_reduction("loss_reduction", v); },
            [](const TrainConfig& c) {
              return std::string(c.loss_reduction == Reduction::kSum ? "sum" : "mean");
            }},
      KGREC_SIZE("rationale", "k_m", k_m),
      KGREC_DOUBLE("rationale", "rho_k", rho_k),
      Field{"rho_u", "rationale",
            [](TrainConfig& c, const std::string& v) { c.rho_u = parse_number<std::int64_t>("rho_u", v); },
            [](const TrainConfig& c) { return std::to_string(c.rho_u); }},
      KGREC_BOOL("rationale", "deterministic_noise", deterministic_noise),
      KGREC_BOOL("rationale", "literal_phi_softmax", literal_phi_softmax),
      Field{"mask_mode", "rationale",
            [](TrainConfig& c, const std::string& v) { c.mask_mode = parse_mode("mask_mode", v); },
            [](const TrainConfig& c) {
              return std::string(c.mask_mode == SelectionMode::kRationale ? "rationale" : "random");
            }},
      Field{"aug_mode", "rationale",
            [](TrainConfig& c, const std::string& v) { c.aug_mode = parse_mode("aug_mode", v); },
            [](const TrainConfig& c) {
              return std::string(c.aug_mode == SelectionMode::kRationale ? "rationale" : "random");
            }},
      KGREC_DOUBLE("loss", "tau", tau),
      KGREC_DOUBLE("loss", "lambda1", lambda1),
      KGREC_DOUBLE("loss", "lambda2", lambda2),
      KGREC_BOOL("loss", "literal_infonce_denominator", literal_infonce_denominator),
      KGREC_SIZE("toy", "toy.num_users", toy.num_users),
      KGREC_SIZE("toy", "toy.num_items", toy.num_items),
      KGREC_SIZE("toy", "toy.num_entities", toy.num_entities),
      KGREC_SIZE("toy", "toy.num_relations", toy.num_relations),
      KGREC_SIZE("toy", "toy.clusters", toy.clusters),
      KGREC_SIZE("toy", "toy.prefs_per_user", toy.prefs_per_user),
      KGREC_SIZE("toy", "toy.min_interactions", toy.min_interactions),
      KGREC_SIZE("toy", "toy.max_interactions", toy.max_interactions),
      KGREC_DOUBLE("toy", "toy.noise_interactions", toy.noise_interactions),
      KGREC_SIZE("toy", "toy.tags_per_item", toy.tags_per_item),
  };
  return f;
}

#undef KGREC_SIZE
#undef KGREC_DOUBLE
#undef KGREC_BOOL

}  // namespace

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  std::string k = key;
  std::replace(k.begin(), k.end(), '-', '_');
  for (const auto& f : fields()) {
    if (f.key == k) {
      f.set(cfg, unquote(trim(value)));
      return;
    }
  }
  throw ConfigError("unknown config field '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (section == "toy" && key.rfind("toy.", 0) != 0) key = "toy." + key;
    set_config_value(base, key, line.substr(eq + 1));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const TrainConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    std::string key = f.key;
    if (section == "toy") key = key.substr(4);
    os << key << " = " << f.get(cfg) << "\n";
  }
  return os.str();
}

std::vector<std::string> sweep_values(const std::string& param) {
  if (param == "k_m") return {"128", "256", "512", "1024"};
  // Keep proportions 0.4..0.8 expressed as drop ratios.
  if (param == "rho_k") return {"0.6", "0.5", "0.4", "0.3", "0.2"};
  if (param == "tau") return {"0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9", "1.0"};
  throw ConfigError("no sweep grid for '" + param + "' (expected k_m, rho_k or tau)");
}

std::size_t resolve_rho_u(const TrainConfig& cfg, std::size_t num_edges) {
  if (cfg.rho_u < 0) return num_edges / 2;
  return static_cast<std::size_t>(cfg.rho_u);
}

std::vector<std::string> validate_config(const TrainConfig& cfg, std::size_t num_triplets, std::size_t num_edges) {
  std::vector<std::string> warnings;
  if (cfg.dim == 0) throw ConfigError("dim must be positive");
  if (cfg.layers < 0) throw ConfigError("layers must be non-negative");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(cfg.tau > 0.0)) throw ConfigError("tau must be positive");
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw ConfigError("lambda1/lambda2 must be non-negative");
  if (cfg.weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (cfg.eval_every == 0) throw ConfigError("eval_every must be positive");
  if (cfg.topn == 0) throw ConfigError("topn must be positive");
  if (cfg.workers == 0) throw ConfigError("workers must be positive");
  if (cfg.k_m > num_triplets) {
    throw ConfigError("k_m exceeds triplet count (" + std::to_string(cfg.k_m) + " > " +
                      std::to_string(num_triplets) + ")");
  }
  if (!(cfg.rho_k >= 0.0 && cfg.rho_k < 1.0)) throw ConfigError("rho_k must lie in [0, 1)");
  if (cfg.rho_u < -1) throw ConfigError("rho_u must be -1 (auto) or a non-negative edge count");
  const std::size_t rho_u = resolve_rho_u(cfg, num_edges);
  if (rho_u > 0 && rho_u >= num_edges) {
    throw ConfigError("rho_u (" + std::to_string(rho_u) + ") must be smaller than the training edge count (" +
                      std::to_string(num_edges) + ")");
  }
  if (cfg.mask_mode == SelectionMode::kRationale && cfg.aug_mode == SelectionMode::kRationale &&
      cfg.k_m + noise_set_size(num_triplets, cfg.rho_k) > num_triplets) {
    throw ConfigError("k_m plus the KG noise set exceeds the triplet count");
  }
  const std::size_t grid[] = {128, 256, 512, 1024};
  if (cfg.k_m != 0 && std::find(std::begin(grid), std::end(grid), cfg.k_m) == std::end(grid)) {
    warnings.push_back("k_m = " + std::to_string(cfg.k_m) + " is outside the searched grid {128, 256, 512, 1024}");
  }
  if (cfg.tau < 0.1 || cfg.tau > 1.0) warnings.push_back("tau outside the searched range [0.1, 1.0]");
  return warnings;
}

}  // namespace kgrec
