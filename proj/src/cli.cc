#include "kgrec/cli.h"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kgrec/checkpoint.h"
#include "kgrec/config.h"
#include "kgrec/dataset.h"
#include "kgrec/evalkit.h"
#include "kgrec/selfcheck.h"
#include "kgrec/trainer.h"

namespace kgrec {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h = fnv1a64({buf, static_cast<std::size_t>(in.gcount())}, h);
  return h;
}

namespace {

std::string hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Hash of the materialised dataset: splits and triplets in storage order.
std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) { h = fnv1a64({reinterpret_cast<const char*>(&v), sizeof v}, h); };
  for (const auto* g : {&d.train, &d.valid, &d.test}) {
    mix(g->num_users());
    mix(g->num_items());
    for (const auto& [u, v] : g->edges()) mix((static_cast<std::uint64_t>(u) << 32) | v);
  }
  mix(d.kg.num_entities());
  mix(d.kg.num_relations());
  for (const auto& t : d.kg.triplets()) {
    mix(t.head);
    mix(t.relation);
    mix(t.tail);
  }
  return h;
}

// Flags shared by the commands that resolve a TrainConfig.
struct ConfigFlags {
  std::string dataset = "toy";
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers, k_m, layers, dim, epochs, batch_size;
  std::optional<std::int64_t> rho_u;
  std::optional<double> rho_k, tau, lambda1, lambda2, lr;
  std::vector<std::string> sets;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--dataset", f.dataset, "'toy' or a directory with train.txt, test.txt, kg_final.txt");
  app->add_option("--config", f.config, "key = value config file");
  app->add_option("--seed", f.seed, "root seed (falls back to KGREC_SEED, then the config)");
  app->add_option("--workers", f.workers, "evaluation threads");
  app->add_option("--k-m", f.k_m, "mask size");
  app->add_option("--rho-k", f.rho_k, "KG drop ratio for the contrastive view");
  app->add_option("--rho-u", f.rho_u, "interaction edges dropped per step (-1: half)");
  app->add_option("--tau", f.tau, "InfoNCE temperature");
  app->add_option("--lambda1", f.lambda1, "reconstruction loss weight");
  app->add_option("--lambda2", f.lambda2, "contrastive loss weight");
  app->add_option("--layers", f.layers, "propagation layers");
  app->add_option("--dim", f.dim, "embedding size");
  app->add_option("--epochs", f.epochs, "training epochs");
  app->add_option("--lr", f.lr, "Adam learning rate");
  app->add_option("--batch-size", f.batch_size, "BPR triples per step");
  app->add_option("--set", f.sets, "override any config field: key=value");
}

// Settings for the built-in toy data when no config file is given.
TrainConfig toy_preset() {
  TrainConfig c;
  c.k_m = 128;
  c.batch_size = 256;
  c.lr = 5e-3;
  return c;
}

TrainConfig resolve_config(const ConfigFlags& f) {
  TrainConfig cfg = f.config.empty() && f.dataset == "toy" ? toy_preset() : TrainConfig{};
  if (!f.config.empty()) cfg = load_config(f.config, cfg);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.workers) cfg.workers = *f.workers;
  if (f.k_m) cfg.k_m = *f.k_m;
  if (f.rho_k) cfg.rho_k = *f.rho_k;
  if (f.rho_u) cfg.rho_u = *f.rho_u;
  if (f.tau) cfg.tau = *f.tau;
  if (f.lambda1) cfg.lambda1 = *f.lambda1;
  if (f.lambda2) cfg.lambda2 = *f.lambda2;
  if (f.layers) cfg.layers = static_cast<int>(*f.layers);
  if (f.dim) cfg.dim = *f.dim;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.lr) cfg.lr = *f.lr;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.seed) {
    cfg.seed = *f.seed;
  } else if (const char* env = std::getenv("KGREC_SEED")) {
    set_config_value(cfg, "seed", env);
  }
  return cfg;
}

Dataset load_data(const std::string& spec, const TrainConfig& cfg) {
  if (spec != "toy" && !fs::is_directory(spec)) throw ConfigError("dataset directory not found: " + spec);
  return resolve_dataset(spec, cfg);
}

void prepare_out(const fs::path& out, bool overwrite) {
  if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError("--out " + out.string() + " is not a directory");
  if (!overwrite && fs::exists(out) && !fs::is_empty(out)) {
    throw ConfigError("output directory " + out.string() + " is not empty and --overwrite=false");
  }
  fs::create_directories(out);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

json manifest_json(const std::string& command, const std::vector<std::string>& argv, const TrainConfig& cfg,
                   const std::string& dataset_spec, const Dataset& data, const fs::path& out) {
  json m;
  m["command"] = command;
  m["argv"] = argv;
  m["seed"] = cfg.seed;
  m["out"] = out.string();
  m["config"] = dump_config(cfg);
  json values = json::object();
  std::istringstream in(dump_config(cfg));
  std::string line, section;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find(" = ");
    values[(section == "toy" ? "toy." : "") + line.substr(0, eq)] = line.substr(eq + 3);
  }
  m["config_values"] = values;
  m["resolved_rho_u"] = resolve_rho_u(cfg, data.train.num_edges());
  json ds;
  ds["spec"] = dataset_spec;
  ds["content_hash"] = hex(dataset_hash(data));
  ds["files"] = json::array();
  for (const auto& f : data.files) {
    ds["files"].push_back({{"path", fs::absolute(f).string()}, {"bytes", fs::file_size(f)}, {"fnv1a64", hex(fnv1a64_file(f))}});
  }
  ds["users"] = data.train.num_users();
  ds["items"] = data.train.num_items();
  ds["entities"] = data.kg.num_entities();
  ds["relations"] = data.kg.num_relations();
  ds["triplets"] = data.kg.num_triplets();
  ds["train_edges"] = data.train.num_edges();
  m["dataset"] = ds;
  return m;
}

void write_manifest(const fs::path& out, const json& m) { write_text(out / "manifest.json", m.dump(2) + "\n"); }

std::string kv_metrics(const std::string& prefix, const RankingMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << prefix << "recall@" << m.n << "=" << m.recall << "\n"
     << prefix << "ndcg@" << m.n << "=" << m.ndcg << "\n"
     << prefix << "users_evaluated=" << m.users_evaluated << "\n"
     << prefix << "users_skipped=" << m.users_skipped << "\n";
  return os.str();
}

std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("--partial-kg expects comma-separated ratios, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("--partial-kg needs at least one ratio");
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

struct TrainFlags {
  std::string out;
  bool overwrite = true;
  std::string from_manifest;
  std::string sweep;
  std::string partial_kg;
};

RankingMetrics train_and_test(const TrainConfig& cfg, const Dataset& data, const std::optional<fs::path>& out) {
  TrainOptions o;
  o.out_dir = out;
  const TrainState st = run_training(cfg, data, o);
  const RankingMetrics m = evaluate_test(cfg, st.best_params, data, data.test);
  if (out) {
    std::ostringstream kv;
    kv << "best_epoch=" << st.best_epoch << "\nbest_valid_recall@" << cfg.topn << "=" << std::setprecision(17)
       << st.best_recall << "\nepochs_run=" << st.epoch << "\nearly_stopped=" << (st.early_stopped ? "true" : "false")
       << "\n"
       << kv_metrics("test_", m);
    write_text(*out / "test_metrics.kv", kv.str());
  }
  return m;
}

int cmd_train(ConfigFlags f, const TrainFlags& t, const std::vector<std::string>& argv) {
  TrainConfig cfg;
  std::string expected_hash;
  if (!t.from_manifest.empty()) {
    std::ifstream in(t.from_manifest);
    if (!in) throw ConfigError("cannot read manifest " + t.from_manifest);
    json m;
    try {
      m = json::parse(in);
      cfg = parse_config(m.at("config").get<std::string>());
      f.dataset = m.at("dataset").at("spec").get<std::string>();
      expected_hash = m.at("dataset").at("content_hash").get<std::string>();
    } catch (const json::exception& e) {
      throw ConfigError("malformed manifest " + t.from_manifest + ": " + e.what());
    }
    if (m.value("command", "") != "train") throw ConfigError("manifest was not written by 'train'");
  } else {
    cfg = resolve_config(f);
  }
  const Dataset data = load_data(f.dataset, cfg);
  if (!expected_hash.empty() && hex(dataset_hash(data)) != expected_hash) {
    throw ConfigError("dataset content differs from the manifest's fingerprint");
  }
  for (const auto& w : validate_config(cfg, data.kg.num_triplets(), data.train.num_edges())) spdlog::warn("{}", w);
  // Reject the whole grid before any training starts.
  for (const auto& v : t.sweep.empty() ? std::vector<std::string>{} : sweep_values(t.sweep)) {
    TrainConfig c = cfg;
    set_config_value(c, t.sweep, v);
    validate_config(c, data.kg.num_triplets(), data.train.num_edges());
  }
  const fs::path out = t.out;
  prepare_out(out, t.overwrite);
  write_manifest(out, manifest_json("train", argv, cfg, f.dataset, data, out));

  if (!t.sweep.empty()) {
    std::ostringstream table;
    table << std::left << std::setw(16) << t.sweep << std::setw(14) << "test_recall" << "test_ndcg\n";
    for (const auto& v : sweep_values(t.sweep)) {
      TrainConfig c = cfg;
      set_config_value(c, t.sweep, v);
      const fs::path sub = out / (t.sweep + "=" + v);
      fs::create_directories(sub);
      write_manifest(sub, manifest_json("train", argv, c, f.dataset, data, sub));
      const RankingMetrics m = train_and_test(c, data, sub);
      table << std::setw(16) << v << std::fixed << std::setprecision(6) << std::setw(14) << m.recall << m.ndcg << "\n";
    }
    write_text(out / "sweep.txt", table.str());
    std::cout << table.str();
    return 0;
  }
  if (!t.partial_kg.empty()) {
    const auto ratios = parse_ratios(t.partial_kg);
    std::size_t run = 0;
    const auto rows = partial_kg_eval(
        [&](const KnowledgeGraph& kg) {
          Dataset d = data;
          d.kg = kg;
          const fs::path sub = out / ("partial_" + std::to_string(run++));
          return train_and_test(cfg, d, sub);
        },
        data.kg, ratios, cfg.seed);
    const std::string text = format_partial_kg(rows);
    write_text(out / "partial_kg.txt", text);
    std::cout << text;
    return 0;
  }
  const RankingMetrics m = train_and_test(cfg, data, out);
  std::cout << format_metrics(m);
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  std::string groups;
  std::string partial_kg;
  bool explain = false;
  std::size_t num_groups = 5;
};

ParamStore load_matching_checkpoint(const std::string& path, const TrainConfig& cfg, const Dataset& data) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path);
  CheckpointHeader h;
  ParamStore p;
  try {
    p = load_checkpoint(path, &h);
  } catch (const CheckpointError& e) {
    throw ConfigError(e.what());
  }
  std::ostringstream why;
  if (h.dim != cfg.dim) why << " dim " << h.dim << " vs config " << cfg.dim << ";";
  if (h.num_entities != data.kg.num_entities()) why << " entities " << h.num_entities << " vs " << data.kg.num_entities() << ";";
  if (h.num_relations != data.kg.num_relations()) why << " relations " << h.num_relations << " vs " << data.kg.num_relations() << ";";
  if (h.num_users != data.train.num_users()) why << " users " << h.num_users << " vs " << data.train.num_users() << ";";
  if (!why.str().empty()) throw ConfigError("checkpoint does not match config/dataset:" + why.str());
  return p;
}

int cmd_evaluate(const ConfigFlags& f, const EvalFlags& e, bool overwrite, const std::vector<std::string>& argv,
                 bool explain_only) {
  const TrainConfig cfg = resolve_config(f);
  const Dataset data = load_data(f.dataset, cfg);
  const ParamStore params = load_matching_checkpoint(e.checkpoint, cfg, data);
  std::optional<fs::path> out;
  if (!e.out.empty()) {
    out = e.out;
    prepare_out(*out, overwrite);
    json m = manifest_json(explain_only ? "explain" : "evaluate", argv, cfg, f.dataset, data, *out);
    m["checkpoint"] = {{"path", fs::absolute(e.checkpoint).string()}, {"fnv1a64", hex(fnv1a64_file(e.checkpoint))}};
    write_manifest(*out, m);
  }
  auto emit = [&](const std::string& file, const std::string& text) {
    std::cout << text;
    if (out) write_text(*out / file, text);
  };
  std::string kv;
  if (explain_only || e.explain) {
    const RationaleReport r =
        rationale_report(params, data.kg, data.relation_names, data.item_category, data.category_names);
    emit("rationale.txt", format_rationale_report(r));
    std::ostringstream os;
    os.precision(17);
    for (const auto& x : r.relations) os << "gamma_mean." << x.relation << "=" << x.mean_gamma << "\n";
    kv += os.str();
  }
  if (!explain_only) {
    const InteractionGraph* target = &data.test;
    InteractionGraph empty = InteractionGraph::from_edges(data.train.num_users(), data.train.num_items(), {});
    const InteractionGraph* exclude = &data.train;
    if (e.split == "valid") {
      target = &data.valid;
    } else if (e.split == "train") {
      target = &data.train;
      exclude = &empty;
    } else if (e.split != "test") {
      throw ConfigError("--split must be train, valid or test");
    }
    const ModelOptions mo{cfg.layers, cfg.include_layer0};
    const EncodedModel em = encode_for_eval(params, data.kg, data.train, mo, false);
    const RankingMetrics m = full_rank_eval(em.user_out, em.entity_out, *exclude, *target, cfg.topn, cfg.workers);
    emit("metrics.txt", format_metrics(m));
    kv += kv_metrics(e.split + "_", m);
    if (!e.groups.empty()) {
      const GroupReport g = group_eval(m, data.train, parse_grouping(e.groups), e.num_groups);
      emit("groups.txt", format_group_report(g));
    }
    if (!e.partial_kg.empty()) {
      const auto ratios = parse_ratios(e.partial_kg);
      const auto rows = partial_kg_eval(
          [&](const KnowledgeGraph& kg) {
            const EncodedModel sub = encode_for_eval(params, kg, data.train, mo, false);
            return full_rank_eval(sub.user_out, sub.entity_out, *exclude, *target, cfg.topn, cfg.workers);
          },
          data.kg, ratios, cfg.seed);
      emit("partial_kg.txt", format_partial_kg(rows));
    }
  }
  if (out) write_text(*out / "report.kv", kv);
  return 0;
}

int cmd_ablate(const ConfigFlags& f, const std::string& variants, const std::string& seeds_s, const std::string& out_s,
               bool overwrite, const std::vector<std::string>& argv) {
  const TrainConfig cfg = resolve_config(f);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_s)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("--seeds expects comma-separated integers");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds is empty");
  const auto vs = split_list(variants);
  for (const auto& v : vs) apply_variant(cfg, v);
  const Dataset first = load_data(f.dataset, cfg);
  const fs::path out = out_s;
  prepare_out(out, overwrite);
  write_manifest(out, manifest_json("ablate", argv, cfg, f.dataset, first, out));
  const AblationTable t = ablate(cfg,
                                 [&](std::uint64_t s) {
                                   TrainConfig c = cfg;
                                   c.seed = s;
                                   return load_data(f.dataset, c);
                                 },
                                 vs, seeds);
  const std::string text = format_ablation(t);
  write_text(out / "ablation.txt", text);
  std::ostringstream kv;
  kv.precision(17);
  for (const auto& r : t.rows) {
    kv << r.variant << ".recall_mean=" << r.recall_mean << "\n" << r.variant << ".recall_std=" << r.recall_std << "\n"
       << r.variant << ".ndcg_mean=" << r.ndcg_mean << "\n" << r.variant << ".ndcg_std=" << r.ndcg_std << "\n";
  }
  write_text(out / "ablation.kv", kv.str());
  std::cout << text;
  return 0;
}

int report_suites(const std::vector<SuiteResult>& results) {
  bool ok = true;
  for (const auto& r : results) {
    std::cout << "suite " << r.name << ": " << (r.pass ? "PASS" : "FAIL") << " (" << r.checks
              << " checks, worst error " << r.worst_error << ", " << std::fixed << std::setprecision(2) << r.seconds
              << " s)\n"
              << std::defaultfloat;
    for (const auto& f : r.failures) std::cout << "  - " << f << "\n";
    ok = ok && r.pass;
  }
  if (!ok) {
    std::cout << "failed suites:";
    for (const auto& r : results) {
      if (!r.pass) std::cout << " " << r.name;
    }
    std::cout << "\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Knowledge-graph recommender with rationale masking and cross-view contrast"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all");
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  std::vector<std::string> args(argv, argv + argc);

  ConfigFlags cf;
  TrainFlags tf;
  auto* train = app.add_subcommand("train", "train a model and evaluate the best checkpoint on test");
  add_config_flags(train, cf);
  train->add_option("--out", tf.out, "output directory")->required();
  train->add_option("--overwrite", tf.overwrite, "allow writing into a non-empty output directory");
  train->add_option("--from-manifest", tf.from_manifest, "replay the config and dataset of a manifest.json");
  train->add_option("--sweep", tf.sweep, "grid-search one of k_m, rho_k, tau");
  train->add_option("--partial-kg", tf.partial_kg, "retrain on subsampled KGs, e.g. 0.4,0.5,0.6,0.7,1.0");

  ConfigFlags sf;
  TrainFlags stf;
  auto* sweep = app.add_subcommand("sweep", "train once per grid value of --sweep");
  add_config_flags(sweep, sf);
  sweep->add_option("--sweep", stf.sweep, "k_m, rho_k or tau")->required();
  sweep->add_option("--out", stf.out, "output directory")->required();
  sweep->add_option("--overwrite", stf.overwrite, "allow writing into a non-empty output directory");

  ConfigFlags ef;
  EvalFlags ev;
  bool ev_overwrite = true;
  auto* evaluate = app.add_subcommand("evaluate", "full-rank evaluation of a checkpoint");
  add_config_flags(evaluate, ef);
  evaluate->add_option("--checkpoint", ev.checkpoint, "checkpoint file");
  evaluate->add_option("--out", ev.out, "write reports here");
  evaluate->add_option("--overwrite", ev_overwrite, "allow writing into a non-empty output directory");
  evaluate->add_option("--split", ev.split, "test, valid or train");
  evaluate->add_option("--groups", ev.groups, "user-degree or item-sparsity");
  evaluate->add_option("--num-groups", ev.num_groups, "number of quantile groups");
  evaluate->add_option("--partial-kg", ev.partial_kg, "re-encode on subsampled KGs, e.g. 0.4,0.5,0.6,0.7,1.0");
  evaluate->add_flag("--explain", ev.explain, "per-relation mean rationale scores");

  ConfigFlags xf;
  EvalFlags xv;
  bool xv_overwrite = true;
  auto* explain = app.add_subcommand("explain", "per-relation rationale report of a checkpoint");
  add_config_flags(explain, xf);
  explain->add_option("--checkpoint", xv.checkpoint, "checkpoint file");
  explain->add_option("--out", xv.out, "write reports here");
  explain->add_option("--overwrite", xv_overwrite, "allow writing into a non-empty output directory");

  ConfigFlags af;
  std::string variants = "no_mae,random_mask,no_cl,random_aug", seeds = "1,2,3,4,5", ablate_out;
  bool ab_overwrite = true;
  auto* ablate_cmd = app.add_subcommand("ablate", "train every ablation variant over several seeds");
  add_config_flags(ablate_cmd, af);
  ablate_cmd->add_option("--ablate", variants, "comma-separated subset of no_mae,random_mask,no_cl,random_aug");
  ablate_cmd->add_option("--seeds", seeds, "comma-separated seeds");
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
  ablate_cmd->add_option("--overwrite", ab_overwrite, "allow writing into a non-empty output directory");

  std::uint64_t gc_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every loss on a tiny instance");
  gradcheck->add_option("--seed", gc_seed, "instance seed");

  std::vector<std::string> suites;
  SelfcheckOptions so;
  auto* selfcheck = app.add_subcommand("selfcheck", "run the oracle suites");
  selfcheck->add_option("--suite", suites, "gradcheck, dense, metrics, rationale, losses (default: all)");
  selfcheck->add_option("--trials", so.trials, "random instances per property suite");
  selfcheck->add_option("--seed", so.seed, "suite seed");
  selfcheck->add_flag("--inject-gradient-fault", so.inject_gradient_fault, "corrupt one gradient (harness test)")
      ->group("");

  bool dump_defaults = false;
  auto* config = app.add_subcommand("config", "configuration helpers");
  config->add_flag("--dump-defaults", dump_defaults, "print every field with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    spdlog::set_default_logger(spdlog::stderr_color_mt("kgrec"));
  } catch (const spdlog::spdlog_ex&) {
    spdlog::set_default_logger(spdlog::get("kgrec"));
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*train) return cmd_train(cf, tf, args);
    if (*sweep) return cmd_train(sf, stf, args);
    if (*evaluate) return cmd_evaluate(ef, ev, ev_overwrite, args, false);
    if (*explain) return cmd_evaluate(xf, xv, xv_overwrite, args, true);
    if (*ablate_cmd) return cmd_ablate(af, variants, seeds, ablate_out, ab_overwrite, args);
    if (*gradcheck) {
      const auto inst = make_gradcheck_instance(gc_seed);
      bool ok = true;
      for (const auto& lg : gradcheck_losses(inst, 1e-4)) {
        std::cout << lg.loss << ": max relative error " << lg.max_rel_error << " (" << lg.worst_tensor << ") "
                  << (lg.pass ? "PASS" : "FAIL") << "\n";
        ok = ok && lg.pass;
      }
      return ok ? 0 : 1;
    }
    if (*selfcheck) {
      if (suites.empty()) suites = suite_names();
      std::vector<SuiteResult> results;
      for (const auto& s : suites) results.push_back(run_suite(s, so));
      return report_suites(results);
    }
    if (*config) {
      if (!dump_defaults) {
        std::cerr << "config: nothing to do (try --dump-defaults)\n";
        return 2;
      }
      std::cout << dump_config(TrainConfig{});
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace kgrec
