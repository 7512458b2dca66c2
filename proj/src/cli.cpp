#include "protorec/cli.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "protorec/checkpoint.hpp"
#include "protorec/config.hpp"
#include "protorec/data.hpp"
#include "protorec/diagnostics.hpp"
#include "protorec/errors.hpp"
#include "protorec/eval.hpp"
#include "protorec/train.hpp"

namespace fs = std::filesystem;

namespace protorec {

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

// Command-line overrides of the training config.
struct ModelFlags {
  std::optional<std::string> variant;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> user_prototypes;
  std::optional<std::size_t> item_prototypes;
  std::optional<int> k_u;
  std::optional<int> k_t;
  std::optional<double> lambda_u;
  std::optional<double> lambda_t;
  std::optional<std::size_t> negatives;
  std::optional<double> learning_rate;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> weight_decay;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "mf or protomf");
    cmd->add_option("--dim", dim, "latent dimension");
    cmd->add_option("--prototypes-u", user_prototypes, "number of user prototypes");
    cmd->add_option("--prototypes-t", item_prototypes, "number of item prototypes");
    cmd->add_option("--k-u", k_u, "user prototypes kept per user (-1 = all)");
    cmd->add_option("--k-t", k_t, "item prototypes kept per item (-1 = all)");
    cmd->add_option("--lambda-u", lambda_u, "user prototype penalty weight");
    cmd->add_option("--lambda-t", lambda_t, "item prototype penalty weight");
    cmd->add_option("--negatives", negatives, "sampled negatives per positive");
    cmd->add_option("--lr", learning_rate, "learning rate");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "examples per batch");
    cmd->add_option("--weight-decay", weight_decay, "decoupled weight decay on latent factors");
  }

  bool any() const {
    return variant || dim || user_prototypes || item_prototypes || k_u || k_t || lambda_u ||
           lambda_t || negatives || learning_rate || epochs || batch_size || weight_decay;
  }

  void apply(TrainConfig& c) const {
    if (variant) c.variant = parse_variant(*variant);
    if (dim) c.dim = *dim;
    if (user_prototypes) c.user_prototypes = *user_prototypes;
    if (item_prototypes) c.item_prototypes = *item_prototypes;
    if (k_u) c.filter.k_u = *k_u;
    if (k_t) c.filter.k_t = *k_t;
    if (lambda_u) c.lambda_u = *lambda_u;
    if (lambda_t) c.lambda_t = *lambda_t;
    if (negatives) c.n_negatives = *negatives;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (weight_decay) c.weight_decay = *weight_decay;
  }
};

class Context {
 public:
  Context(const GlobalOptions& g, std::ostream& out, std::ostream& err)
      : global_(g), out_(out), err_(err), started_(now_iso()) {
    if (!g.config.empty()) {
      config_ = load_config(g.config);
      has_config_ = true;
    }
    if (g.seed) config_.seed = *g.seed;
    config_.train.seed = config_.seed;
    fs::create_directories(out_dir());
  }

  const RunConfig& config() const { return config_; }
  bool has_config() const { return has_config_; }
  fs::path out_dir() const { return fs::path(global_.out); }
  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }

  TrainConfig train_config(const ModelFlags& flags) const {
    TrainConfig c = config_.train;
    flags.apply(c);
    c.seed = config_.seed;
    return c;
  }

  void add_input(const fs::path& p) { inputs_[p.string()] = file_digest(p); }
  void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

  void write_manifest(std::string_view command, const std::optional<std::string>& hash) {
    nlohmann::ordered_json j;
    j["command"] = std::string(command);
    j["toolkit_version"] = std::string(kToolkitVersion);
    j["config_hash"] = hash ? nlohmann::ordered_json(*hash) : nlohmann::ordered_json(nullptr);
    j["master_seed"] = config_.seed;
    j["data_digests"] = inputs_;
    j["outputs"] = outputs_;
    j["started_at"] = started_;
    j["finished_at"] = now_iso();
    const auto path = out_dir() / fmt::format("manifest_{}.json", command);
    std::ofstream f(path);
    if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
    f << j.dump(2) << '\n';
  }

 private:
  static std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  const GlobalOptions& global_;
  std::ostream& out_;
  std::ostream& err_;
  RunConfig config_;
  bool has_config_ = false;
  std::string started_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> outputs_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
  f << text;
}

Prepared load_prepared(Context& ctx, const std::string& data_dir) {
  const fs::path dir = data_dir.empty() ? ctx.out_dir() : fs::path(data_dir);
  for (auto name : {"interactions.tsv", "items.tsv", "train.tsv", "validation.tsv", "test.tsv"})
    ctx.add_input(dir / name);
  return read_prepared(dir);
}

void check_matches_data(const ModelParams& p, const Dataset& ds) {
  if (p.n_users() != ds.n_users || p.n_items() != ds.n_items)
    throw DataError(fmt::format(
        "checkpoint has {} users x {} items but the prepared data has {} x {}", p.n_users(),
        p.n_items(), ds.n_users, ds.n_items));
}

// --- prepare -----------------------------------------------------------------

struct PrepareOptions {
  std::string interactions;
  std::string format;
  std::string attributes;
};

int cmd_prepare(Context& ctx, const PrepareOptions& o) {
  const auto& dc = ctx.config().data;
  const fs::path interactions = o.interactions.empty() ? dc.interactions : fs::path(o.interactions);
  if (interactions.empty()) throw UsageError("prepare needs --interactions or data.interactions");
  const auto format = o.format.empty() ? dc.format : parse_format(o.format);
  const fs::path attributes = o.attributes.empty() ? dc.attributes : fs::path(o.attributes);

  ctx.add_input(interactions);
  Dataset ds = load_interactions(interactions, format);
  if (attributes.empty() || !fs::exists(attributes)) {
    ctx.err() << "warning: no attribute file"
              << (attributes.empty() ? "" : " at " + attributes.string())
              << "; all items are neutral\n";
  } else {
    ctx.add_input(attributes);
    GroupLoadStats stats;
    ds = load_item_groups(attributes, std::move(ds), dc.groups, &stats);
    if (stats.unknown_items > 0)
      ctx.err() << fmt::format("warning: {} attribute rows name unknown items\n",
                               stats.unknown_items);
  }
  const Split split = make_split(ds, ctx.config().seed);
  write_prepared(ctx.out_dir(), ds, split);
  for (auto name : {"interactions.tsv", "items.tsv", "train.tsv", "validation.tsv", "test.tsv"})
    ctx.add_output(ctx.out_dir() / name);
  ctx.write_manifest("prepare", std::nullopt);
  ctx.out() << fmt::format("prepared {} users, {} items, {} interactions ({} train, {} eval users)\n",
                           ds.n_users, ds.n_items, ds.interactions.size(), split.train.size(),
                           split.test.size());
  return kExitOk;
}

// --- train -------------------------------------------------------------------

std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

int cmd_train(Context& ctx, const ModelFlags& flags, const std::string& data_dir) {
  const auto prepared = load_prepared(ctx, data_dir);
  const TrainConfig cfg = ctx.train_config(flags);
  const auto hash = config_hash(cfg);

  std::ostringstream log;
  log << "epoch,l_original,penalty_u,penalty_t,total,val_hit_ratio_10,val_ndcg_10,selected\n";
  auto result = train(prepared.dataset, prepared.split, cfg, [&](const EpochRecord& r) {
    ctx.err() << fmt::format("epoch {}: loss {:.5f} val HR@10 {:.4f} NDCG@10 {:.4f}\n", r.epoch,
                             r.loss.total, r.val_hit_ratio.value_or(0.0),
                             r.val_ndcg.value_or(0.0));
  });
  for (const auto& r : result.history)
    log << r.epoch << ',' << format_double(r.loss.l_original) << ','
        << format_double(r.loss.penalty_u) << ',' << format_double(r.loss.penalty_t) << ','
        << format_double(r.loss.total) << ',' << opt_csv(r.val_hit_ratio) << ','
        << opt_csv(r.val_ndcg) << ',' << int(r.selected) << '\n';

  const auto ckpt_path = ctx.out_dir() / "checkpoint.txt";
  save_checkpoint(ckpt_path, {result.params, cfg.filter, hash});
  write_text(ctx.out_dir() / "epochs.csv", log.str());
  ctx.add_output(ckpt_path);
  ctx.add_output(ctx.out_dir() / "epochs.csv");
  ctx.write_manifest("train", hash);
  ctx.out() << fmt::format("trained {} (config {}), best epoch {}\n", to_string(cfg.variant), hash,
                           result.best_epoch);
  return kExitOk;
}

// --- evaluate ----------------------------------------------------------------

struct EvaluateOptions {
  std::string data;
  std::string checkpoint;
  std::string stage = "test";
  bool dump_records = false;
  bool force = false;
};

int cmd_evaluate(Context& ctx, const ModelFlags& flags, const EvaluateOptions& o) {
  const auto prepared = load_prepared(ctx, o.data);
  const fs::path ckpt_path = o.checkpoint.empty() ? ctx.out_dir() / "checkpoint.txt"
                                                  : fs::path(o.checkpoint);
  ctx.add_input(ckpt_path);
  const auto ckpt = load_checkpoint(ckpt_path);
  check_matches_data(ckpt.params, prepared.dataset);

  if (ctx.has_config() || flags.any()) {
    const TrainConfig cfg = ctx.train_config(flags);
    const auto& p = ckpt.params;
    const bool dims_ok =
        cfg.variant == p.variant && cfg.dim == p.dim() &&
        (p.variant == Variant::mf || (cfg.user_prototypes == p.user_prototypes.rows() &&
                                      cfg.item_prototypes == p.item_prototypes.rows()));
    if (!dims_ok && !o.force)
      throw DataError("checkpoint dimensions disagree with the supplied config (use --force)");
    if (config_hash(cfg) != ckpt.config_hash && !o.force)
      throw UsageError(fmt::format(
          "checkpoint config hash {} differs from supplied flags ({}); use --force to override",
          ckpt.config_hash, config_hash(cfg)));
  }

  const Stage stage = parse_stage(o.stage);
  const auto records = rank_all(ckpt.params, ckpt.filter, prepared.split, stage);
  if (records.empty()) throw DataError("no evaluation users in the prepared split");
  const auto report = make_report(records, prepared.dataset);
  const auto stem = fmt::format("report_{}", to_string(stage));
  write_text(ctx.out_dir() / (stem + ".json"), report_json(report));
  write_text(ctx.out_dir() / (stem + ".csv"), report_csv(report));
  ctx.add_output(ctx.out_dir() / (stem + ".json"));
  ctx.add_output(ctx.out_dir() / (stem + ".csv"));
  if (o.dump_records) {
    const auto path = ctx.out_dir() / fmt::format("records_{}.csv", to_string(stage));
    std::ofstream f(path);
    if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
    write_records_csv(f, records, prepared.dataset);
    ctx.add_output(path);
  }
  ctx.write_manifest("evaluate", ckpt.config_hash);
  ctx.out() << report_json(report);
  return kExitOk;
}

// --- sweep -------------------------------------------------------------------

int cmd_sweep(Context& ctx, const ModelFlags& flags, const std::string& data_dir) {
  const auto prepared = load_prepared(ctx, data_dir);
  const TrainConfig base = ctx.train_config(flags);
  const auto grid = ctx.config().sweep.expand(base);
  const auto rows = sweep(grid, prepared.dataset, prepared.split, ctx.config().seed);

  std::ostringstream csv;
  csv << "K_u,lambda_u,K_t,lambda_t,HitRatio@10,NDCG@10,best_epoch,status,error\n";
  for (const auto& r : rows) {
    std::string error = r.error;
    for (char& c : error)
      if (c == ',' || c == '\n') c = ';';
    csv << r.config.filter.k_u << ',' << format_double(r.config.lambda_u) << ','
        << r.config.filter.k_t << ',' << format_double(r.config.lambda_t) << ',';
    if (r.ok)
      csv << format_double(r.val_hit_ratio) << ',' << format_double(r.val_ndcg) << ','
          << r.best_epoch << ",ok,\n";
    else
      csv << ",,,failed," << error << '\n';
  }
  const auto path = ctx.out_dir() / "sweep.csv";
  write_text(path, csv.str());
  ctx.add_output(path);
  ctx.write_manifest("sweep", config_hash(base));
  ctx.out() << csv.str();
  return kExitOk;
}

// --- diagnose / export-embeddings ---------------------------------------------

std::vector<std::size_t> parse_k_values(const std::string& text, std::size_t l) {
  std::vector<std::size_t> ks;
  if (text.empty()) {
    for (std::size_t k = 1; k <= l; ++k) ks.push_back(k);
    return ks;
  }
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(fmt::format("bad --k-values entry '{}'", tok));
    }
  }
  return ks;
}

struct DiagnoseOptions {
  std::string data;
  std::string checkpoint;
  std::string k_values;
  std::string path;
};

int cmd_diagnose(Context& ctx, const DiagnoseOptions& o) {
  const auto prepared = load_prepared(ctx, o.data);
  const fs::path ckpt_path = o.checkpoint.empty() ? ctx.out_dir() / "checkpoint.txt"
                                                  : fs::path(o.checkpoint);
  ctx.add_input(ckpt_path);
  const auto ckpt = load_checkpoint(ckpt_path);
  if (ckpt.params.variant != Variant::protomf)
    throw UsageError("diagnose needs a protomf checkpoint: mf models have no prototypes");
  check_matches_data(ckpt.params, prepared.dataset);

  const auto ks = parse_k_values(o.k_values, ckpt.params.item_prototypes.rows());
  const auto profile = distance_profile(ckpt.params, prepared.dataset, ks);
  write_text(ctx.out_dir() / "distance_profile.csv", distance_profile_csv(profile));

  std::ostringstream gram;
  gram << "space,n_prototypes,mean_abs_offdiag,max_abs_offdiag,penalty_value\n";
  auto row = [&](const char* space, const Matrix& p) {
    gram << space << ',' << p.rows() << ',';
    if (p.rows() < 2) {
      gram << ",," << format_double(regularizer_penalty(p)) << '\n';
      return;
    }
    const auto g = gram_stats(p);
    gram << format_double(g.mean_abs_offdiag) << ',' << format_double(g.max_abs_offdiag) << ','
         << format_double(g.penalty_value) << '\n';
  };
  row("item", ckpt.params.item_prototypes);
  row("user", ckpt.params.user_prototypes);
  write_text(ctx.out_dir() / "gram_stats.csv", gram.str());

  const auto emb = ctx.out_dir() / "embeddings.csv";
  export_embeddings(ckpt.params, prepared.dataset, emb);
  for (auto name : {"distance_profile.csv", "gram_stats.csv", "embeddings.csv"})
    ctx.add_output(ctx.out_dir() / name);
  ctx.write_manifest("diagnose", ckpt.config_hash);
  ctx.out() << distance_profile_csv(profile) << gram.str();
  return kExitOk;
}

int cmd_export(Context& ctx, const DiagnoseOptions& o) {
  const auto prepared = load_prepared(ctx, o.data);
  const fs::path ckpt_path = o.checkpoint.empty() ? ctx.out_dir() / "checkpoint.txt"
                                                  : fs::path(o.checkpoint);
  ctx.add_input(ckpt_path);
  const auto ckpt = load_checkpoint(ckpt_path);
  check_matches_data(ckpt.params, prepared.dataset);
  const fs::path path = o.path.empty() ? ctx.out_dir() / "embeddings.csv" : fs::path(o.path);
  export_embeddings(ckpt.params, prepared.dataset, path);
  ctx.add_output(path);
  ctx.write_manifest("export-embeddings", ckpt.config_hash);
  ctx.out() << "wrote " << path.string() << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prototype-based matrix factorization with k-filtering and prototype regularization",
               "protorec"};
  app.require_subcommand(1);
  GlobalOptions global;
  app.add_option("--config", global.config, "run config (JSON)");
  app.add_option("--seed", global.seed, "master seed");
  app.add_option("--out", global.out, "output directory");
  app.fallthrough();

  PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "ingest data and write leave-one-out splits");
  prepare->add_option("--interactions", prep.interactions, "interaction file");
  prepare->add_option("--format", prep.format, "tsv or movielens_dat");
  prepare->add_option("--attributes", prep.attributes, "item<TAB>attribute file");

  ModelFlags train_flags, eval_flags, sweep_flags;
  std::string train_data, sweep_data;
  auto* train_cmd = app.add_subcommand("train", "train a model on a prepared split");
  train_flags.add_to(train_cmd);
  train_cmd->add_option("--data", train_data, "prepared directory (default: --out)");

  EvaluateOptions eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "rank held-out items and report metrics");
  eval_flags.add_to(evaluate);
  evaluate->add_option("--data", eval_opts.data, "prepared directory (default: --out)");
  evaluate->add_option("--checkpoint", eval_opts.checkpoint, "checkpoint file");
  evaluate->add_option("--stage", eval_opts.stage, "validation or test")
      ->check(CLI::IsMember({"validation", "test"}));
  evaluate->add_flag("--dump-records", eval_opts.dump_records, "write per-user rank records");
  evaluate->add_flag("--force", eval_opts.force, "ignore config hash mismatches");

  auto* sweep_cmd = app.add_subcommand("sweep", "train every grid point of the config sweep");
  sweep_flags.add_to(sweep_cmd);
  sweep_cmd->add_option("--data", sweep_data, "prepared directory (default: --out)");

  DiagnoseOptions diag_opts, export_opts;
  auto* diagnose = app.add_subcommand("diagnose", "prototype distance profile and Gram statistics");
  diagnose->add_option("--data", diag_opts.data, "prepared directory (default: --out)");
  diagnose->add_option("--checkpoint", diag_opts.checkpoint, "checkpoint file");
  diagnose->add_option("--k-values", diag_opts.k_values, "comma-separated k list");

  auto* export_cmd = app.add_subcommand("export-embeddings", "write item and prototype vectors");
  export_cmd->add_option("--data", export_opts.data, "prepared directory (default: --out)");
  export_cmd->add_option("--checkpoint", export_opts.checkpoint, "checkpoint file");
  export_cmd->add_option("--path", export_opts.path, "output CSV (default: <out>/embeddings.csv)");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx(global, out, err);
    if (*prepare) return cmd_prepare(ctx, prep);
    if (*train_cmd) return cmd_train(ctx, train_flags, train_data);
    if (*evaluate) return cmd_evaluate(ctx, eval_flags, eval_opts);
    if (*sweep_cmd) return cmd_sweep(ctx, sweep_flags, sweep_data);
    if (*diagnose) return cmd_diagnose(ctx, diag_opts);
    if (*export_cmd) return cmd_export(ctx, export_opts);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace protorec
