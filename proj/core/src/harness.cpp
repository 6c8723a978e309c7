#include "flatdiv/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "flatdiv/checkpoint.hpp"
#include "flatdiv/config.hpp"
#include "flatdiv/csv.hpp"
#include "flatdiv/ensemble.hpp"
#include "flatdiv/metrics.hpp"
#include "flatdiv/presets.hpp"
#include "flatdiv/quad_sim.hpp"
#include "flatdiv/theory.hpp"

namespace flatdiv {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
  std::string config_file;
  std::string preset;
  std::string out_dir = "out";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

ConfigTree build_tree(const CommonOpts& opts) {
  ConfigTree tree;
  if (!opts.preset.empty())
    for (const auto& [key, value] : preset_assignments(opts.preset)) tree.set(key, value);
  if (!opts.config_file.empty()) tree.load_file(opts.config_file);
  for (const auto& assignment : opts.sets) tree.set_assignment(assignment);
  if (opts.seed) tree.set("master_seed", std::to_string(*opts.seed));
  return tree;
}

struct RunContext {
  fs::path out;
  ConfigTree tree;
  std::uint64_t master_seed = 13;
  int workers = 1;
  std::vector<std::pair<std::string, int>> files;  // relative path, row/record count

  void note_file(const fs::path& path, int rows) {
    files.emplace_back(fs::relative(path, out).string(), rows);
  }

  /// Writes the resolved-config snapshot and the run manifest.
  void finalize() {
    tree.reject_unknown();
    const std::string snapshot = tree.resolved_snapshot();
    {
      std::ofstream os(out / "resolved_config.txt");
      os << snapshot;
    }
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(snapshot)));
    json manifest;
    manifest["config_hash"] = hash_hex;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof ts, "%FT%TZ", std::gmtime(&now));
    manifest["timestamp"] = ts;
    manifest["tool_version"] = kToolVersion;
    manifest["files"] = json::array();
    for (const auto& [path, rows] : files) manifest["files"].push_back({{"path", path}, {"rows", rows}});
    std::ofstream os(out / "manifest.json");
    os << manifest.dump(2) << "\n";
  }
};

RunContext make_context(const CommonOpts& opts) {
  RunContext ctx;
  ctx.tree = build_tree(opts);
  ctx.out = fs::path(opts.out_dir);
  fs::create_directories(ctx.out);
  ctx.master_seed = ctx.tree.get_uint64("master_seed", 13);
  ctx.workers = static_cast<int>(ctx.tree.get_int("parallelism", 1));
  if (ctx.workers < 1) throw ConfigError("parallelism must be >= 1");
  return ctx;
}

std::string opt_cell(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? format_double(*v) : std::string();
}

// ---------------------------------------------------------------- theory-curve

int cmd_theory_curve(RunContext& ctx) {
  const auto& t = ctx.tree;
  TheoryConfig base;
  base.params.n_tr = t.get_int("theory.n_tr", 3000);
  base.params.d_in = t.get_int("theory.d_in", 150);
  base.params.eta = t.get_double("theory.eta", 0.005);
  base.params.S = 1;
  base.sigma = t.get_double("theory.sigma", 1.0);
  base.theta_star_norm = t.get_double("theory.theta_star_norm", 1.0);
  base.rho0 = t.get_double("theory.rho0", 0.05);
  base.k = static_cast<int>(t.get_int("theory.k", 8));
  const auto S = t.get_int("theory.S", 10);
  const auto rho_grid = t.get_double_list("theory.rho_grid", {0.3, 0.35, 0.4, 0.45, 0.5});
  const auto variants_str = t.get_string("theory.variants", "sam,sharpbalance");
  if (rho_grid.empty()) throw ConfigError("theory.rho_grid: empty grid");
  for (double r : rho_grid)
    if (r < 0.0) throw ConfigError("theory.rho_grid: rho must be >= 0");
  if (base.k < 1) throw ConfigError("theory.k: must be >= 1");
  if (S < 1) throw ConfigError("theory.S: must be >= 1");
  PhiParams check = base.params;
  check.S = S;
  check.validate();

  CsvWriter csv(ctx.out / "theory_curve.csv",
                {"variant", "rho", "k", "diversity", "sharp_lower", "sharp_upper"});
  std::vector<TheoryPoint> sam_curve, sb_curve;
  for (const auto& name : {std::string("sam"), std::string("sharpbalance")}) {
    if (variants_str.find(name) == std::string::npos) continue;
    TheoryConfig cfg = base;
    cfg.params.S = name == "sharpbalance" ? S : 1;
    auto curve = tradeoff_curve(cfg, rho_grid,
                                name == "sharpbalance" ? TrainVariant::SharpBalance : TrainVariant::Sam);
    for (const auto& pt : curve) {
      if (!pt.error.empty())
        std::cerr << "theory-curve: " << name << " rho=" << pt.rho << ": " << pt.error << "\n";
      csv.write_row({std::string(to_string(pt.variant)), format_double(pt.rho),
                     std::to_string(pt.k), opt_cell(pt.diversity), opt_cell(pt.sharp_lower),
                     opt_cell(pt.sharp_upper)});
    }
    (name == "sharpbalance" ? sb_curve : sam_curve) = std::move(curve);
  }
  ctx.note_file(ctx.out / "theory_curve.csv", csv.rows());

  if (!sam_curve.empty() && !sb_curve.empty()) {
    const DominanceResult dom = check_dominance(sam_curve, sb_curve);
    std::cout << "sharpbalance dominates at matched sharpness: "
              << (dom.has_overlap && dom.dominates ? "yes" : "no")
              << (dom.strict_interior ? " (strict at interior points)" : "") << "\n";
  }
  ctx.finalize();
  return 0;
}

// ----------------------------------------------------------------------- verify

SharpnessMethod method_from_string(const std::string& s) {
  if (s == "trust_region") return SharpnessMethod::TrustRegion;
  if (s == "pga") return SharpnessMethod::Pga;
  throw ConfigError("verify.method: expected trust_region|pga, got '" + s + "'");
}

int cmd_verify(RunContext& ctx) {
  const auto& t = ctx.tree;
  VerifySweep sweep;
  sweep.n_tr = t.get_int("verify.n_tr", 3000);
  sweep.d_in = t.get_int("verify.d_in", 150);
  sweep.n_te = t.get_int("verify.n_te", 1000);
  sweep.S = t.get_int("verify.S", 1);
  sweep.sigma = t.get_double("verify.sigma", 1.0);
  sweep.theta_star_norm = t.get_double("verify.theta_star_norm", 1.0);
  sweep.rho0 = t.get_double("verify.rho0", 0.05);
  sweep.div_rel_tol = t.get_double("verify.div_rel_tol", 0.10);
  sweep.k_grid = t.get_int_list("verify.k_grid", {2});
  sweep.eta_grid = t.get_double_list("verify.eta_grid", {0.1});
  sweep.rho_grid = t.get_double_list("verify.rho_grid", {0.4});
  sweep.n_data = static_cast<int>(t.get_int("verify.n_data", 50));
  sweep.n_init = static_cast<int>(t.get_int("verify.n_init", 50));
  sweep.method = method_from_string(t.get_string("verify.method", "trust_region"));
  sweep.require_contraction = t.get_bool("verify.require_contraction", false);
  if (sweep.k_grid.empty() || sweep.eta_grid.empty() || sweep.rho_grid.empty())
    throw ConfigError("verify: empty grid (k_grid/eta_grid/rho_grid)");
  PhiParams check{sweep.n_tr, sweep.d_in, 0.0, 0.0, sweep.S};
  check.validate();

  const auto rows = verify_theorems(sweep, RngStream(ctx.master_seed, 0), ctx.workers);

  CsvWriter csv(ctx.out / "verify.csv",
                {"variant", "n_tr", "d_in", "n_te", "S", "k", "eta", "rho", "rho0",
                 "diversity_mc", "diversity_se", "diversity_theory", "sharp_mc", "sharp_se",
                 "sharp_lower", "sharp_upper", "pass"});
  int failures = 0;
  for (const auto& row : rows) {
    csv.write_row({std::string(to_string(row.variant)), std::to_string(sweep.n_tr),
                   std::to_string(sweep.d_in), std::to_string(sweep.n_te),
                   std::to_string(sweep.S), std::to_string(row.k), format_double(row.eta),
                   format_double(row.rho), format_double(sweep.rho0),
                   format_double(row.diversity_mc), format_double(row.diversity_se),
                   format_double(row.diversity_theory), format_double(row.sharp_mc),
                   format_double(row.sharp_se),
                   std::isfinite(row.sharp_lower) ? format_double(row.sharp_lower) : std::string(),
                   format_double(row.sharp_upper), row.pass ? "1" : "0"});
    if (!row.pass) ++failures;
    const double rel = row.diversity_theory != 0.0
                           ? std::abs(row.diversity_mc / row.diversity_theory - 1.0)
                           : std::abs(row.diversity_mc);
    std::cout << (row.pass ? "PASS" : "FAIL") << " k=" << row.k << " eta=" << row.eta
              << " rho=" << row.rho;
    if (row.error.empty()) {
      std::cout << ": diversity rel err " << format_double(rel) << " ("
                << (row.diversity_pass ? "ok" : "out of tol") << "), sharpness "
                << format_double(row.sharp_mc) << " vs ["
                << (std::isfinite(row.sharp_lower) ? format_double(row.sharp_lower) : "-inf")
                << ", " << format_double(row.sharp_upper) << "] +- 2se ("
                << (row.sharpness_pass ? "ok" : "out of bounds") << ")\n";
    } else {
      std::cout << ": error: " << row.error << "\n";
    }
  }
  std::cout << (rows.size() - static_cast<std::size_t>(failures)) << "/" << rows.size()
            << " cells pass\n";
  ctx.note_file(ctx.out / "verify.csv", csv.rows());
  ctx.finalize();
  return failures == 0 ? 0 : 3;
}

// ------------------------------------------------------------------------ train

struct TrainSetup {
  SyntheticTaskConfig task;
  EnsembleConfig ens;
  SharpnessQuery query;
};

SyntheticTaskConfig read_task_config(const ConfigTree& t, std::uint64_t default_seed) {
  SyntheticTaskConfig cfg;
  cfg.seed = t.get_uint64("task.seed", default_seed);
  cfg.n_train = static_cast<int>(t.get_int("task.n_train", 2000));
  cfg.n_test = static_cast<int>(t.get_int("task.n_test", 1000));
  cfg.d_in = static_cast<int>(t.get_int("task.d_in", 20));
  cfg.classes = static_cast<int>(t.get_int("task.classes", 5));
  cfg.separation = t.get_double("task.separation", 3.0);
  cfg.noise = t.get_double("task.noise", 1.2);
  cfg.ood_base_scale = t.get_double("task.ood_base_scale", 0.6);
  cfg.severities = static_cast<int>(t.get_int("task.severities", 5));
  cfg.validate();
  return cfg;
}

EnsembleConfig read_ensemble_config(const ConfigTree& t) {
  EnsembleConfig cfg;
  cfg.m = static_cast<int>(t.get_int("train.m", 3));
  cfg.optimizer = optimizer_from_string(t.get_string("train.optimizer", "sam"));
  cfg.rho = t.get_double("train.rho", 0.2);
  cfg.weight_decay = t.get_double("train.weight_decay", 5e-4);
  cfg.lr.base = t.get_double("train.lr", 0.1);
  cfg.lr.decay_epochs = t.get_int_list("train.lr_decay_epochs", {});
  cfg.lr.decay_factor = t.get_double("train.lr_decay_factor", 0.1);
  cfg.epochs = static_cast<int>(t.get_int("train.epochs", 50));
  cfg.batch_size = static_cast<int>(t.get_int("train.batch_size", 32));
  cfg.hidden = static_cast<int>(t.get_int("train.hidden", 64));
  cfg.k_frac = t.get_double("train.k_frac", 0.4);
  cfg.T_d = static_cast<int>(t.get_int("train.T_d", 10));
  const std::string combine = t.get_string("train.combine", "probs");
  if (combine != "probs" && combine != "logits")
    throw ConfigError("train.combine: expected probs|logits");
  cfg.combine_logits = combine == "logits";
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return cfg;
}

SharpnessQuery read_sharpness_query(const ConfigTree& t) {
  SharpnessQuery q;
  q.rho0 = t.get_double("sharpness.rho0", 0.5);
  const std::string norm = t.get_string("sharpness.norm", "l2");
  if (norm == "l2")
    q.norm = SharpnessQuery::L2Adaptive;
  else if (norm == "linf")
    q.norm = SharpnessQuery::LinfAdaptive;
  else if (norm == "avg")
    q.norm = SharpnessQuery::AverageCase;
  else
    throw ConfigError("sharpness.norm: expected l2|linf|avg");
  q.n_batches = static_cast<int>(t.get_int("sharpness.n_batches", 100));
  q.batch_size = static_cast<int>(t.get_int("sharpness.batch_size", 5));
  q.ascent_steps = static_cast<int>(t.get_int("sharpness.ascent_steps", 20));
  const double step = t.get_double("sharpness.ascent_step_size", 0.0);
  if (step > 0.0) q.ascent_step_size = step;
  q.mc_samples = static_cast<int>(t.get_int("sharpness.mc_samples", 10));
  return q;
}

struct EnsembleRun {
  TrainedEnsemble trained;
  std::vector<SplitMetrics> splits;       // [0]=id, [s]=ood severity s
  std::vector<double> member_sharpness;   // on the training set
  double sharpness_mean = 0.0;
};

EnsembleRun run_one_ensemble(const SyntheticTask& task, const EnsembleConfig& cfg,
                             const SharpnessQuery& query, RngStream rng, int workers) {
  EnsembleRun run;
  run.trained = train_ensemble(task, cfg, rng.child(0), workers);
  run.splits.push_back(
      evaluate_split(run.trained.members, task.X_test, task.y_test, cfg.combine_logits));
  for (const auto& X : task.X_ood)
    run.splits.push_back(evaluate_split(run.trained.members, X, task.y_test, cfg.combine_logits));
  for (std::size_t i = 0; i < run.trained.members.size(); ++i) {
    const auto& m = run.trained.members[i];
    LossModel lm = make_loss_model(m, task.X_train, task.y_train);
    run.member_sharpness.push_back(
        adaptive_sharpness(m.flatten(), lm, query, rng.child(1).child(i)).value);
    run.sharpness_mean += run.member_sharpness.back();
  }
  run.sharpness_mean /= static_cast<double>(run.trained.members.size());
  return run;
}

std::string split_name(std::size_t idx) {
  return idx == 0 ? "id" : "ood" + std::to_string(idx);
}

json metric_report(const std::string& metric, double value, const json& config,
                   std::uint64_t seed, int member_count, Index sample_count) {
  return json{{"metric", metric},       {"value", value},
              {"config", config},       {"seed", seed},
              {"member_count", member_count}, {"sample_count", sample_count}};
}

void append_split_reports(json& reports, const EnsembleRun& run, const json& base_cfg,
                          std::uint64_t seed, int m, Index n_samples) {
  for (std::size_t s = 0; s < run.splits.size(); ++s) {
    const SplitMetrics& sm = run.splits[s];
    json cfg = base_cfg;
    cfg["split"] = split_name(s);
    reports.push_back(metric_report("member_acc_mean", sm.member_acc_mean, cfg, seed, m, n_samples));
    reports.push_back(metric_report("ensemble_acc", sm.ensemble_acc, cfg, seed, m, n_samples));
    reports.push_back(metric_report("der", sm.der, cfg, seed, m, n_samples));
    reports.push_back(metric_report("kl_diversity", sm.kl, cfg, seed, m, n_samples));
    reports.push_back(metric_report("variance_diversity", sm.var_div, cfg, seed, m, n_samples));
    reports.push_back(metric_report("eir", sm.eir, cfg, seed, m, n_samples));
  }
}

std::vector<std::string> split_metrics_cells(const SplitMetrics& sm) {
  return {format_double(sm.member_acc_mean), format_double(sm.ensemble_acc),
          format_double(sm.der),             format_double(sm.kl),
          format_double(sm.var_div),         format_double(sm.eir)};
}

int cmd_train(RunContext& ctx) {
  const auto& t = ctx.tree;
  const std::string mode = t.get_string("train.mode", "single");
  const EnsembleConfig ens = read_ensemble_config(t);
  const SharpnessQuery query = read_sharpness_query(t);
  RngStream root(ctx.master_seed, 1);

  if (mode == "single") {
    const SyntheticTaskConfig task_cfg = read_task_config(t, ctx.master_seed);
    const int ensembles = static_cast<int>(t.get_int("train.ensembles", 1));
    if (ensembles < 1) throw ConfigError("train.ensembles: must be >= 1");
    const SyntheticTask task = make_synthetic_task(task_cfg);

    CsvWriter csv(ctx.out / "train.csv",
                  {"ensemble", "optimizer", "rho", "split", "member_acc_mean", "ensemble_acc",
                   "der", "kl", "var_div", "eir", "sharpness_mean"});
    json reports = json::array();
    std::vector<EnsembleRun> runs;
    for (int e = 0; e < ensembles; ++e) {
      EnsembleRun run = run_one_ensemble(task, ens, query, root.child(static_cast<std::uint64_t>(e)),
                                         ctx.workers);
      for (std::size_t s = 0; s < run.splits.size(); ++s) {
        std::vector<std::string> cells = {std::to_string(e), to_string(ens.optimizer),
                                          format_double(ens.rho), split_name(s)};
        for (auto& c : split_metrics_cells(run.splits[s])) cells.push_back(std::move(c));
        cells.push_back(format_double(run.sharpness_mean));
        csv.write_row(cells);
      }
      json base_cfg{{"optimizer", to_string(ens.optimizer)}, {"rho", ens.rho}, {"ensemble", e}};
      append_split_reports(reports, run, base_cfg, ctx.master_seed, ens.m, task.X_test.rows());
      json sh_cfg = base_cfg;
      sh_cfg["split"] = "train";
      sh_cfg["rho0"] = query.rho0;
      for (std::size_t i = 0; i < run.member_sharpness.size(); ++i) {
        json c = sh_cfg;
        c["member"] = i;
        reports.push_back(metric_report("adaptive_sharpness", run.member_sharpness[i], c,
                                        ctx.master_seed, ens.m, task.X_train.rows()));
      }
      const fs::path ens_dir = ctx.out / ("ens" + std::to_string(e));
      fs::create_directories(ens_dir);
      for (std::size_t i = 0; i < run.trained.members.size(); ++i) {
        const fs::path ck = ens_dir / ("member" + std::to_string(i) + ".ckpt");
        save_checkpoint(run.trained.members[i], ck);
        ctx.note_file(ck, 0);
      }
      std::cout << "ensemble " << e << ": id acc " << format_double(run.splits[0].ensemble_acc)
                << ", ood3 acc " << format_double(run.splits[3].ensemble_acc) << "\n";
      runs.push_back(std::move(run));
    }
    ctx.note_file(ctx.out / "train.csv", csv.rows());
    {
      std::ofstream os(ctx.out / "metrics.json");
      os << reports.dump(2) << "\n";
      ctx.note_file(ctx.out / "metrics.json", static_cast<int>(reports.size()));
    }
    if (ensembles > 1) {
      CsvWriter summary(ctx.out / "train_summary.csv", {"split", "metric", "mean", "std"});
      const std::vector<std::string> names = {"member_acc_mean", "ensemble_acc", "der",
                                              "kl",              "var_div",      "eir"};
      for (std::size_t s = 0; s < runs[0].splits.size(); ++s) {
        for (std::size_t mi = 0; mi < names.size(); ++mi) {
          std::vector<double> vals;
          for (const auto& run : runs) {
            const SplitMetrics& sm = run.splits[s];
            const double v[] = {sm.member_acc_mean, sm.ensemble_acc, sm.der,
                                sm.kl,              sm.var_div,      sm.eir};
            vals.push_back(v[mi]);
          }
          double mean = 0.0;
          for (double v : vals) mean += v;
          mean /= static_cast<double>(vals.size());
          double var = 0.0;
          for (double v : vals) var += (v - mean) * (v - mean);
          const double sd = vals.size() > 1 ? std::sqrt(var / (static_cast<double>(vals.size()) - 1.0)) : 0.0;
          summary.write_row({split_name(s), names[mi], format_double(mean), format_double(sd)});
        }
      }
      ctx.note_file(ctx.out / "train_summary.csv", summary.rows());
    }
    ctx.finalize();
    return 0;
  }

  if (mode == "rho_sweep") {
    const int sweeps = static_cast<int>(t.get_int("train.sweeps", 5));
    const auto rho_grid = t.get_double_list("train.rho_grid", {0.0, 0.01, 0.05, 0.1, 0.2, 0.3});
    const int der_severity = static_cast<int>(t.get_int("train.der_severity", 3));
    if (sweeps < 1) throw ConfigError("train.sweeps: must be >= 1");
    if (rho_grid.empty()) throw ConfigError("train.rho_grid: empty grid");
    SyntheticTaskConfig task_cfg = read_task_config(t, ctx.master_seed);

    CsvWriter csv(ctx.out / "tradeoff.csv",
                  {"sweep", "rho", "sharpness_mean", "der", "eir", "id_acc", "ood_acc",
                   "member_acc_mean"});
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      task_cfg.seed = root.child(2).child(static_cast<std::uint64_t>(sweep)).next_u64();
      const SyntheticTask task = make_synthetic_task(task_cfg);
      for (double rho : rho_grid) {
        EnsembleConfig cfg = ens;
        cfg.rho = rho;
        if (rho == 0.0 && cfg.optimizer == Optimizer::Sam) cfg.optimizer = Optimizer::Sgd;
        EnsembleRun run = run_one_ensemble(task, cfg, query,
                                           root.child(3).child(static_cast<std::uint64_t>(sweep)),
                                           ctx.workers);
        const SplitMetrics& ood = run.splits[static_cast<std::size_t>(der_severity)];
        csv.write_row({std::to_string(sweep), format_double(rho),
                       format_double(run.sharpness_mean), format_double(ood.der),
                       format_double(ood.eir), format_double(run.splits[0].ensemble_acc),
                       format_double(ood.ensemble_acc), format_double(ood.member_acc_mean)});
        std::cout << "sweep " << sweep << " rho=" << format_double(rho) << ": sharpness "
                  << format_double(run.sharpness_mean) << ", der " << format_double(ood.der)
                  << "\n";
      }
    }
    ctx.note_file(ctx.out / "tradeoff.csv", csv.rows());
    ctx.finalize();
    return 0;
  }

  if (mode == "paired") {
    const int pairs = static_cast<int>(t.get_int("train.pairs", 5));
    const int der_severity = static_cast<int>(t.get_int("train.der_severity", 3));
    if (pairs < 1) throw ConfigError("train.pairs: must be >= 1");
    SyntheticTaskConfig task_cfg = read_task_config(t, ctx.master_seed);

    CsvWriter csv(ctx.out / "paired.csv",
                  {"pair", "optimizer", "rho", "sharpness_mean", "der", "ood_acc", "id_acc"});
    double der_diff = 0.0, acc_diff = 0.0;
    for (int p = 0; p < pairs; ++p) {
      task_cfg.seed = root.child(4).child(static_cast<std::uint64_t>(p)).next_u64();
      const SyntheticTask task = make_synthetic_task(task_cfg);
      RngStream pair_rng = root.child(5).child(static_cast<std::uint64_t>(p));
      SplitMetrics ood_by_arm[2];
      for (int arm = 0; arm < 2; ++arm) {
        EnsembleConfig cfg = ens;
        cfg.optimizer = arm == 0 ? Optimizer::Sam : Optimizer::SharpBalance;
        EnsembleRun run = run_one_ensemble(task, cfg, query, pair_rng, ctx.workers);
        const SplitMetrics& ood = run.splits[static_cast<std::size_t>(der_severity)];
        ood_by_arm[arm] = ood;
        csv.write_row({std::to_string(p), to_string(cfg.optimizer), format_double(cfg.rho),
                       format_double(run.sharpness_mean), format_double(ood.der),
                       format_double(ood.ensemble_acc),
                       format_double(run.splits[0].ensemble_acc)});
      }
      der_diff += ood_by_arm[1].der - ood_by_arm[0].der;
      acc_diff += ood_by_arm[1].ensemble_acc - ood_by_arm[0].ensemble_acc;
      std::cout << "pair " << p << ": der sam=" << format_double(ood_by_arm[0].der)
                << " sharpbalance=" << format_double(ood_by_arm[1].der) << "\n";
    }
    std::cout << "mean der diff (sharpbalance - sam): " << format_double(der_diff / pairs)
              << ", mean ood acc diff: " << format_double(acc_diff / pairs) << "\n";
    ctx.note_file(ctx.out / "paired.csv", csv.rows());
    ctx.finalize();
    return 0;
  }

  throw ConfigError("train.mode: expected single|rho_sweep|paired, got '" + mode + "'");
}

// ---------------------------------------------------------------------- measure

int cmd_measure(RunContext& ctx) {
  const auto& t = ctx.tree;
  const std::string ckpt_list = t.get_string("measure.checkpoints", "");
  if (ckpt_list.empty()) throw ConfigError("measure.checkpoints: required (comma-separated paths)");
  std::vector<std::string> paths;
  {
    std::size_t start = 0;
    while (start <= ckpt_list.size()) {
      auto comma = ckpt_list.find(',', start);
      auto piece = comma == std::string::npos ? ckpt_list.substr(start)
                                              : ckpt_list.substr(start, comma - start);
      auto first = piece.find_first_not_of(" \t");
      if (first != std::string::npos) {
        auto last = piece.find_last_not_of(" \t");
        paths.push_back(piece.substr(first, last - first + 1));
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  const SyntheticTaskConfig task_cfg = read_task_config(t, ctx.master_seed);
  const SharpnessQuery query = read_sharpness_query(t);
  const std::string split = t.get_string("measure.split", "test");
  const auto metrics_str = t.get_string(
      "measure.metrics", "accuracy,variance_diversity,der,kl_diversity,eir,sharpness_l2");
  const std::string combine = t.get_string("measure.combine", "probs");
  if (combine != "probs" && combine != "logits")
    throw ConfigError("measure.combine: expected probs|logits");

  const SyntheticTask task = make_synthetic_task(task_cfg);
  std::vector<MlpModel> members;
  for (const auto& p : paths) {
    MlpModel m = load_checkpoint(p);
    if (m.d_in() != task.cfg.d_in || m.classes() != task.cfg.classes)
      throw ConfigError("checkpoint " + p + " dims (d_in=" + std::to_string(m.d_in()) +
                        ", classes=" + std::to_string(m.classes()) +
                        ") incompatible with task config");
    members.push_back(std::move(m));
  }

  const DenseMatrix* X = &task.X_test;
  const std::vector<int>* y = &task.y_test;
  if (split == "train") {
    X = &task.X_train;
    y = &task.y_train;
  } else if (split.rfind("ood", 0) == 0) {
    const int sev = std::stoi(split.substr(3));
    if (sev < 1 || sev > static_cast<int>(task.X_ood.size()))
      throw ConfigError("measure.split: severity out of range: " + split);
    X = &task.X_ood[static_cast<std::size_t>(sev - 1)];
  } else if (split != "test") {
    throw ConfigError("measure.split: expected train|test|ood<1..n>");
  }

  json reports = json::array();
  json base_cfg{{"split", split}, {"combine", combine}, {"checkpoints", paths}};
  const SplitMetrics sm = evaluate_split(members, *X, *y, combine == "logits");
  const int m = static_cast<int>(members.size());
  RngStream rng(ctx.master_seed, 2);
  for (const auto& metric : {std::string("accuracy"), std::string("variance_diversity"),
                             std::string("der"), std::string("kl_diversity"), std::string("eir"),
                             std::string("sharpness_l2"), std::string("sharpness_linf"),
                             std::string("sharpness_avg")}) {
    if (metrics_str.find(metric) == std::string::npos) continue;
    if (metric == "accuracy") {
      reports.push_back(metric_report("ensemble_acc", sm.ensemble_acc, base_cfg, ctx.master_seed,
                                      m, X->rows()));
      reports.push_back(metric_report("member_acc_mean", sm.member_acc_mean, base_cfg,
                                      ctx.master_seed, m, X->rows()));
    } else if (metric == "variance_diversity") {
      reports.push_back(metric_report(metric, sm.var_div, base_cfg, ctx.master_seed, m, X->rows()));
    } else if (metric == "der") {
      reports.push_back(metric_report(metric, sm.der, base_cfg, ctx.master_seed, m, X->rows()));
    } else if (metric == "kl_diversity") {
      reports.push_back(metric_report(metric, sm.kl, base_cfg, ctx.master_seed, m, X->rows()));
    } else if (metric == "eir") {
      reports.push_back(metric_report(metric, sm.eir, base_cfg, ctx.master_seed, m, X->rows()));
    } else {
      SharpnessQuery q = query;
      if (metric == "sharpness_linf") q.norm = SharpnessQuery::LinfAdaptive;
      if (metric == "sharpness_avg") q.norm = SharpnessQuery::AverageCase;
      // sharpness is always measured on the training set
      for (std::size_t i = 0; i < members.size(); ++i) {
        LossModel lm = make_loss_model(members[i], task.X_train, task.y_train);
        const double v =
            adaptive_sharpness(members[i].flatten(), lm, q, rng.child(i).child(fnv1a_hash(metric)))
                .value;
        json c = base_cfg;
        c["member"] = i;
        c["rho0"] = q.rho0;
        c["split"] = "train";
        reports.push_back(metric_report(metric, v, c, ctx.master_seed, m, task.X_train.rows()));
      }
    }
  }
  std::ofstream os(ctx.out / "metrics.json");
  os << reports.dump(2) << "\n";
  ctx.note_file(ctx.out / "metrics.json", static_cast<int>(reports.size()));
  ctx.finalize();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"flatdiv: sharpness-diversity trade-off laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_file, "config file (INI-style sections)");
    sub->add_option("--set", opts.sets, "override, key=value (repeatable)");
    sub->add_option("--preset", opts.preset, "named preset");
    std::uint64_t* seed_slot = nullptr;
    sub->add_option_function<std::uint64_t>(
        "--seed", [&opts](const std::uint64_t& s) { opts.seed = s; }, "master seed");
    (void)seed_slot;
    sub->add_option("--out", opts.out_dir, "output directory");
  };
  CLI::App* c_theory = app.add_subcommand("theory-curve", "analytic trade-off curves");
  CLI::App* c_verify = app.add_subcommand("verify", "Monte-Carlo verification of Theorems 1/2");
  CLI::App* c_train = app.add_subcommand("train", "train toy MLP ensembles");
  CLI::App* c_measure = app.add_subcommand("measure", "recompute metrics on stored checkpoints");
  for (CLI::App* sub : {c_theory, c_verify, c_train, c_measure}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunContext ctx = make_context(opts);
    if (c_theory->parsed()) return cmd_theory_curve(ctx);
    if (c_verify->parsed()) return cmd_verify(ctx);
    if (c_train->parsed()) return cmd_train(ctx);
    if (c_measure->parsed()) return cmd_measure(ctx);
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("flatdiv");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace flatdiv
