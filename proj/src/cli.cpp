#include "eqprop/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include "eqprop/config.hpp"
#include "eqprop/data.hpp"
#include "eqprop/errors.hpp"
#include "eqprop/gdu.hpp"
#include "eqprop/training.hpp"

#ifndef EQPROP_VERSION
#define EQPROP_VERSION "0.0.0"
#endif

namespace eqprop {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> subset_train;
  std::optional<std::size_t> subset_test;
  std::optional<std::string> algorithm;
  std::optional<std::string> data_dir;
};

void apply(const Overrides& o, IniConfig& ini) {
  if (o.seed) ini.set("run.seed", std::to_string(*o.seed));
  if (o.threads) ini.set("run.threads", std::to_string(*o.threads));
  if (o.epochs) ini.set("train.epochs", std::to_string(*o.epochs));
  if (o.subset_train) ini.set("data.subset_train", std::to_string(*o.subset_train));
  if (o.subset_test) ini.set("data.subset_test", std::to_string(*o.subset_test));
  if (o.algorithm && *o.algorithm != "both") ini.set("train.algorithm", *o.algorithm);
  if (o.data_dir) ini.set("data.dir", *o.data_dir);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_manifest(const fs::path& dir, const std::string& command, const IniConfig& ini, const RunConfig& rc,
                    const std::vector<std::string>& outputs) {
  json m;
  m["artifact"] = "eqprop";
  m["version"] = EQPROP_VERSION;
  m["command"] = command;
  m["seed"] = rc.train.seed;
  m["threads"] = rc.train.threads;
  m["config"] = ini.to_text();
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  write_text(dir / "config.ini", ini.to_text());
}

void print_table(std::ostream& out, const std::vector<LayerSummary>& rows) {
  out << std::left << std::setw(10) << "layer" << std::setw(26) << "rmse" << std::setw(26) << "sign_agreement"
      << "n_elements\n";
  for (const auto& r : rows)
    out << std::left << std::setw(10) << r.layer << std::setw(26) << fmt17(r.rmse) << std::setw(26)
        << fmt17(r.sign_agreement) << r.n_elements << "\n";
}

int cmd_gdu(const std::string& name, const std::string& config, const fs::path& out_dir, const Overrides& ov,
            std::optional<std::size_t> per_layer, bool enforce, std::ostream& out) {
  IniConfig ini = load_config(config, Command::gdu_check);
  apply(ov, ini);
  const RunConfig rc = resolve(ini, Command::gdu_check);
  const auto model = build_model(rc.train.model);
  const ParamSet params = init_params(*model, rc.train.seed, rc.train.model.init);
  const std::vector<Sample> batch = gdu_batch(rc);

  const ProcessRecord rec = gdu_protocol(*model, params, batch, rc.train.hp, rc.train.seed, rc.train.threads);
  const auto summary = summarize(rec);
  fs::create_directories(out_dir);
  write_curves(curve_rows(rec, per_layer.value_or(rc.gdu.per_layer)), out_dir / "curves.csv");
  write_summary(summary, out_dir / "summary.csv");
  write_manifest(out_dir, name, ini, rc, {"curves.csv", "summary.csv", "config.ini"});

  print_table(out, summary);
  double worst = 0.0;
  bool pass = true;
  for (const auto& r : summary) {
    worst = std::max(worst, r.rmse);
    if (!(r.rmse < rc.gdu.threshold)) pass = false;
  }
  out << "free-phase residual " << fmt17(rec.max_residual) << ", max |dEP + gBPTT| " << fmt17(max_discrepancy(rec))
      << "\n";
  json rec_line;
  rec_line["command"] = name;
  rec_line["model"] = model->id();
  rec_line["status"] = !enforce || pass ? "ok" : "threshold_exceeded";
  rec_line["max_rmse"] = worst;
  rec_line["threshold"] = rc.gdu.threshold;
  rec_line["max_discrepancy"] = max_discrepancy(rec);
  rec_line["residual"] = rec.max_residual;
  rec_line["out"] = out_dir.string();
  out << rec_line.dump() << "\n";
  return !enforce || pass ? kExitOk : kExitThreshold;
}

std::vector<EpochRecord> run_training(const Model& model, ParamSet& params, const TrainConfig& tc, const Datasets& ds,
                                      const fs::path& dir, const IniConfig& ini, std::size_t start_epoch,
                                      std::vector<EpochRecord> history, std::ostream& out) {
  fs::create_directories(dir);
  const fs::path hist_path = dir / "history.csv";
  auto write_history = [&](const std::vector<EpochRecord>& rows) {
    std::ostringstream o;
    o << "epoch,train_error,test_error,wall_seconds\n";
    for (const auto& r : rows)
      o << r.epoch << ',' << fmt17(r.train_error) << ',' << fmt17(r.test_error) << ',' << fmt17(r.wall_seconds) << '\n';
    write_text(hist_path, o.str());
  };
  auto save = [&](const ParamSet& p, std::size_t epochs_done) {
    checkpoint_save({model.id(), ini.to_text(), tc.seed, epochs_done, p}, dir / "checkpoint.bin");
  };
  write_history(history);
  save(params, start_epoch);
  train(model, params, tc, ds.train, ds.test, start_epoch, [&](const EpochRecord& r, const ParamSet& p) {
    history.push_back(r);
    out << algorithm_name(tc.algorithm) << " epoch " << r.epoch << "  train_error " << fmt17(r.train_error)
        << "  test_error " << fmt17(r.test_error) << "  (" << std::fixed << std::setprecision(1) << r.wall_seconds
        << " s)" << std::defaultfloat << std::setprecision(6) << "\n";
    out.flush();
    write_history(history);
    save(p, r.epoch);
  });
  return history;
}

std::vector<EpochRecord> read_history(const fs::path& path) {
  std::vector<EpochRecord> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    EpochRecord r;
    char c;
    std::istringstream ss(line);
    ss >> r.epoch >> c >> r.train_error >> c >> r.test_error >> c >> r.wall_seconds;
    if (!ss) throw ConfigError(path.string() + ": malformed history row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

int cmd_train(const std::string& config, const fs::path& out_dir, const Overrides& ov,
              const std::optional<std::string>& resume, std::ostream& out) {
  IniConfig ini = load_config(config, Command::train);
  apply(ov, ini);
  const bool both = ov.algorithm && *ov.algorithm == "both";
  if (both && resume) throw ConfigError("--resume works with a single algorithm");
  const RunConfig rc = resolve(ini, Command::train);
  const auto model = build_model(rc.train.model);
  rc.train.validate(*model);
  const Datasets ds = load_datasets(rc.data, rc.train.seed);
  out << model->id() << ": " << ds.train.size() << " training, " << ds.test.size() << " test samples\n";

  ParamSet init = init_params(*model, rc.train.seed, rc.train.model.init);
  std::size_t start_epoch = 0;
  std::vector<EpochRecord> prior;
  if (resume) {
    Checkpoint ck = checkpoint_load(*resume, *model);
    init = std::move(ck.params);
    start_epoch = ck.epochs_completed;
    prior = read_history(fs::path(*resume).parent_path() / "history.csv");
    prior.resize(std::min(prior.size(), start_epoch));
  }

  json rec;
  rec["command"] = "train";
  rec["model"] = model->id();
  rec["status"] = "ok";
  std::vector<std::string> outputs;
  const std::vector<Algorithm> algs =
      both ? std::vector<Algorithm>{Algorithm::ep, Algorithm::bptt} : std::vector<Algorithm>{rc.train.algorithm};
  fs::create_directories(out_dir);
  for (Algorithm a : algs) {
    TrainConfig tc = rc.train;
    tc.algorithm = a;
    IniConfig run_ini = ini;
    run_ini.set("train.algorithm", algorithm_name(a));
    const fs::path dir = both ? out_dir / algorithm_name(a) : out_dir;
    ParamSet params = init;
    const auto history = run_training(*model, params, tc, ds, dir, run_ini, start_epoch, prior, out);
    const std::string prefix = both ? algorithm_name(a) + "/" : "";
    outputs.push_back(prefix + "history.csv");
    outputs.push_back(prefix + "checkpoint.bin");
    rec[algorithm_name(a) + "_test_error"] = history.empty() ? json(nullptr) : json(history.back().test_error);
    if (both) write_text(dir / "config.ini", run_ini.to_text());
  }
  outputs.push_back("config.ini");
  write_manifest(out_dir, "train", ini, rc, outputs);
  rec["out"] = out_dir.string();
  out << rec.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint, std::optional<std::size_t> T, const Overrides& ov, std::ostream& out) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint);
  Checkpoint ck = checkpoint_load(checkpoint);
  IniConfig ini = IniConfig::parse(ck.config, checkpoint + " (embedded config)");
  apply(ov, ini);
  const RunConfig rc = resolve(ini, Command::train);
  const auto model = build_model(rc.train.model);
  ck = checkpoint_load(checkpoint, *model);
  const Datasets ds = load_datasets(rc.data, rc.train.seed);
  const std::size_t steps = T.value_or(rc.train.hp.T);
  const double err = evaluate(*model, ck.params, ds.test, steps, rc.train.threads);
  out << model->id() << " after " << ck.epochs_completed << " epochs, T = " << steps << ": test error " << fmt17(err)
      << " on " << ds.test.size() << " samples\n";
  json rec;
  rec["command"] = "eval";
  rec["model"] = model->id();
  rec["status"] = "ok";
  rec["T"] = steps;
  rec["test_error"] = err;
  out << rec.dump() << "\n";
  return kExitOk;
}

int cmd_presets(const std::string& kind, const std::string& show, std::ostream& out) {
  const Command cmd = kind == "train" ? Command::train : Command::gdu_check;
  if (!show.empty()) {
    auto text = preset_text(show, cmd);
    if (!text) throw ConfigError("no " + kind + " preset named '" + show + "'");
    out << *text;
    return kExitOk;
  }
  for (const auto& n : preset_names(cmd)) out << n << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Equilibrium propagation and BPTT for convergent RNNs", "eqprop"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EQPROP_VERSION);

  Overrides ov;
  std::string config, out_dir = "out", checkpoint, kind = "gdu-check", show;
  std::optional<std::size_t> per_layer, T;
  std::optional<std::string> resume;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "config file or preset name")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", ov.seed, "override run.seed");
    sub->add_option("--threads", ov.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--data-dir", ov.data_dir, "dataset root (default $EQPROP_DATA_DIR)");
  };
  auto* gdu = app.add_subcommand("gdu-check", "compare EP updates with BPTT gradients");
  add_common(gdu);
  gdu->add_option("--subset-train", ov.subset_train, "draw the batch from a subset of this size");
  auto* curves = app.add_subcommand("export-curves", "write EP and BPTT processes without a threshold");
  add_common(curves);
  curves->add_option("--per-layer", per_layer, "elements per layer, 0 for all");
  auto* tr = app.add_subcommand("train", "train with EP or BPTT");
  add_common(tr);
  tr->add_option("--algorithm", ov.algorithm, "ep, bptt or both")->check(CLI::IsMember({"ep", "bptt", "both"}));
  tr->add_option("--epochs", ov.epochs, "override train.epochs");
  tr->add_option("--subset-train", ov.subset_train, "training samples");
  tr->add_option("--subset-test", ov.subset_test, "test samples");
  tr->add_option("--resume", resume, "checkpoint to continue from");
  auto* ev = app.add_subcommand("eval", "test error of a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  ev->add_option("--T", T, "relaxation steps (default: the embedded config)");
  ev->add_option("--threads", ov.threads, "worker threads")->check(CLI::PositiveNumber);
  ev->add_option("--subset-test", ov.subset_test, "test samples");
  ev->add_option("--data-dir", ov.data_dir, "dataset root (default $EQPROP_DATA_DIR)");
  auto* ps = app.add_subcommand("presets", "list or print the shipped configs");
  ps->add_option("--command", kind, "gdu-check or train")->check(CLI::IsMember({"gdu-check", "train"}));
  ps->add_option("--show", show, "print one preset");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << EQPROP_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*gdu) return cmd_gdu("gdu-check", config, out_dir, ov, std::nullopt, true, out);
    if (*curves) return cmd_gdu("export-curves", config, out_dir, ov, per_layer, false, out);
    if (*tr) return cmd_train(config, out_dir, ov, resume, out);
    if (*ev) return cmd_eval(checkpoint, T, ov, out);
    if (*ps) return cmd_presets(kind, show, out);
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    out << json{{"status", "diverged"}, {"error", e.what()}}.dump() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    out << json{{"status", "error"}, {"error", e.what()}}.dump() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace eqprop
