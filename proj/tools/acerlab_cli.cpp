// Command line driver: train / eval / sweep-error / sweep-hyper /
// inspect-snapshot.  A JSON config file can seed any experiment options and
// individual flags override it.  Outputs land in one directory per run.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "acerlab/harness.hpp"

namespace fs = std::filesystem;
using namespace acerlab;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string ontology = "toy";
  std::string out_dir;

  // override markers: CLI11 counts how often a flag was given
  ExperimentConfig cfg;
};

// Attach the shared experiment flags to a subcommand.  Returns the option
// pointers needed to tell "flag given" from "default value".
void add_common(CLI::App* app, CommonOpts& o) {
  app->add_option("--config", o.config_path, "JSON config file (flags override it)")
      ->check(CLI::ExistingFile);
  app->add_option("--ontology", o.ontology, "toy | caminfo | path to an ontology JSON");
  app->add_option("--out", o.out_dir, "output directory (default: runs/<config hash>)");
  app->add_option("--agent", o.cfg.agent, "acer | gpsarsa | random");
  app->add_option("--mode", [&o](const std::vector<std::string>& v) {
        if (v[0] == "master") o.cfg.mode = ActionMode::master;
        else if (v[0] == "summary") o.cfg.mode = ActionMode::summary;
        else throw CLI::ValidationError("--mode", "expected summary or master");
        return true;
      },
      "summary | master");
  app->add_option("--error-rate", o.cfg.error_rate, "semantic error rate during training");
  app->add_flag("--no-mask", [&o](std::int64_t) { o.cfg.mask_enabled = false; },
                "disable the execution mask");
  app->add_option("--total-dialogues", o.cfg.total_dialogues);
  app->add_option("--milestones", o.cfg.milestones);
  app->add_option("--eval-dialogues", o.cfg.eval_dialogues);
  app->add_option("--seeds", o.cfg.n_seeds, "number of seeds");
  app->add_option("--base-seed", o.cfg.base_seed);
  app->add_option("--alpha", o.cfg.hyper.alpha);
  app->add_option("--beta", o.cfg.hyper.beta);
  app->add_option("--gamma", o.cfg.hyper.gamma);
  app->add_option("--delta", o.cfg.hyper.delta);
  app->add_option("--c", o.cfg.hyper.c);
  app->add_option("--lambda", o.cfg.hyper.lambda);
  app->add_option("--n", o.cfg.hyper.n, "gradient steps per dialogue");
  app->add_option("--batch", o.cfg.hyper.batch_size);
  app->add_option("--replay", o.cfg.hyper.replay_capacity);
  app->add_option("--gp-nu", o.cfg.gp.nu);
  app->add_option("--gp-sigma2", o.cfg.gp.sigma2);
}

// The config file is loaded before the flags are parsed, so the file sets
// the defaults and any flag given on the command line overrides it.
ExperimentConfig config_file_defaults(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
  }
  if (path.empty()) return ExperimentConfig{};
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return ExperimentConfig::from_json(j);
}

Ontology load_ontology(const std::string& spec) {
  if (spec == "toy") return Ontology::toy();
  if (spec == "caminfo") return Ontology::caminfo_like();
  if (!fs::exists(spec)) throw config_error("ontology file not found: " + spec);
  std::ifstream in(spec);
  nlohmann::json j;
  in >> j;
  return Ontology::from_json(j);
}

fs::path resolve_out_dir(const CommonOpts& o, const ExperimentConfig& cfg) {
  if (!o.out_dir.empty()) return o.out_dir;
  const std::size_t h = std::hash<std::string>{}(cfg.to_json().dump() + o.ontology);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016zx", h);
  return fs::path("runs") / (cfg.agent + "-" + buf);
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p, std::ios::binary);
  out << contents;
  if (!out) throw input_error("cannot write " + p.string());
}

int report_seed_errors(const ExperimentResult& res) {
  int bad = 0;
  for (std::size_t i = 0; i < res.seed_errors.size(); ++i)
    if (!res.seed_errors[i].empty()) {
      std::cerr << "seed " << i << " failed: " << res.seed_errors[i] << "\n";
      ++bad;
    }
  return bad;
}

int cmd_train(const CommonOpts& o, const ExperimentConfig& cfg) {
  Ontology ont = load_ontology(o.ontology);
  fs::path out = resolve_out_dir(o, cfg);
  fs::create_directories(out);
  ExperimentResult res = run_experiment(cfg, ont);
  write_file(out / "milestones.csv", milestone_csv(res));
  write_file(out / "manifest.json", experiment_manifest(res, o.ontology).dump(2) + "\n");
  if (cfg.agent == "acer") {
    for (std::size_t s = 0; s < res.seeds.size(); ++s) {
      if (!res.seed_errors[s].empty()) continue;
      char name[32];
      std::snprintf(name, sizeof name, "seed_%02zu.net", s);
      std::ofstream snap(out / name, std::ios::binary);
      res.seeds[s].final_params.save(snap);
    }
  }
  std::cout << out.string() << "\n";
  return report_seed_errors(res) == 0 ? 0 : 1;
}

std::vector<NetworkParams> load_nets(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".net") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<NetworkParams> nets;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    nets.push_back(NetworkParams::load(in));
  }
  if (nets.empty()) throw input_error("no .net snapshots in " + dir.string());
  return nets;
}

int cmd_sweep_error(const CommonOpts& o, const ExperimentConfig& cfg, const std::string& from,
                    const std::vector<double>& rates_in) {
  Ontology ont = load_ontology(o.ontology);
  Vec rates(rates_in.begin(), rates_in.end());
  if (rates.empty())
    for (int i = 0; i <= 10; ++i) rates.push_back(0.05 * i);

  std::vector<NetworkParams> nets;
  ExperimentResult res;
  bool trained_here = false;
  if (!from.empty()) {
    nets = load_nets(from);
  } else {
    if (cfg.agent != "acer") throw config_error("sweep-error trains acer networks; use --from for others");
    res = run_experiment(cfg, ont);
    trained_here = true;
    for (std::size_t s = 0; s < res.seeds.size(); ++s)
      if (res.seed_errors[s].empty()) nets.push_back(res.seeds[s].final_params);
    if (nets.empty()) throw input_error("all training seeds failed");
  }
  fs::path out = resolve_out_dir(o, cfg);
  fs::create_directories(out);
  auto rows = error_rate_sweep(cfg, ont, nets, rates);
  write_file(out / "sweep.csv", sweep_csv(rows));
  if (trained_here) {
    write_file(out / "milestones.csv", milestone_csv(res));
    write_file(out / "manifest.json", experiment_manifest(res, o.ontology).dump(2) + "\n");
  }
  std::cout << out.string() << "\n";
  return trained_here && report_seed_errors(res) > 0 ? 1 : 0;
}

int cmd_sweep_hyper(const CommonOpts& o, ExperimentConfig cfg, const std::string& param,
                    const std::vector<double>& values) {
  if (values.empty()) throw config_error("sweep-hyper needs --values");
  Ontology ont = load_ontology(o.ontology);
  fs::path out = resolve_out_dir(o, cfg);
  fs::create_directories(out);
  std::string csv =
      param +
      ",success_mean,success_ci95,reward_mean,reward_ci95,turns_mean,turns_ci95\n";
  int failures = 0;
  for (double v : values) {
    if (param == "c") cfg.hyper.c = v;
    else if (param == "delta") cfg.hyper.delta = v;
    else if (param == "beta") cfg.hyper.beta = v;
    else if (param == "n") cfg.hyper.n = int(v);
    else throw config_error("sweep-hyper: unknown --param " + param);
    ExperimentResult res = run_experiment(cfg, ont);
    failures += report_seed_errors(res);
    // final milestone only
    Vec succ, rew, trn;
    for (const auto& s : res.seeds) {
      if (s.milestones.empty()) continue;
      succ.push_back(s.milestones.back().success);
      rew.push_back(s.milestones.back().reward);
      trn.push_back(s.milestones.back().turns);
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    std::string line = buf;
    detail::append_agg(line, aggregate_ci(succ));
    detail::append_agg(line, aggregate_ci(rew));
    detail::append_agg(line, aggregate_ci(trn));
    csv += line + "\n";
  }
  write_file(out / ("hyper_" + param + ".csv"), csv);
  std::cout << out.string() << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const CommonOpts& o, const ExperimentConfig& cfg, const std::string& snapshot,
             int dialogues, std::uint64_t eval_seed) {
  Ontology ont = load_ontology(o.ontology);
  std::ifstream in(snapshot, std::ios::binary);
  if (!in) throw input_error("cannot open snapshot: " + snapshot);
  std::uint32_t magic = io::read_u32(in);
  in.seekg(0);
  MilestonePoint p;
  if (magic == 0x414c4e50u) {  // network params
    NetworkParams net = NetworkParams::load(in);
    p = evaluate_greedy(ont, cfg.env_config(), net, dialogues, eval_seed);
  } else if (magic == 0x414c534eu) {  // full trainer snapshot
    io::read_u32(in);  // magic
    io::read_u32(in);  // version
    Hyperparameters::load(in);
    io::read_u32(in);  // episodes done
    io::read_u64(in);  // seed
    io::read_u64(in);  // rng state
    NetworkParams net = NetworkParams::load(in);
    p = evaluate_greedy(ont, cfg.env_config(), net, dialogues, eval_seed);
  } else if (magic == 0x414c4750u) {  // gp model
    GpModel model = GpModel::load(in);
    p = evaluate_gp(ont, cfg.env_config(), model, dialogues, eval_seed);
  } else {
    throw input_error("unrecognized snapshot format");
  }
  std::printf("dialogues=%d success=%.4f reward=%.4f turns=%.4f\n", dialogues, p.success,
              p.reward, p.turns);
  return 0;
}

int cmd_inspect(const std::string& snapshot) {
  std::ifstream in(snapshot, std::ios::binary);
  if (!in) throw input_error("cannot open snapshot: " + snapshot);
  std::uint32_t magic = io::read_u32(in);
  in.seekg(0);
  if (magic == 0x414c4e50u) {
    NetworkParams net = NetworkParams::load(in);
    std::printf("type=network input=%d h1=%d h2=%d summary_actions=%d payload_actions=%d "
                "master_actions=%d parameters=%zu\n",
                net.dims.input, net.dims.h1, net.dims.h2, net.dims.summary_actions,
                net.dims.payload_actions, net.dims.master_actions(), net.size());
  } else if (magic == 0x414c534eu) {
    io::read_u32(in);
    io::read_u32(in);
    Hyperparameters h = Hyperparameters::load(in);
    int episodes = int(io::read_u32(in));
    std::uint64_t seed = io::read_u64(in);
    io::read_u64(in);
    NetworkParams net = NetworkParams::load(in);
    std::printf("type=trainer episodes_done=%d seed=%llu alpha=%g beta=%g gamma=%g delta=%g "
                "c=%g n=%d input=%d h1=%d h2=%d master_actions=%d\n",
                episodes, static_cast<unsigned long long>(seed), h.alpha, h.beta, h.gamma,
                h.delta, h.c, h.n, net.dims.input, net.dims.h1, net.dims.h2,
                net.dims.master_actions());
  } else if (magic == 0x414c4750u) {
    GpModel model = GpModel::load(in);
    std::printf("type=gp dict_size=%d\n", model.dict_size());
  } else {
    throw input_error("unrecognized snapshot format");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialogue policy experiments"};
  app.require_subcommand(1);

  CommonOpts train_o, eval_o, se_o, sh_o;
  std::string eval_snapshot, inspect_snapshot, se_from, sh_param;
  int eval_dialogues = 200;
  std::uint64_t eval_seed = 1;
  std::vector<double> se_rates, sh_values;

  try {
    ExperimentConfig defaults = config_file_defaults(argc, argv);
    train_o.cfg = defaults;
    eval_o.cfg = defaults;
    se_o.cfg = defaults;
    sh_o.cfg = defaults;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App* train = app.add_subcommand("train", "run the milestone training protocol");
  add_common(train, train_o);

  CLI::App* eval = app.add_subcommand("eval", "greedy evaluation of a snapshot");
  add_common(eval, eval_o);
  eval->add_option("--snapshot", eval_snapshot, "snapshot file")->required();
  eval->add_option("--dialogues", eval_dialogues);
  eval->add_option("--eval-seed", eval_seed);

  CLI::App* sweep_error = app.add_subcommand("sweep-error", "evaluate across semantic error rates");
  add_common(sweep_error, se_o);
  sweep_error->add_option("--from", se_from, "directory with trained .net snapshots");
  sweep_error->add_option("--rates", se_rates, "error rates (default 0,0.05,...,0.5)");

  CLI::App* sweep_hyper = app.add_subcommand("sweep-hyper", "grid over one hyperparameter");
  add_common(sweep_hyper, sh_o);
  sweep_hyper->add_option("--param", sh_param, "c | delta | beta | n")->required();
  sweep_hyper->add_option("--values", sh_values, "grid values")->required();

  CLI::App* inspect = app.add_subcommand("inspect-snapshot", "describe a snapshot file");
  inspect->add_option("--snapshot", inspect_snapshot, "snapshot file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      train_o.cfg.validate();
      return cmd_train(train_o, train_o.cfg);
    }
    if (eval->parsed()) {
      eval_o.cfg.validate();
      return cmd_eval(eval_o, eval_o.cfg, eval_snapshot, eval_dialogues, eval_seed);
    }
    if (sweep_error->parsed()) {
      se_o.cfg.validate();
      return cmd_sweep_error(se_o, se_o.cfg, se_from, se_rates);
    }
    if (sweep_hyper->parsed()) {
      sh_o.cfg.validate();
      return cmd_sweep_hyper(sh_o, sh_o.cfg, sh_param, sh_values);
    }
    if (inspect->parsed()) return cmd_inspect(inspect_snapshot);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
