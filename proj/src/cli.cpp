#include "promptforge/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "promptforge/config.hpp"
#include "promptforge/data.hpp"
#include "promptforge/engine.hpp"
#include "promptforge/metrics.hpp"
#include "promptforge/param_store.hpp"

namespace pf::cli {

namespace {

namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_config(const std::string& path, bool has_seed, std::uint64_t seed) {
  RunConfig cfg;
  try {
    cfg = load_config_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (has_seed) {
    cfg.model.seed = seed;
    try {
      cfg.model.validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  return cfg;
}

engine::Model model_for_eval(const RunConfig& cfg, const std::string& ckpt) {
  if (ckpt.empty() || ckpt == "none") return engine::build_model(cfg.model);
  return engine::load_checkpoint_expecting(ckpt, cfg.model);
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const double v = std::stod(item, &pos);
    if (pos != item.size()) throw ConfigError("sweep: bad value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("sweep: no values given");
  return out;
}

void apply_sweep_value(RunConfig& cfg, const std::string& param, double value) {
  auto as_int = [&](const char* name) {
    if (value != std::floor(value)) {
      throw ConfigError(std::string("sweep: ") + name + " requires integer values");
    }
    return static_cast<std::int64_t>(value);
  };
  if (param == "N") cfg.model.N = as_int("N");
  else if (param == "a") cfg.model.a = as_int("a");
  else if (param == "b") cfg.model.b = as_int("b");
  else if (param == "J") cfg.model.J = as_int("J");
  else if (param == "lambda") cfg.model.lambda = value;
  else throw ConfigError("sweep: parameter must be one of N, a, b, J, lambda");
  try {
    cfg.model.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  data::SyntheticTask task = data::generate_task(cfg);
  engine::Model model = engine::build_model(cfg.model);
  engine::TrainHistory history = engine::train(model, task, cfg.train, cfg.model.seed);
  const std::string ckpt_path = (fs::path(out_dir) / "model.ckpt").string();
  const std::string hist_path = (fs::path(out_dir) / "history.csv").string();
  engine::save_checkpoint(model, cfg, cfg.train.epochs, cfg.model.seed, ckpt_path);
  metrics::write_history_csv(history, hist_path);
  for (std::size_t e = 0; e < history.epoch_mean_loss.size(); ++e) {
    std::printf("epoch %zu mean_loss %.6g\n", e, history.epoch_mean_loss[e]);
  }
  std::printf("wrote %s and %s\n", ckpt_path.c_str(), hist_path.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt, const std::string& out_path, std::int64_t iters) {
  engine::Model model = model_for_eval(cfg, ckpt);
  data::SyntheticTask task = data::generate_task(cfg);
  metrics::EvalReport report = metrics::evaluate(model, task, iters);
  metrics::write_report_csv(report, out_path);
  std::printf("base %.2f new %.2f hm %.2f episodes %lld\n", report.base_acc, report.new_acc, report.hm,
              static_cast<long long>(report.episodes));
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  engine::Model model = engine::build_model(cfg.model);
  data::SyntheticTask task = data::generate_task(cfg);
  const data::Sample& sample = task.train.front();
  auto loss_fn = [&](ParamStore&) {
    engine::EpisodeTrace trace =
        engine::forward_episode(sample.image, task.class_tokens, model, cfg.model.N);
    return engine::episode_loss(trace, sample.label, cfg.model.lambda, cfg.model.N);
  };
  const double err = finite_diff_check(loss_fn, model.params, 1e-5);
  std::printf("max relative error %.3e\n", err);
  return err > 1e-4 ? 1 : 0;
}

int cmd_trace(const RunConfig& cfg, const std::string& ckpt, const std::string& out_path,
              std::int64_t iters, std::int64_t episodes) {
  engine::Model model = model_for_eval(cfg, ckpt);
  data::SyntheticTask task = data::generate_task(cfg);
  metrics::write_trace_csv(metrics::collect_traces(model, task, iters, episodes), out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_sweep(const RunConfig& base_cfg, const std::string& param, const std::string& values_csv,
              const std::string& out_path) {
  std::vector<metrics::SweepRow> rows;
  for (double value : parse_values(values_csv)) {
    RunConfig cfg = base_cfg;
    apply_sweep_value(cfg, param, value);
    data::SyntheticTask task = data::generate_task(cfg);
    engine::Model model = engine::build_model(cfg.model);
    // N = 0 is the untrained zero-shot row; there is no loss to minimize.
    if (cfg.model.N >= 1) engine::train(model, task, cfg.train, cfg.model.seed);
    metrics::EvalReport report = metrics::evaluate(model, task, cfg.model.N);
    std::printf("%s=%.6g base %.2f new %.2f hm %.2f\n", param.c_str(), value, report.base_acc,
                report.new_acc, report.hm);
    rows.push_back(metrics::SweepRow{param, value, report});
  }
  metrics::write_sweep_csv(rows, out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_gen_task(const RunConfig& cfg, const std::string& out_path) {
  data::save_task(data::generate_task(cfg), out_path);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"progressive multi-modal conditional prompt tuning, desk scale"};
  app.require_subcommand(1);

  std::string config_path, ckpt, out, param, values;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::int64_t iters = -1;
  std::int64_t episodes = 8;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file")->required();
    cmd->add_option("--seed", seed, "root seed override")->each([&](const std::string&) { has_seed = true; });
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train on the synthetic task; writes checkpoint + history CSV");
  add_common(train_cmd);
  train_cmd->add_option("--out", out, "output directory")->default_val("out");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate base/novel accuracy; writes report CSV");
  add_common(eval_cmd);
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint path, or 'none' for raw parameters");
  eval_cmd->add_option("--out", out, "report path")->default_val("report.csv");
  eval_cmd->add_option("--iters", iters, "override iteration count N");

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the episode loss gradient");
  add_common(grad_cmd);

  CLI::App* trace_cmd = app.add_subcommand("trace", "per-iteration class probabilities; writes trace CSV");
  add_common(trace_cmd);
  trace_cmd->add_option("--ckpt", ckpt, "checkpoint path, or 'none' for raw parameters");
  trace_cmd->add_option("--out", out, "trace path")->default_val("trace.csv");
  trace_cmd->add_option("--iters", iters, "override iteration count N");
  trace_cmd->add_option("--episodes", episodes, "number of test episodes to trace");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train+eval over a one-parameter grid; writes combined CSV");
  add_common(sweep_cmd);
  sweep_cmd->add_option("--param", param, "one of N, a, b, J, lambda")->required();
  sweep_cmd->add_option("--values", values, "comma-separated grid values")->required();
  sweep_cmd->add_option("--out", out, "sweep path")->default_val("sweep.csv");

  CLI::App* gen_cmd = app.add_subcommand("gen-task", "write the synthetic task to a single file");
  add_common(gen_cmd);
  gen_cmd->add_option("--out", out, "task path")->default_val("task.pmtk");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const RunConfig cfg = load_config(config_path, has_seed, seed);
    if (train_cmd->parsed()) return cmd_train(cfg, out);
    if (eval_cmd->parsed()) return cmd_eval(cfg, ckpt, out, iters >= 0 ? iters : cfg.model.N);
    if (grad_cmd->parsed()) return cmd_gradcheck(cfg);
    if (trace_cmd->parsed()) return cmd_trace(cfg, ckpt, out, iters >= 0 ? iters : cfg.model.N, episodes);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, param, values, out);
    if (gen_cmd->parsed()) return cmd_gen_task(cfg, out);
    std::fprintf(stderr, "error: no command\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace pf::cli
