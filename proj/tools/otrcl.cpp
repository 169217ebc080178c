// Experiment driver: dataset generation, training, evaluation, one-shot
// label correction and a raw Sinkhorn solve.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "otrcl/checkpoint.hpp"
#include "otrcl/data.hpp"
#include "otrcl/experiment.hpp"
#include "otrcl/ot_core.hpp"

namespace fs = std::filesystem;
using namespace otrcl;

namespace {

struct GenOptions {
  SynthConfig synth;
  fs::path out = "otrcl_data";
};

struct TrainOptions {
  std::optional<fs::path> config;
  std::optional<fs::path> data;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  std::optional<int> epochs, warmup, batch_size, n, k;
  std::optional<double> lambda, gamma, s_start, s_end, epsilon, epsilon_match, lr;
  std::optional<std::string> ablate, baseline;
  std::optional<fs::path> out;
};

struct EvalOptions {
  std::vector<fs::path> checkpoints;
  fs::path manifest;
  std::optional<fs::path> out;
};

struct CorrectOptions {
  fs::path checkpoint, manifest;
  std::optional<double> mass;
  std::optional<fs::path> out;
};

struct SolveOptions {
  fs::path cost, alpha, beta;
  double epsilon = 0.1;
  int max_iters = 5000;
  double tol = 1e-6;
  std::optional<fs::path> out;
};

Vector read_marginal(const fs::path& path) {
  const Matrix m = read_matrix(path);
  if (m.rows() != 1 && m.cols() != 1) throw LoadError(path.string() + ": marginal must be a single row or column");
  return Eigen::Map<const Vector>(m.data(), m.size());
}

int cmd_gen(const GenOptions& opt) {
  opt.synth.validate();
  const Dataset data = generate(opt.synth);
  const fs::path manifest = save_dataset(opt.out, data);
  long corrupted = 0;
  for (Eigen::Index i = 0; i < data.splits.train; ++i)
    if (data.labels[static_cast<std::size_t>(i)] != (*data.true_labels)[static_cast<std::size_t>(i)]) ++corrupted;
  std::cout << "samples: train=" << data.splits.train << " val=" << data.splits.val << " test=" << data.splits.test
            << "\nclasses: " << data.num_classes << "\nfeatures: visual=" << data.features_v.cols()
            << " text=" << data.features_t.cols() << "\ncorrupted train labels: " << corrupted
            << "\nmanifest: " << manifest.string() << '\n';
  return 0;
}

ExperimentConfig resolve_train_config(const TrainOptions& opt) {
  ExperimentConfig cfg;
  cfg.synth = SynthConfig{};
  if (opt.config) cfg = load_experiment_config(*opt.config, cfg);
  if (opt.data) {
    cfg.dataset = *opt.data;
    cfg.synth.reset();
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (cfg.synth) {
    if (opt.noise) cfg.synth->noise_ratio = *opt.noise;
    if (opt.n) cfg.synth->n_train = *opt.n;
    if (opt.k) cfg.synth->classes = *opt.k;
  } else if (opt.noise || opt.n || opt.k) {
    throw std::invalid_argument("--noise, --n and --k only apply to synthetic data");
  }
  TrainConfig& t = cfg.train;
  if (opt.epochs) t.epochs = *opt.epochs;
  if (opt.warmup) t.warmup_epochs = *opt.warmup;
  if (opt.batch_size) t.batch_size = *opt.batch_size;
  if (opt.lambda) t.lambda = *opt.lambda;
  if (opt.gamma) t.gamma = *opt.gamma;
  if (opt.s_start) t.s_start = *opt.s_start;
  if (opt.s_end) t.s_end = *opt.s_end;
  if (opt.epsilon) t.epsilon_ot = *opt.epsilon;
  if (opt.epsilon_match) t.epsilon_match = *opt.epsilon_match;
  if (opt.lr) t.lr = *opt.lr;
  if (opt.baseline) t.mode = TrainMode::kBaselineCE;
  if (opt.ablate) t.mode = *opt.ablate == "plc" ? TrainMode::kAblatePLC : TrainMode::kAblateBHG;
  if (opt.out) cfg.out_dir = *opt.out;
  cfg.apply_seed();
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainOptions& opt) {
  const ExperimentConfig cfg = resolve_train_config(opt);
  const ExperimentOutputs out = run_experiment(cfg);
  std::cout << "mode: " << to_string(cfg.train.mode) << "\ntest map_i2t: " << format_double(out.test.map_i2t)
            << "\ntest map_t2i: " << format_double(out.test.map_t2i);
  if (out.correction && out.correction->assigned)
    std::cout << "\ncorrection accuracy (assigned): " << format_double(*out.correction->assigned);
  std::cout << "\noutputs: " << cfg.out_dir.string() << '\n';
  return 0;
}

int cmd_eval(const EvalOptions& opt) {
  nlohmann::ordered_json report;
  if (opt.checkpoints.size() == 1) {
    report = to_json(evaluate_checkpoint(opt.checkpoints.front(), opt.manifest));
    std::cout << report.dump(2) << '\n';
  } else {
    report = nlohmann::ordered_json::array();
    std::cout << "checkpoint,map_i2t,map_t2i,map_mean\n";
    for (const auto& ckpt : opt.checkpoints) {
      const CheckpointEvaluation e = evaluate_checkpoint(ckpt, opt.manifest);
      std::cout << ckpt.string() << ',' << format_double(e.test.map_i2t) << ',' << format_double(e.test.map_t2i)
                << ',' << format_double(e.test.mean()) << '\n';
      nlohmann::ordered_json row = to_json(e);
      row["checkpoint"] = ckpt.string();
      report.push_back(row);
    }
  }
  if (opt.out) {
    std::ofstream out(*opt.out, std::ios::trunc);
    out << report.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing " + opt.out->string());
  }
  return 0;
}

int cmd_correct(const CorrectOptions& opt) {
  const CorrectionRun run = correct_from_checkpoint(opt.checkpoint, opt.manifest, opt.mass);
  std::cout << "assigned mass: " << format_double(run.assigned_mass) << "\nconverged: " << (run.converged ? 1 : 0);
  if (run.accuracy) {
    std::cout << "\naccuracy (assigned): "
              << (run.accuracy->assigned ? format_double(*run.accuracy->assigned) : std::string("n/a"))
              << "\naccuracy (overall): " << format_double(run.accuracy->overall);
  }
  std::cout << '\n';
  if (opt.out) write_matrix(*opt.out, run.scaled_labels);
  return run.converged ? 0 : 3;
}

int cmd_solve(const SolveOptions& opt) {
  const CostMatrix cost(read_matrix(opt.cost));
  const Marginal alpha(read_marginal(opt.alpha));
  const Marginal beta(read_marginal(opt.beta));
  const TransportPlan plan = sinkhorn(cost, alpha, beta, SinkhornParams{opt.epsilon, opt.max_iters, opt.tol});
  const double objective = ot_objective(plan.values, cost.values());
  std::cout << "objective: " << format_double(objective) << "\nconverged: " << (plan.converged ? 1 : 0)
            << "\niterations: " << plan.iterations << "\nmarginal_error: " << format_double(plan.marginal_error)
            << '\n';
  if (opt.out) {
    write_matrix(*opt.out, plan.values);
  } else {
    for (Eigen::Index i = 0; i < plan.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < plan.values.cols(); ++j)
        std::cout << (j ? " " : "") << format_double(plan.values(i, j));
      std::cout << '\n';
    }
  }
  if (!std::isfinite(objective)) return 1;
  return plan.converged ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-transport label correction and cross-modal alignment"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic bimodal dataset");
  gen_cmd->add_option("--n", gen.synth.n_train, "Training samples")->capture_default_str();
  gen_cmd->add_option("--n-val", gen.synth.n_val, "Validation samples")->capture_default_str();
  gen_cmd->add_option("--n-test", gen.synth.n_test, "Test samples")->capture_default_str();
  gen_cmd->add_option("--k", gen.synth.classes, "Classes")->capture_default_str();
  gen_cmd->add_option("--dim-v", gen.synth.dim_v, "Visual feature width")->capture_default_str();
  gen_cmd->add_option("--dim-t", gen.synth.dim_t, "Text feature width")->capture_default_str();
  gen_cmd->add_option("--latent-dim", gen.synth.latent_dim)->capture_default_str();
  gen_cmd->add_option("--spread", gen.synth.cluster_spread, "Cluster spread")->capture_default_str();
  gen_cmd->add_option("--modality-noise", gen.synth.modality_noise)->capture_default_str();
  gen_cmd->add_option("--noise", gen.synth.noise_ratio, "Symmetric label noise ratio in [0, 1)")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.synth.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train on synthetic data or a dataset manifest");
  train_cmd->add_option("--config", tr.config, "Experiment config (JSON); flags override it");
  train_cmd->add_option("--data", tr.data, "Dataset manifest instead of synthetic data");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--noise", tr.noise, "Synthetic label noise ratio");
  train_cmd->add_option("--n", tr.n, "Synthetic training samples");
  train_cmd->add_option("--k", tr.k, "Synthetic classes");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--warmup", tr.warmup, "Warm-up epochs");
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--lambda", tr.lambda, "Alignment loss weight");
  train_cmd->add_option("--gamma", tr.gamma, "Target momentum");
  train_cmd->add_option("--s-start", tr.s_start);
  train_cmd->add_option("--s-end", tr.s_end);
  train_cmd->add_option("--epsilon", tr.epsilon, "Entropic regularization of label correction");
  train_cmd->add_option("--epsilon-match", tr.epsilon_match, "Entropic regularization of cross-modal matching");
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--ablate", tr.ablate, "Drop one loss term")->check(CLI::IsMember({"plc", "bhg"}));
  train_cmd->add_option("--baseline", tr.baseline, "Plain cross-entropy baseline")->check(CLI::IsMember({"ce"}));
  train_cmd->add_option("--out", tr.out, "Output directory");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate one checkpoint, or compare several");
  eval_cmd->add_option("--checkpoint", ev.checkpoints)->required()->expected(1, 8);
  eval_cmd->add_option("--manifest", ev.manifest)->required();
  eval_cmd->add_option("--out", ev.out, "Write the report as JSON");

  CorrectOptions co;
  auto* correct_cmd = app.add_subcommand("correct", "Solve label correction once from a checkpoint");
  correct_cmd->add_option("--checkpoint", co.checkpoint)->required();
  correct_cmd->add_option("--manifest", co.manifest)->required();
  correct_cmd->add_option("--mass", co.mass, "Transported mass s (default: the run's s_end)");
  correct_cmd->add_option("--out", co.out, "Write N*Y_hat as an OTRF1 matrix");

  SolveOptions so;
  auto* solve_cmd = app.add_subcommand("solve", "Entropic OT between two marginals");
  solve_cmd->add_option("--cost", so.cost)->required();
  solve_cmd->add_option("--alpha", so.alpha)->required();
  solve_cmd->add_option("--beta", so.beta)->required();
  solve_cmd->add_option("--epsilon", so.epsilon)->capture_default_str();
  solve_cmd->add_option("--max-iters", so.max_iters)->capture_default_str();
  solve_cmd->add_option("--tol", so.tol)->capture_default_str();
  solve_cmd->add_option("--out", so.out, "Write the plan as an OTRF1 matrix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*correct_cmd) return cmd_correct(co);
    if (*solve_cmd) return cmd_solve(so);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
