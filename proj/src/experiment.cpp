#include "otrcl/experiment.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "otrcl/checkpoint.hpp"
#include "otrcl/relation_align.hpp"
#include "otrcl/semantic_align.hpp"

namespace otrcl {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

template <typename T>
void read_key(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad value for '") + key + "': " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ojson optional_number(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson retrieval_json(const RetrievalResult& r) {
  return {{"map_i2t", r.map_i2t}, {"map_t2i", r.map_t2i}, {"map_mean", r.mean()}};
}

ojson correction_json(const std::optional<CorrectionAccuracy>& c) {
  if (!c) return nullptr;
  return {{"assigned", optional_number(c->assigned)},
          {"overall", c->overall},
          {"assigned_count", c->assigned_count}};
}

Labels split_labels(const Labels& labels, const SplitSizes& splits, Split s) {
  const auto off = splits.offset(s);
  return Labels(labels.begin() + off, labels.begin() + off + splits.count(s));
}

void check_finite(const RetrievalResult& r) {
  if (!std::isfinite(r.map_i2t) || !std::isfinite(r.map_t2i)) throw std::runtime_error("non-finite retrieval metric");
}

TrainConfig train_config_of(const Checkpoint& ckpt) {
  if (ckpt.config_json.empty()) return {};
  return experiment_from_json(json::parse(ckpt.config_json)).train;
}

void check_fits(const Checkpoint& ckpt, const Dataset& data, const std::filesystem::path& path) {
  const ModelDims& d = ckpt.model.dims();
  if (d.dim_v != data.features_v.cols() || d.dim_t != data.features_t.cols() || d.classes != data.num_classes)
    throw LoadError(path.string() + ": checkpoint dimensions (" + std::to_string(d.dim_v) + ", " +
                    std::to_string(d.dim_t) + ", K=" + std::to_string(d.classes) + ") do not match dataset (" +
                    std::to_string(data.features_v.cols()) + ", " + std::to_string(data.features_t.cols()) +
                    ", K=" + std::to_string(data.num_classes) + ")");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

void ExperimentConfig::validate() const {
  if (synth.has_value() == dataset.has_value())
    throw std::invalid_argument("exactly one data source (synthetic or dataset manifest) is required");
  if (synth) synth->validate();
  train.validate();
}

void ExperimentConfig::apply_seed() {
  train.seed = seed;
  if (synth) synth->seed = seed;
}

ojson to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"batch_size", c.batch_size},
          {"lambda", c.lambda},
          {"gamma", c.gamma},
          {"s_start", c.s_start},
          {"s_end", c.s_end},
          {"epsilon_ot", c.epsilon_ot},
          {"epsilon_match", c.epsilon_match},
          {"sinkhorn_max_iters", c.sinkhorn_max_iters},
          {"sinkhorn_tol", c.sinkhorn_tol},
          {"lr", c.lr},
          {"hidden", c.hidden},
          {"embed", c.embed},
          {"tau1", c.tau1},
          {"tau2", c.tau2},
          {"tau3", c.tau3},
          {"confident_per_class", c.confident_per_class},
          {"neighbors", c.neighbors},
          {"estimate_prior", c.estimate_prior},
          {"mode", to_string(c.mode)},
          {"effective_lambda", c.effective_lambda()}};
}

ojson to_json(const SynthConfig& c) {
  return {{"n_train", c.n_train},         {"n_val", c.n_val},
          {"n_test", c.n_test},           {"classes", c.classes},
          {"dim_v", c.dim_v},             {"dim_t", c.dim_t},
          {"latent_dim", c.latent_dim},   {"cluster_spread", c.cluster_spread},
          {"modality_noise", c.modality_noise}, {"noise_ratio", c.noise_ratio}};
}

ojson to_json(const ExperimentConfig& c) {
  ojson data;
  if (c.synth) data["synthetic"] = to_json(*c.synth);
  if (c.dataset) data["manifest"] = c.dataset->string();
  return {{"format", "otrcl-experiment-1"},
          {"seed", c.seed},
          {"out_dir", c.out_dir.string()},
          {"data", data},
          {"train", to_json(c.train)}};
}

ExperimentConfig experiment_from_json(const json& j, ExperimentConfig c) {
  reject_unknown(j, {"format", "seed", "out_dir", "data", "train", "run"}, "experiment config");
  if (j.contains("format") && j.at("format") != "otrcl-experiment-1")
    throw std::invalid_argument("unsupported experiment config format");
  read_key(j, "seed", c.seed);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"synthetic", "manifest"}, "data");
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      reject_unknown(s, {"n_train", "n_val", "n_test", "classes", "dim_v", "dim_t", "latent_dim", "cluster_spread",
                         "modality_noise", "noise_ratio"},
                     "data.synthetic");
      SynthConfig sc = c.synth.value_or(SynthConfig{});
      read_key(s, "n_train", sc.n_train);
      read_key(s, "n_val", sc.n_val);
      read_key(s, "n_test", sc.n_test);
      read_key(s, "classes", sc.classes);
      read_key(s, "dim_v", sc.dim_v);
      read_key(s, "dim_t", sc.dim_t);
      read_key(s, "latent_dim", sc.latent_dim);
      read_key(s, "cluster_spread", sc.cluster_spread);
      read_key(s, "modality_noise", sc.modality_noise);
      read_key(s, "noise_ratio", sc.noise_ratio);
      c.synth = sc;
      c.dataset.reset();
    }
    if (d.contains("manifest")) {
      c.dataset = d.at("manifest").get<std::string>();
      if (!d.contains("synthetic")) c.synth.reset();
    }
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, {"epochs", "warmup_epochs", "batch_size", "lambda", "gamma", "s_start", "s_end", "epsilon_ot", "epsilon_match",
                       "sinkhorn_max_iters", "sinkhorn_tol", "lr", "hidden", "embed", "tau1", "tau2", "tau3",
                       "confident_per_class", "neighbors", "estimate_prior", "mode", "effective_lambda"},
                   "train");
    TrainConfig& tc = c.train;
    read_key(t, "epochs", tc.epochs);
    read_key(t, "warmup_epochs", tc.warmup_epochs);
    read_key(t, "batch_size", tc.batch_size);
    read_key(t, "lambda", tc.lambda);
    read_key(t, "gamma", tc.gamma);
    read_key(t, "s_start", tc.s_start);
    read_key(t, "s_end", tc.s_end);
    read_key(t, "epsilon_ot", tc.epsilon_ot);
    read_key(t, "epsilon_match", tc.epsilon_match);
    read_key(t, "sinkhorn_max_iters", tc.sinkhorn_max_iters);
    read_key(t, "sinkhorn_tol", tc.sinkhorn_tol);
    read_key(t, "lr", tc.lr);
    read_key(t, "hidden", tc.hidden);
    read_key(t, "embed", tc.embed);
    read_key(t, "tau1", tc.tau1);
    read_key(t, "tau2", tc.tau2);
    read_key(t, "tau3", tc.tau3);
    read_key(t, "confident_per_class", tc.confident_per_class);
    read_key(t, "neighbors", tc.neighbors);
    read_key(t, "estimate_prior", tc.estimate_prior);
    if (t.contains("mode")) tc.mode = train_mode_from_string(t.at("mode").get<std::string>());
  }
  c.apply_seed();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = experiment_from_json(j, std::move(base));
  if (c.dataset && c.dataset->is_relative()) c.dataset = path.parent_path() / *c.dataset;
  return c;
}

std::string metrics_table(const std::vector<EpochMetrics>& log) {
  std::ostringstream out;
  out << "epoch,warmup,mass,loss,label_loss,align_loss,correction_assigned,correction_overall,"
         "val_map_i2t,val_map_t2i,partial_converged,matching_unconverged\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& m : log) {
    out << m.epoch << ',' << (m.warmup ? 1 : 0) << ',' << format_double(m.mass) << ',' << format_double(m.loss)
        << ',' << format_double(m.label_loss) << ',' << format_double(m.align_loss) << ','
        << opt(m.correction_assigned) << ',' << opt(m.correction_overall) << ',' << format_double(m.val_map_i2t)
        << ',' << format_double(m.val_map_t2i) << ',' << (m.partial_converged ? 1 : 0) << ','
        << m.matching_unconverged << '\n';
  }
  return out.str();
}

ojson metrics_report(const ExperimentOutputs& out) {
  ojson curves = ojson::array();
  for (const auto& m : out.train.log) {
    curves.push_back({{"epoch", m.epoch},
                      {"warmup", m.warmup},
                      {"mass", m.mass},
                      {"loss", m.loss},
                      {"label_loss", m.label_loss},
                      {"align_loss", m.align_loss},
                      {"correction_assigned", optional_number(m.correction_assigned)},
                      {"correction_overall", optional_number(m.correction_overall)},
                      {"val_map_i2t", m.val_map_i2t},
                      {"val_map_t2i", m.val_map_t2i}});
  }
  const auto& c = out.train.counters;
  return {{"map_i2t", out.test.map_i2t},
          {"map_t2i", out.test.map_t2i},
          {"map_mean", out.test.mean()},
          {"val", retrieval_json(out.val)},
          {"correction_accuracy", correction_json(out.correction)},
          {"solver_counters",
           {{"partial_solves", c.partial_solves},
            {"partial_fallbacks", c.partial_fallbacks},
            {"matching_solves", c.matching_solves},
            {"confident_selections", c.confident_selections}}},
          {"epochs", curves}};
}

ExperimentOutputs run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.out_dir);
  ExperimentOutputs out;
  Dataset data;
  if (config.synth) {
    data = generate(*config.synth);
    out.dataset_manifest = save_dataset(config.out_dir / "data", data);
  } else {
    data = load_dataset(*config.dataset);
    out.dataset_manifest = *config.dataset;
  }
  if (data.splits.test < 1) throw std::invalid_argument("dataset has no test split");

  ojson manifest = to_json(config);
  manifest["run"] = {{"dataset_manifest", out.dataset_manifest.string()},
                     {"samples", {{"train", data.splits.train}, {"val", data.splits.val}, {"test", data.splits.test}}}};
  write_text(config.out_dir / "run_manifest.json", manifest.dump(2) + "\n");

  out.train = train(data, config.train);
  {
    const auto [z_v, z_t] = embed_split(out.train.model, data, Split::kTest);
    out.test = evaluate_retrieval(z_v, z_t, split_labels(data.labels, data.splits, Split::kTest));
  }
  if (data.splits.val > 0) {
    const auto [z_v, z_t] = embed_split(out.train.model, data, Split::kVal);
    out.val = evaluate_retrieval(z_v, z_t, split_labels(data.labels, data.splits, Split::kVal));
  }
  check_finite(out.test);
  if (data.true_labels && config.train.uses_plc() && config.train.epochs > config.train.warmup_epochs) {
    out.correction = correction_accuracy(out.train.soft_labels,
                                         split_labels(*data.true_labels, data.splits, Split::kTrain),
                                         out.train.training_targets);
  }

  Checkpoint ckpt{out.train.model,    out.train.adam,           out.train.epochs_completed,
                  out.train.rng_state, out.train.targets,       out.train.training_targets,
                  out.train.soft_labels, to_json(config).dump()};
  save_checkpoint(config.out_dir / "checkpoint.otrcl", ckpt);
  write_text(config.out_dir / "metrics.json", metrics_report(out).dump(2) + "\n");
  write_text(config.out_dir / "metrics.csv", metrics_table(out.train.log));
  return out;
}

CheckpointEvaluation evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                         const std::filesystem::path& manifest) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(manifest);
  check_fits(ckpt, data, checkpoint);
  CheckpointEvaluation eval;
  if (data.splits.test < 1) throw LoadError(manifest.string() + ": dataset has no test split");
  {
    const auto [z_v, z_t] = embed_split(ckpt.model, data, Split::kTest);
    eval.test = evaluate_retrieval(z_v, z_t, split_labels(data.labels, data.splits, Split::kTest));
  }
  if (data.splits.val > 0) {
    const auto [z_v, z_t] = embed_split(ckpt.model, data, Split::kVal);
    eval.val = evaluate_retrieval(z_v, z_t, split_labels(data.labels, data.splits, Split::kVal));
  }
  if (data.true_labels && ckpt.soft_labels.rows() == data.splits.train &&
      ckpt.training_targets.rows() == data.splits.train) {
    eval.correction = correction_accuracy(ckpt.soft_labels, split_labels(*data.true_labels, data.splits, Split::kTrain),
                                          ckpt.training_targets);
  }
  return eval;
}

ojson to_json(const CheckpointEvaluation& eval) {
  return {{"map_i2t", eval.test.map_i2t},
          {"map_t2i", eval.test.map_t2i},
          {"map_mean", eval.test.mean()},
          {"val", retrieval_json(eval.val)},
          {"correction_accuracy", correction_json(eval.correction)}};
}

CorrectionRun correct_from_checkpoint(const std::filesystem::path& checkpoint,
                                      const std::filesystem::path& manifest, std::optional<double> mass) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(manifest);
  check_fits(ckpt, data, checkpoint);
  const TrainConfig tc = train_config_of(ckpt);
  const Eigen::Index n = data.splits.train;
  const int k = data.num_classes;
  if (ckpt.targets.rows() != n || ckpt.targets.cols() != k)
    throw LoadError(checkpoint.string() + ": stored targets do not match the training split");

  const auto [z_v, z_t] = embed_split(ckpt.model, data, Split::kTrain);
  const Matrix pred_v = class_probs_batch(z_v, ckpt.model.prototypes(), ckpt.model.tau1());
  const Matrix pred_t = class_probs_batch(z_t, ckpt.model.prototypes(), ckpt.model.tau1());
  const ConfidentSet conf = select_confident(pred_v, pred_t, tc.confident_per_class);
  const int neighbors = tc.neighbors > 0 ? std::min<int>(tc.neighbors, static_cast<int>(n - 1)) : default_neighbors(n);
  const Matrix raw = semantic_cost(conf, knn(z_v, neighbors), knn(z_t, neighbors), ckpt.targets, z_v, z_t);
  const Vector prior = tc.estimate_prior ? estimate_class_prior(row_argmax(ckpt.training_targets), k)
                                         : Vector::Constant(k, 1.0 / k);
  const PartialOTProblem problem(CostMatrix::normalized(raw), mass.value_or(tc.s_end), prior);
  SoftLabelMatrix soft =
      solve_partial(problem, SinkhornParams{tc.epsilon_ot, tc.sinkhorn_max_iters, tc.sinkhorn_tol});

  CorrectionRun run;
  run.assigned_mass = soft.assigned_mass;
  run.converged = soft.converged;
  if (data.true_labels) {
    Matrix effective = one_hot(split_labels(data.labels, data.splits, Split::kTrain), k);
    for (Eigen::Index i = 0; i < n; ++i)
      if (soft.values.row(i).sum() >= 1e-6) effective.row(i) = soft.values.row(i);
    run.accuracy = correction_accuracy(soft.values, split_labels(*data.true_labels, data.splits, Split::kTrain),
                                       effective);
  }
  run.scaled_labels = std::move(soft.values);
  return run;
}

}  // namespace otrcl
