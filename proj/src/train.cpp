#include "otrcl/train.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "otrcl/eval.hpp"
#include "otrcl/relation_align.hpp"
#include "otrcl/semantic_align.hpp"

namespace otrcl {
namespace {

constexpr double kAssignedFloor = 1e-6;

Matrix gather_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

struct Snapshot {
  Matrix z_v, z_t, pred_v, pred_t;
};

Snapshot snapshot(const ModelState& model, const Matrix& x_v, const Matrix& x_t) {
  Snapshot s;
  s.z_v = encode_batch(model, x_v, Modality::kVisual);
  s.z_t = encode_batch(model, x_t, Modality::kText);
  s.pred_v = class_probs_batch(s.z_v, model.prototypes(), model.tau1());
  s.pred_t = class_probs_batch(s.z_t, model.prototypes(), model.tau1());
  return s;
}

}  // namespace

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kFull: return "full";
    case TrainMode::kBaselineCE: return "baseline_ce";
    case TrainMode::kAblatePLC: return "ablate_plc";
    case TrainMode::kAblateBHG: return "ablate_bhg";
  }
  return "full";
}

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "full") return TrainMode::kFull;
  if (name == "baseline_ce") return TrainMode::kBaselineCE;
  if (name == "ablate_plc") return TrainMode::kAblatePLC;
  if (name == "ablate_bhg") return TrainMode::kAblateBHG;
  throw std::invalid_argument("unknown training mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (warmup_epochs < 0 || warmup_epochs > epochs)
    throw std::invalid_argument("warmup epochs must lie in [0, epochs]");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(epsilon_ot > 0.0) || !(epsilon_match > 0.0) || !(sinkhorn_tol > 0.0) || sinkhorn_max_iters < 1)
    throw std::invalid_argument("invalid transport solver settings");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(tau1 > 0.0 && tau2 > 0.0 && tau3 > 0.0)) throw std::invalid_argument("temperatures must be positive");
  if (confident_per_class < 1) throw std::invalid_argument("confident set size must be positive");
  if (neighbors < 0) throw std::invalid_argument("neighbour count must be nonnegative");
  if (epochs > warmup_epochs) schedule().validate();
}

MassSchedule TrainConfig::schedule() const {
  return MassSchedule{s_start, s_end, std::max(1, epochs - warmup_epochs)};
}

std::pair<Matrix, Matrix> embed_split(const ModelState& model, const Dataset& data, Split split) {
  const Eigen::Index off = data.splits.offset(split);
  const Eigen::Index cnt = data.splits.count(split);
  return {encode_batch(model, data.features_v.middleRows(off, cnt), Modality::kVisual),
          encode_batch(model, data.features_t.middleRows(off, cnt), Modality::kText)};
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
  data.validate();
  config.validate();
  const Eigen::Index n = data.splits.train;
  const int k = data.num_classes;
  if (n < 2) throw std::invalid_argument("training split needs at least two samples");
  const Matrix x_v = data.features_v.topRows(n);
  const Matrix x_t = data.features_t.topRows(n);
  const Labels observed(data.labels.begin(), data.labels.begin() + n);
  std::optional<Labels> truth;
  if (data.true_labels) truth = Labels(data.true_labels->begin(), data.true_labels->begin() + n);

  std::mt19937_64 rng(config.seed);
  const ModelDims dims{static_cast<int>(x_v.cols()), static_cast<int>(x_t.cols()), config.hidden, config.embed, k};
  TrainResult result{ModelState::initialize(dims, rng, config.tau1), AdamState{}, one_hot(observed, k),
                     one_hot(observed, k), Matrix::Zero(n, k), {}, {}, 0, {}};
  ModelState& model = result.model;
  result.adam.lr = config.lr;
  result.adam.reset(model.params().size());

  const int neighbors = config.neighbors > 0 ? std::min<int>(config.neighbors, static_cast<int>(n - 1))
                                             : default_neighbors(n);
  const SinkhornParams ot_params{config.epsilon_ot, config.sinkhorn_max_iters, config.sinkhorn_tol};
  const SinkhornParams match_params{config.epsilon_match, config.sinkhorn_max_iters, config.sinkhorn_tol};
  const MassSchedule schedule = config.schedule();
  const bool needs_confident = config.uses_plc() || config.uses_bhg();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.warmup = epoch < config.warmup_epochs;
    const bool active = !metrics.warmup && config.mode != TrainMode::kBaselineCE;

    std::optional<ConfidentSet> conf;
    Snapshot snap;
    if (active && needs_confident) {
      snap = snapshot(model, x_v, x_t);
      conf = select_confident(snap.pred_v, snap.pred_t, config.confident_per_class);
      ++result.counters.confident_selections;
    }

    if (active && config.uses_plc()) {
      metrics.mass = mass_at(schedule, epoch - config.warmup_epochs);
      const NeighborIndex nbrs_v = knn(snap.z_v, neighbors);
      const NeighborIndex nbrs_t = knn(snap.z_t, neighbors);
      const Matrix raw_cost = semantic_cost(*conf, nbrs_v, nbrs_t, result.targets, snap.z_v, snap.z_t);
      const Vector prior = config.estimate_prior ? estimate_class_prior(row_argmax(result.training_targets), k)
                                                 : Vector::Constant(k, 1.0 / k);
      const PartialOTProblem problem(CostMatrix::normalized(raw_cost), metrics.mass, prior);
      SoftLabelMatrix soft = solve_partial(problem, ot_params);
      ++result.counters.partial_solves;
      metrics.partial_converged = soft.converged;
      if (soft.converged) {
        for (Eigen::Index i = 0; i < n; ++i)
          if (soft.values.row(i).sum() >= kAssignedFloor) result.training_targets.row(i) = soft.values.row(i);
        result.soft_labels = std::move(soft.values);
      } else {
        ++result.counters.partial_fallbacks;
      }
      result.targets = update_targets(result.targets, model.prototypes(), snap.z_v, snap.z_t, config.gamma);
      if (truth) {
        CorrectionAccuracy acc = correction_accuracy(result.soft_labels, *truth, result.training_targets);
        metrics.correction_assigned = acc.assigned;
        metrics.correction_overall = acc.overall;
      }
    }

    const Matrix observed_targets = one_hot(observed, k);
    const Matrix& epoch_targets = active && config.uses_plc() ? result.training_targets : observed_targets;
    const bool align = active && config.uses_bhg();

    std::shuffle(order.begin(), order.end(), rng);
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(n, start + config.batch_size);
      if (stop - start < 2) continue;
      const std::vector<Eigen::Index> rows(order.begin() + start, order.begin() + stop);
      const Matrix bx_v = gather_rows(x_v, rows);
      const Matrix bx_t = gather_rows(x_t, rows);
      const Matrix b_targets = gather_rows(epoch_targets, rows);

      Matrix matching;
      BatchObjective objective{&b_targets, nullptr, config.effective_lambda(), config.tau3};
      if (align) {
        const Matrix z_v = encode_batch(model, bx_v, Modality::kVisual);
        const Matrix z_t = encode_batch(model, bx_t, Modality::kText);
        const Matrix r_v = relation_scores(z_v, *conf, snap.z_v, config.tau2);
        const Matrix r_t = relation_scores(z_t, *conf, snap.z_t, config.tau2);
        const CostMatrix cost = CostMatrix::normalized(relation_cost(r_v, r_t).values());
        MatchingMatrix m = solve_matching(cost, match_params);
        ++result.counters.matching_solves;
        if (!m.converged) ++metrics.matching_unconverged;
        matching = std::move(m.values);
        objective.matching = &matching;
      }
      const LossGrad lg = loss_and_grad(model, bx_v, bx_t, objective);
      adam_step(model.params(), lg.grad, result.adam);
      metrics.loss += lg.loss;
      metrics.label_loss += lg.label_loss;
      metrics.align_loss += lg.align_loss;
      ++batches;
    }
    if (batches > 0) {
      metrics.loss /= batches;
      metrics.label_loss /= batches;
      metrics.align_loss /= batches;
    }
    if (data.splits.val > 0) {
      const auto [z_v, z_t] = embed_split(model, data, Split::kVal);
      const Labels val_labels(data.labels.begin() + data.splits.offset(Split::kVal),
                              data.labels.begin() + data.splits.offset(Split::kVal) + data.splits.val);
      const RetrievalResult r = evaluate_retrieval(z_v, z_t, val_labels);
      metrics.val_map_i2t = r.map_i2t;
      metrics.val_map_t2i = r.map_t2i;
    }
    result.log.push_back(metrics);
    result.epochs_completed = epoch + 1;
  }
  std::ostringstream rng_text;
  rng_text << rng;
  result.rng_state = rng_text.str();
  return result;
}

}  // namespace otrcl
