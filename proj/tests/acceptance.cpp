// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "otrcl/eval.hpp"
#include "otrcl/experiment.hpp"
#include "otrcl/ot_core.hpp"
#include "otrcl/partial_ot.hpp"
#include "otrcl/relation_align.hpp"
#include "otrcl/semantic_align.hpp"
#include "support.hpp"

using namespace otrcl;
using otrcl::testing::gaussian;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s [%d] %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix uniform01(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

Vector simplex(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v / v.sum();
}

void sinkhorn_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> rows(1, 50), cols(1, 10);
  int converged = 0;
  double worst = 0.0, residual = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = rows(rng), m = cols(rng);
    const Matrix c = uniform01(n, m, rng);
    const Vector a = simplex(n, rng), b = simplex(m, rng);
    const TransportPlan p = sinkhorn(CostMatrix(c), Marginal(a), Marginal(b));
    if (!p.converged) continue;
    ++converged;
    const double viol = std::max((p.values.rowwise().sum() - a).cwiseAbs().maxCoeff(),
                                 (p.values.colwise().sum().transpose() - b).cwiseAbs().maxCoeff());
    worst = std::max(worst, viol);
    residual = std::max(residual, p.marginal_error);
  }
  const double secs = seconds_since(t0);
  report(1, "Sinkhorn correctness", converged == 100 && worst <= 1e-6 && residual <= 1e-6 && secs < 5.0,
         std::to_string(converged) + "/100 converged, max marginal violation " + fmt("%.3g", worst) +
             " (before rounding " + fmt("%.3g", residual) + "), " +
             fmt("%.2f", secs) + " s");
}

void oracle_agreement() {
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<int> size(2, 6);
  int argmax_matches = 0;
  double min_gap = 1e300, max_gap = -1e300;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = size(rng);
    const Matrix c = uniform01(n, n, rng);
    const Vector u = Vector::Constant(n, 1.0 / n);
    const TransportPlan p = sinkhorn(CostMatrix(c), Marginal(u), Marginal(u), SinkhornParams{0.01});
    const AssignmentSolution opt = exact_ot_oracle(CostMatrix(c));
    const double gap = ot_objective(p.values, c) - opt.objective;
    min_gap = std::min(min_gap, gap);
    max_gap = std::max(max_gap, gap);
    bool same = true;
    for (int i = 0; i < n; ++i) {
      Eigen::Index j = 0;
      p.values.row(i).maxCoeff(&j);
      same = same && j == opt.permutation[static_cast<std::size_t>(i)];
    }
    argmax_matches += same;
  }
  report(2, "LP-oracle agreement", min_gap >= 0.0 && max_gap <= 0.05 && argmax_matches >= 18,
         "objective gap in [" + fmt("%.3g", min_gap) + ", " + fmt("%.3g", max_gap) + "], argmax matches " +
             std::to_string(argmax_matches) + "/20");
}

void partial_constraints() {
  std::mt19937_64 rng(3003);
  const int n = 200, k = 10;
  const Matrix c = uniform01(n, k, rng);
  const Vector prior = simplex(k, rng);
  bool ok = true;
  std::ostringstream detail;
  for (double s : {0.2, 0.5, 0.8}) {
    const SoftLabelMatrix y = solve_partial(PartialOTProblem(CostMatrix(c), s, prior));
    const double mass_err = std::abs(y.values.sum() / n - s);
    const double row_excess = y.values.rowwise().sum().maxCoeff() - 1.0;
    const double col_excess = (y.values.colwise().sum().transpose() - n * prior).maxCoeff();
    ok = ok && mass_err <= 1e-4 && row_excess <= 1e-4 && col_excess <= 1e-4;
    detail << "s=" << s << " |mass-s|=" << fmt("%.2g", mass_err) << " row excess " << fmt("%.2g", row_excess)
           << " col excess " << fmt("%.2g", col_excess) << "; ";
  }
  std::string d = detail.str();
  report(3, "Partial-OT constraints", ok, d.substr(0, d.size() - 2));
}

void gradient_checks() {
  const ModelDims dims{6, 5, 10, 8, 4};
  auto state = [&](std::uint64_t seed) {
    ModelState s(dims, 1.0);
    s.params() = gaussian(ModelState::param_count(dims), 1, seed, 0.5).col(0);
    return s;
  };
  const Matrix xv = gaussian(8, 6, 4001), xt = gaussian(8, 5, 4002);

  Matrix onehot = Matrix::Zero(8, 4);
  for (Eigen::Index i = 0; i < 8; ++i) onehot(i, (i * 3) % 4) = 1.0;
  const double ce = otrcl::testing::finite_difference_check(state(4010), xv, xt, {&onehot, nullptr, 0.0, 1.0}).max_rel_error;

  Matrix soft = gaussian(8, 4, 4020).cwiseAbs();
  for (Eigen::Index i = 0; i < 8; ++i) soft.row(i) *= (0.2 + 0.1 * static_cast<double>(i)) / soft.row(i).sum();
  const double plc = otrcl::testing::finite_difference_check(state(4021), xv, xt, {&soft, nullptr, 0.0, 1.0}).max_rel_error;

  const Matrix none = Matrix::Zero(8, 4);
  const MatchingMatrix match = solve_matching(CostMatrix(gaussian(8, 8, 4030).cwiseAbs()));
  const double bhg =
      otrcl::testing::finite_difference_check(state(4031), xv, xt, {&none, &match.values, 1.0, 1.0}).max_rel_error;

  report(4, "Gradient checks", ce <= 1e-4 && plc <= 1e-4 && bhg <= 1e-4,
         "max relative error: cross-entropy " + fmt("%.2g", ce) + ", corrected-label " + fmt("%.2g", plc) +
             ", alignment " + fmt("%.2g", bhg));
}

// Sorts the whole gallery per query and sums precision at each hit, queries
// in order.
double brute_map(const Matrix& q, const Matrix& g, const Labels& ql, const Labels& gl) {
  double total = 0.0;
  int counted = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    std::vector<std::pair<double, int>> order;
    for (Eigen::Index j = 0; j < g.rows(); ++j)
      order.push_back({-q.row(i).dot(g.row(j)) / (q.row(i).norm() * g.row(j).norm()), static_cast<int>(j)});
    std::sort(order.begin(), order.end());
    double sum = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r)
      if (gl[static_cast<std::size_t>(order[r].second)] == ql[static_cast<std::size_t>(i)]) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    if (hits == 0) continue;
    total += sum / hits;
    ++counted;
  }
  return total / counted;
}

void jsd_and_map() {
  const double j = jsd(Vector::Constant(2, 0.5), (Vector(2) << 1.0, 0.0).finished());
  std::mt19937_64 rng(5005);
  std::uniform_int_distribution<int> qs(1, 8), gs(2, 12), dim(2, 5), cls(2, 4);
  int exact = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const int nq = qs(rng), ng = gs(rng), d = dim(rng), k = cls(rng);
    const Matrix q = gaussian(nq, d, rng()), g = gaussian(ng, d, rng());
    Labels ql(static_cast<std::size_t>(nq)), gl(static_cast<std::size_t>(ng));
    for (auto& l : gl) l = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
    for (std::size_t i = 0; i < ql.size(); ++i) ql[i] = gl[i % gl.size()];  // every query has a hit
    exact += map_score(q, g, ql, gl) == brute_map(q, g, ql, gl);
  }
  report(5, "JSD and mAP oracles", std::abs(j - 0.215762) <= 1e-6 && exact == 50,
         "jsd " + fmt("%.7f", j) + ", mAP bitwise equal on " + std::to_string(exact) + "/50");
}

struct Run {
  double map = 0.0;
  std::optional<double> corrected;
  fs::path dir;
};

Run run(const fs::path& root, const std::string& name, double noise, TrainMode mode) {
  ExperimentConfig c;
  c.synth = SynthConfig{};
  c.synth->noise_ratio = noise;
  c.train.mode = mode;
  c.seed = 7;
  c.out_dir = root / name;
  c.apply_seed();
  const ExperimentOutputs out = run_experiment(c);
  Run r;
  r.map = out.test.mean();
  if (out.correction) r.corrected = out.correction->assigned;
  r.dir = c.out_dir;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "otrcl_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  sinkhorn_correctness();
  oracle_agreement();
  partial_constraints();
  gradient_checks();
  jsd_and_map();

  const auto t6 = Clock::now();
  const Run full4 = run(root, "full_rho0.4", 0.4, TrainMode::kFull);
  const Run base4 = run(root, "baseline_rho0.4", 0.4, TrainMode::kBaselineCE);
  const Run no_plc = run(root, "ablate_plc_rho0.4", 0.4, TrainMode::kAblatePLC);
  const Run no_bhg = run(root, "ablate_bhg_rho0.4", 0.4, TrainMode::kAblateBHG);
  const double secs6 = seconds_since(t6);
  const double clean = 0.6;
  const bool a = full4.corrected && *full4.corrected >= clean + 0.15;
  const bool b = full4.map - base4.map >= 0.05;
  const bool c = no_plc.map < full4.map && no_bhg.map < full4.map;
  report(6, "End-to-end robustness", a && b && c && secs6 < 600.0,
         "corrected accuracy " + (full4.corrected ? fmt("%.4f", *full4.corrected) : std::string("n/a")) +
             " (need >= 0.75), mAP full " + fmt("%.4f", full4.map) + " vs baseline " + fmt("%.4f", base4.map) +
             ", ablate PLC " + fmt("%.4f", no_plc.map) + ", ablate BHG " + fmt("%.4f", no_bhg.map) + ", " +
             fmt("%.0f", secs6) + " s");

  const Run full2 = run(root, "full_rho0.2", 0.2, TrainMode::kFull);
  const Run base2 = run(root, "baseline_rho0.2", 0.2, TrainMode::kBaselineCE);
  const Run full6 = run(root, "full_rho0.6", 0.6, TrainMode::kFull);
  const Run base6 = run(root, "baseline_rho0.6", 0.6, TrainMode::kBaselineCE);
  const bool mono = full2.map >= full4.map && full4.map >= full6.map;
  const bool above = full2.map > base2.map && full4.map > base4.map && full6.map > base6.map;
  report(7, "Noise-monotonic degradation", mono && above,
         "full " + fmt("%.4f", full2.map) + " / " + fmt("%.4f", full4.map) + " / " + fmt("%.4f", full6.map) +
             ", baseline " + fmt("%.4f", base2.map) + " / " + fmt("%.4f", base4.map) + " / " + fmt("%.4f", base6.map) +
             " at rho 0.2 / 0.4 / 0.6");

  int identical = 0, total = 0;
  for (const Run* r : {&full4, &base4, &no_plc, &no_bhg, &full2, &base2, &full6, &base6}) {
    ExperimentConfig again = load_experiment_config(r->dir / "run_manifest.json");
    again.out_dir = r->dir.string() + "_rerun";
    run_experiment(again);
    ++total;
    identical += slurp(r->dir / "metrics.json") == slurp(again.out_dir / "metrics.json") &&
                 slurp(r->dir / "metrics.csv") == slurp(again.out_dir / "metrics.csv");
  }
  report(8, "Reproducibility", identical == total,
         std::to_string(identical) + "/" + std::to_string(total) + " reruns from run_manifest.json bit-identical");

  return failures == 0 ? 0 : 1;
}
