#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "otrcl/data.hpp"
#include "otrcl/eval.hpp"
#include "otrcl/experiment.hpp"
#include "otrcl/model.hpp"
#include "otrcl/ot_core.hpp"
#include "otrcl/partial_ot.hpp"
#include "otrcl/relation_align.hpp"
#include "otrcl/semantic_align.hpp"

namespace py = pybind11;
using namespace otrcl;

namespace {

SinkhornParams params(double epsilon, int max_iters, double tol) {
  SinkhornParams p;
  p.epsilon = epsilon;
  p.max_iters = max_iters;
  p.tol = tol;
  return p;
}

ConfidentSet confident_from(const std::vector<std::vector<int>>& per_class) {
  ConfidentSet c;
  c.per_class = per_class;
  c.size_per_class = per_class.empty() ? 0 : static_cast<int>(per_class.front().size());
  return c;
}

}  // namespace

PYBIND11_MODULE(_otrcl, m) {
  m.doc() = "Optimal-transport label correction and cross-modal alignment";
  m.attr("__version__") = "0.1.0";

  py::register_exception<LoadError>(m, "LoadError", PyExc_OSError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_ValueError);

  py::class_<TransportPlan>(m, "TransportPlan")
      .def_readonly("plan", &TransportPlan::values)
      .def_readonly("converged", &TransportPlan::converged)
      .def_readonly("iterations", &TransportPlan::iterations)
      .def_readonly("marginal_error", &TransportPlan::marginal_error);

  m.def(
      "sinkhorn",
      [](const Matrix& cost, const Vector& alpha, const Vector& beta, double epsilon, int max_iters, double tol) {
        return sinkhorn(CostMatrix(cost), Marginal(alpha), Marginal(beta), params(epsilon, max_iters, tol));
      },
      py::arg("cost"), py::arg("alpha"), py::arg("beta"), py::arg("epsilon") = 0.1, py::arg("max_iters") = 5000,
      py::arg("tol") = 1e-6);
  m.def("ot_objective", &ot_objective, py::arg("plan"), py::arg("cost"));
  m.def(
      "exact_ot_oracle",
      [](const Matrix& cost) {
        const AssignmentSolution s = exact_ot_oracle(CostMatrix(cost));
        return py::make_tuple(s.permutation, s.objective);
      },
      py::arg("cost"), "Returns (permutation, objective) for a uniform square problem, n <= 8.");

  py::class_<SoftLabelMatrix>(m, "SoftLabelMatrix")
      .def_readonly("values", &SoftLabelMatrix::values)
      .def_readonly("assigned_mass", &SoftLabelMatrix::assigned_mass)
      .def_readonly("converged", &SoftLabelMatrix::converged)
      .def_readonly("marginal_error", &SoftLabelMatrix::marginal_error);

  m.def(
      "solve_partial",
      [](const Matrix& cost, double mass, const Vector& class_prior, double epsilon, int max_iters, double tol) {
        return solve_partial(PartialOTProblem(CostMatrix(cost), mass, class_prior), params(epsilon, max_iters, tol));
      },
      py::arg("cost"), py::arg("mass"), py::arg("class_prior"), py::arg("epsilon") = 0.1, py::arg("max_iters") = 5000,
      py::arg("tol") = 1e-6);
  m.def(
      "mass_at",
      [](double s_start, double s_end, int total_epochs, int epoch) {
        return mass_at(MassSchedule{s_start, s_end, total_epochs}, epoch);
      },
      py::arg("s_start"), py::arg("s_end"), py::arg("total_epochs"), py::arg("epoch"));

  m.def("jsd", py::overload_cast<const Vector&, const Vector&>(&jsd), py::arg("p"), py::arg("q"));
  m.def(
      "select_confident",
      [](const Matrix& pred_v, const Matrix& pred_t, int size_per_class) {
        return select_confident(pred_v, pred_t, size_per_class).per_class;
      },
      py::arg("pred_v"), py::arg("pred_t"), py::arg("size_per_class"),
      "Confident members per class, lowest cross-modal divergence first.");
  m.def(
      "knn",
      [](const Matrix& embeddings, int k) {
        NeighborIndex n = knn(embeddings, k);
        return py::make_tuple(n.indices, n.similarities);
      },
      py::arg("embeddings"), py::arg("k"));
  m.def(
      "semantic_cost",
      [](const std::vector<std::vector<int>>& confident, const Matrix& targets, const Matrix& z_v, const Matrix& z_t,
         int k) {
        const ConfidentSet conf = confident_from(confident);
        return semantic_cost(conf, knn(z_v, k), knn(z_t, k), targets, z_v, z_t);
      },
      py::arg("confident"), py::arg("targets"), py::arg("z_v"), py::arg("z_t"), py::arg("k"));
  m.def(
      "relation_scores",
      [](const Matrix& z, const std::vector<std::vector<int>>& confident, const Matrix& z_conf_source, double tau2) {
        return relation_scores(z, confident_from(confident), z_conf_source, tau2);
      },
      py::arg("z"), py::arg("confident"), py::arg("z_conf_source"), py::arg("tau2") = 0.1);
  m.def(
      "relation_cost", [](const Matrix& r_v, const Matrix& r_t) { return relation_cost(r_v, r_t).values(); },
      py::arg("r_v"), py::arg("r_t"));
  m.def(
      "solve_matching",
      [](const Matrix& cost, double epsilon, int max_iters, double tol) {
        return solve_matching(CostMatrix(cost), params(epsilon, max_iters, tol)).values;
      },
      py::arg("cost"), py::arg("epsilon") = 0.1, py::arg("max_iters") = 5000, py::arg("tol") = 1e-6);
  m.def("bhg_loss", &bhg_loss, py::arg("matching"), py::arg("z_v"), py::arg("z_t"), py::arg("tau3") = 1.0);
  m.def("class_probs", &class_probs_batch, py::arg("z"), py::arg("prototypes"), py::arg("tau1") = 1.0);
  m.def("map_score", &map_score, py::arg("queries"), py::arg("gallery"), py::arg("query_labels"),
        py::arg("gallery_labels"));

  m.def(
      "generate",
      [](Eigen::Index n_train, Eigen::Index n_val, Eigen::Index n_test, int classes, int dim_v, int dim_t,
         int latent_dim, double cluster_spread, double modality_noise, double noise_ratio, std::uint64_t seed) {
        SynthConfig c;
        c.n_train = n_train;
        c.n_val = n_val;
        c.n_test = n_test;
        c.classes = classes;
        c.dim_v = dim_v;
        c.dim_t = dim_t;
        c.latent_dim = latent_dim;
        c.cluster_spread = cluster_spread;
        c.modality_noise = modality_noise;
        c.noise_ratio = noise_ratio;
        c.seed = seed;
        c.validate();
        const Dataset d = generate(c);
        py::dict out;
        out["features_v"] = d.features_v;
        out["features_t"] = d.features_t;
        out["labels"] = d.labels;
        out["true_labels"] = *d.true_labels;
        out["splits"] = py::make_tuple(d.splits.train, d.splits.val, d.splits.test);
        return out;
      },
      py::arg("n_train") = 2000, py::arg("n_val") = 500, py::arg("n_test") = 500, py::arg("classes") = 10,
      py::arg("dim_v") = 32, py::arg("dim_t") = 32, py::arg("latent_dim") = 16, py::arg("cluster_spread") = 0.2,
      py::arg("modality_noise") = 0.3, py::arg("noise_ratio") = 0.0, py::arg("seed") = 7);
  m.def("inject_symmetric_noise", &inject_symmetric_noise, py::arg("labels"), py::arg("num_classes"),
        py::arg("ratio"), py::arg("seed"));

  m.def(
      "_run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = experiment_from_json(nlohmann::json::parse(config_json));
        std::string report;
        {
          py::gil_scoped_release release;
          report = metrics_report(run_experiment(cfg)).dump();
        }
        return report;
      },
      py::arg("config_json"));
}
