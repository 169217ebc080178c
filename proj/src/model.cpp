#include "otrcl/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "otrcl/relation_align.hpp"
#include "otrcl/semantic_align.hpp"

namespace otrcl {
namespace {

constexpr double kLogFloor = 1e-12;

Eigen::Index head_size(int input, int hidden, int embed) {
  return static_cast<Eigen::Index>(hidden) * input + hidden + static_cast<Eigen::Index>(embed) * hidden + embed;
}

struct HeadCache {
  Matrix pre;     // B x H before ReLU
  Matrix hidden;  // B x H after ReLU
  Matrix out;     // B x L
};

HeadCache forward(const ModelState::ConstHead& head, const Matrix& x) {
  HeadCache c;
  c.pre = x * head.w1.transpose();
  c.pre.rowwise() += head.b1.transpose();
  c.hidden = c.pre.cwiseMax(0.0);
  c.out = c.hidden * head.w2.transpose();
  c.out.rowwise() += head.b2.transpose();
  return c;
}

void backward(const ModelState::ConstHead& head, const HeadCache& cache, const Matrix& x,
              const Matrix& grad_out, ModelState::Head grad) {
  grad.w2 += grad_out.transpose() * cache.hidden;
  grad.b2 += grad_out.colwise().sum().transpose();
  Matrix grad_hidden = grad_out * head.w2;
  grad_hidden = grad_hidden.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
  grad.w1 += grad_hidden.transpose() * x;
  grad.b1 += grad_hidden.colwise().sum().transpose();
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double hi = logits.row(i).maxCoeff();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < logits.cols(); ++k) acc += std::exp(logits(i, k) - hi);
    out.row(i) = logits.row(i).array() - (hi + std::log(acc));
  }
  return out;
}

}  // namespace

ModelState::ModelState(ModelDims dims, double tau1) : dims_(dims), tau1_(tau1) {
  if (dims.dim_v < 1 || dims.dim_t < 1 || dims.hidden < 1 || dims.embed < 1 || dims.classes < 2)
    throw std::invalid_argument("invalid model dimensions");
  if (!(tau1 > 0.0)) throw std::invalid_argument("tau1 must be positive");
  params_ = Vector::Zero(param_count(dims));
}

Eigen::Index ModelState::param_count(const ModelDims& d) {
  return head_size(d.dim_v, d.hidden, d.embed) + head_size(d.dim_t, d.hidden, d.embed) +
         static_cast<Eigen::Index>(d.classes) * d.embed;
}

Eigen::Index ModelState::head_offset(Modality m) const {
  return m == Modality::kVisual ? 0 : head_size(dims_.dim_v, dims_.hidden, dims_.embed);
}

Eigen::Index ModelState::prototype_offset() const {
  return head_size(dims_.dim_v, dims_.hidden, dims_.embed) + head_size(dims_.dim_t, dims_.hidden, dims_.embed);
}

ModelState::Head ModelState::head(Modality m) {
  const int in = input_dim(m);
  double* p = params_.data() + head_offset(m);
  double* b1 = p + static_cast<Eigen::Index>(dims_.hidden) * in;
  double* w2 = b1 + dims_.hidden;
  double* b2 = w2 + static_cast<Eigen::Index>(dims_.embed) * dims_.hidden;
  return {MatrixMap(p, dims_.hidden, in), VectorMap(b1, dims_.hidden),
          MatrixMap(w2, dims_.embed, dims_.hidden), VectorMap(b2, dims_.embed)};
}

ModelState::ConstHead ModelState::head(Modality m) const {
  const int in = input_dim(m);
  const double* p = params_.data() + head_offset(m);
  const double* b1 = p + static_cast<Eigen::Index>(dims_.hidden) * in;
  const double* w2 = b1 + dims_.hidden;
  const double* b2 = w2 + static_cast<Eigen::Index>(dims_.embed) * dims_.hidden;
  return {ConstMatrixMap(p, dims_.hidden, in), ConstVectorMap(b1, dims_.hidden),
          ConstMatrixMap(w2, dims_.embed, dims_.hidden), ConstVectorMap(b2, dims_.embed)};
}

ModelState::MatrixMap ModelState::prototypes() {
  return MatrixMap(params_.data() + prototype_offset(), dims_.classes, dims_.embed);
}

ModelState::ConstMatrixMap ModelState::prototypes() const {
  return ConstMatrixMap(params_.data() + prototype_offset(), dims_.classes, dims_.embed);
}

ModelState ModelState::initialize(ModelDims dims, std::mt19937_64& rng, double tau1) {
  ModelState state(dims, tau1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Modality m : {Modality::kVisual, Modality::kText}) {
    Head h = state.head(m);
    const double s1 = std::sqrt(2.0 / static_cast<double>(state.input_dim(m)));
    const double s2 = std::sqrt(2.0 / static_cast<double>(dims.hidden));
    for (Eigen::Index i = 0; i < h.w1.size(); ++i) h.w1.data()[i] = s1 * gauss(rng);
    for (Eigen::Index i = 0; i < h.w2.size(); ++i) h.w2.data()[i] = s2 * gauss(rng);
  }
  auto protos = state.prototypes();
  const double sp = 1.0 / std::sqrt(static_cast<double>(dims.embed));
  for (Eigen::Index i = 0; i < protos.size(); ++i) protos.data()[i] = sp * gauss(rng);
  return state;
}

Vector encode(const ModelState& state, const Vector& x, Modality modality) {
  if (x.size() != state.input_dim(modality))
    throw std::invalid_argument("feature length " + std::to_string(x.size()) + " does not match head input " +
                                std::to_string(state.input_dim(modality)));
  return encode_batch(state, Matrix(x.transpose()), modality).row(0).transpose();
}

Matrix encode_batch(const ModelState& state, const Matrix& x, Modality modality) {
  if (x.cols() != state.input_dim(modality))
    throw std::invalid_argument("feature width " + std::to_string(x.cols()) + " does not match head input " +
                                std::to_string(state.input_dim(modality)));
  return forward(state.head(modality), x).out;
}

Vector class_probs(const Vector& z, const Matrix& prototypes, double tau1) {
  return class_probs_batch(Matrix(z.transpose()), prototypes, tau1).row(0).transpose();
}

Matrix class_probs_batch(const Matrix& z, const Matrix& prototypes, double tau1) {
  if (!(tau1 > 0.0)) throw std::invalid_argument("tau1 must be positive");
  if (z.cols() != prototypes.cols()) throw std::invalid_argument("embedding and prototype widths differ");
  return log_softmax_rows(z * prototypes.transpose() / tau1).array().exp();
}

double ce_loss(const Matrix& targets, const Matrix& pred_v, const Matrix& pred_t) {
  return soft_cross_entropy(targets, pred_v, pred_t);
}

LossGrad loss_and_grad(const ModelState& state, const Matrix& x_v, const Matrix& x_t,
                       const BatchObjective& objective) {
  const Eigen::Index b = x_v.rows();
  if (x_t.rows() != b) throw std::invalid_argument("modalities disagree on batch size");
  if (objective.targets == nullptr || objective.targets->rows() != b ||
      objective.targets->cols() != state.dims().classes)
    throw std::invalid_argument("batch targets missing or misshapen");

  const HeadCache cv = forward(state.head(Modality::kVisual), x_v);
  const HeadCache ct = forward(state.head(Modality::kText), x_t);
  const auto protos = state.prototypes();
  const double tau1 = state.tau1();
  const Matrix& targets = *objective.targets;

  LossGrad out;
  ModelState grads(state.dims(), tau1);
  Matrix grad_zv = Matrix::Zero(b, state.dims().embed);
  Matrix grad_zt = Matrix::Zero(b, state.dims().embed);
  auto grad_protos = grads.prototypes();

  // -(1/B) sum_i t_i . log softmax(mu z_i / tau1), per modality.
  for (const auto* cache : {&cv, &ct}) {
    const Matrix logp = log_softmax_rows(cache->out * protos.transpose() / tau1);
    Matrix grad_logits(b, state.dims().classes);
    for (Eigen::Index i = 0; i < b; ++i) {
      double mass = targets.row(i).sum();
      for (Eigen::Index k = 0; k < logp.cols(); ++k) {
        double t = targets(i, k);
        if (t != 0.0) out.label_loss -= t * std::max(logp(i, k), std::log(kLogFloor));
        grad_logits(i, k) = mass * std::exp(logp(i, k)) - t;
      }
    }
    grad_logits /= static_cast<double>(b) * tau1;
    Matrix& gz = cache == &cv ? grad_zv : grad_zt;
    gz += grad_logits * protos;
    grad_protos += grad_logits.transpose() * cache->out;
  }
  out.label_loss /= static_cast<double>(b);

  if (objective.matching != nullptr && objective.lambda != 0.0) {
    BhgTerms bhg = bhg_terms(*objective.matching, cv.out, ct.out, objective.tau3);
    out.align_loss = bhg.loss;
    grad_zv += objective.lambda * bhg.grad_v;
    grad_zt += objective.lambda * bhg.grad_t;
  }
  out.loss = total_loss(out.label_loss, out.align_loss, objective.lambda);

  backward(state.head(Modality::kVisual), cv, x_v, grad_zv, grads.head(Modality::kVisual));
  backward(state.head(Modality::kText), ct, x_t, grad_zt, grads.head(Modality::kText));
  out.grad = std::move(grads.params());
  if (!std::isfinite(out.loss) || !out.grad.allFinite())
    throw std::runtime_error("non-finite loss or gradient (loss=" + std::to_string(out.loss) + ")");
  return out;
}

void AdamState::reset(Eigen::Index n) {
  step = 0;
  m = Vector::Zero(n);
  v = Vector::Zero(n);
}

void adam_step(Vector& params, const Vector& grad, AdamState& adam) {
  if (grad.size() != params.size()) throw std::invalid_argument("gradient size mismatch");
  if (adam.m.size() != params.size()) adam.reset(params.size());
  ++adam.step;
  adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad;
  adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  for (Eigen::Index i = 0; i < params.size(); ++i)
    params(i) -= adam.lr * (adam.m(i) / c1) / (std::sqrt(adam.v(i) / c2) + adam.eps);
}

}  // namespace otrcl
