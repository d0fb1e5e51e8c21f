#include "tmcseg/distributions.hpp"

#include <cmath>
#include <numbers>

#include "tmcseg/errors.hpp"

namespace tmcseg::dist {
namespace {

void require_positive_std(const ad::Graph& g, ad::Var std, const char* who) {
  for (double s : g.value(std))
    if (s <= 0.0) throw ContractError(std::string(who) + ": standard deviation must be positive");
}

}  // namespace

DiagGaussian gaussian_from_head(ad::Graph& g, ad::Var head) {
  const std::size_t n = g.dim(head);
  if (n % 2 != 0) throw ShapeError("gaussian_from_head: head output must have even length");
  const std::size_t d = n / 2;
  return {g.slice(head, 0, d), g.clamp_min(g.softplus(g.slice(head, d, d)), kStdFloor)};
}

LabelDistribution label_from_logits(ad::Graph& g, ad::Var logits) {
  const ad::Var lp = g.log_softmax(logits);
  return {g.exp(lp), lp};
}

LabelDistribution label_from_bernoulli_logit(ad::Graph& g, ad::Var a) {
  if (g.dim(a) != 1) throw ShapeError("label_from_bernoulli_logit: expects a single logit");
  return label_from_logits(g, g.concat({g.zeros(1), a}));
}

LabelDistribution label_from_probs(ad::Graph& g, ad::Var probs) {
  double s = 0.0;
  for (double p : g.value(probs)) {
    if (p < 0.0) throw ContractError("label_from_probs: negative probability");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ContractError("label_from_probs: probabilities do not sum to 1");
  return {probs, g.log_clamped(probs, kProbEpsilon)};
}

ad::Var gaussian_logpdf(ad::Graph& g, const DiagGaussian& d, ad::Var x) {
  const std::size_t n = g.dim(x);
  if (g.dim(d.mean) != n || g.dim(d.std) != n) throw ShapeError("gaussian_logpdf: dimension mismatch");
  require_positive_std(g, d.std, "gaussian_logpdf");
  if (n == 0) return g.zeros(1);
  const ad::Var z = g.div(g.sub(x, d.mean), d.std);
  const ad::Var quad = g.scale(g.sum(g.square(z)), -0.5);
  const ad::Var logdet = g.sum(g.log(d.std));
  const double c = -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  return g.shift(g.sub(quad, logdet), c);
}

ad::Var gaussian_rsample(ad::Graph& g, const DiagGaussian& d, std::span<const double> noise) {
  if (g.dim(d.mean) != noise.size() || g.dim(d.std) != noise.size())
    throw ShapeError("gaussian_rsample: noise dimension mismatch");
  return g.add(d.mean, g.mul(d.std, g.constant(noise)));
}

ad::Var gaussian_kl(ad::Graph& g, const DiagGaussian& q, const DiagGaussian& p) {
  const std::size_t n = g.dim(q.mean);
  if (g.dim(q.std) != n || g.dim(p.mean) != n || g.dim(p.std) != n) throw ShapeError("gaussian_kl: dimension mismatch");
  require_positive_std(g, q.std, "gaussian_kl");
  require_positive_std(g, p.std, "gaussian_kl");
  if (n == 0) return g.zeros(1);
  // sum log(sp/sq) + (sq^2 + (mq-mp)^2) / (2 sp^2) - 1/2
  const ad::Var log_ratio = g.sub(g.log(p.std), g.log(q.std));
  const ad::Var num = g.add(g.square(q.std), g.square(g.sub(q.mean, p.mean)));
  const ad::Var frac = g.div(num, g.scale(g.square(p.std), 2.0));
  return g.shift(g.sum(g.add(log_ratio, frac)), -0.5 * static_cast<double>(n));
}

ad::Var label_logpmf(ad::Graph& g, const LabelDistribution& d, ad::Var y) {
  if (g.dim(y) != g.dim(d.log_probs)) throw ShapeError("label_logpmf: label dimension mismatch");
  return g.dot(y, d.log_probs);
}

RelaxedLabelSample gumbel_softmax_rsample(ad::Graph& g, const LabelDistribution& d, double temperature,
                                          std::span<const double> gumbel) {
  if (!(temperature > 0.0)) throw ContractError("gumbel_softmax_rsample: temperature must be positive");
  if (gumbel.size() != g.dim(d.log_probs)) throw ShapeError("gumbel_softmax_rsample: noise dimension mismatch");
  const ad::Var perturbed = g.add(d.log_probs, g.constant(gumbel));
  return {g.softmax(g.scale(perturbed, 1.0 / temperature)), temperature};
}

std::vector<double> draw_standard_normal(Rng& rng, std::size_t n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = nd(rng);
  return out;
}

std::vector<double> draw_gumbel(Rng& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) {
    double x = u(rng);
    while (x <= 0.0) x = u(rng);
    v = -std::log(-std::log(x));
  }
  return out;
}

std::size_t draw_categorical(Rng& rng, std::span<const double> probs) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  double acc = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    acc += probs[c];
    if (r < acc) return c;
  }
  return probs.size() - 1;
}

std::vector<double> one_hot(std::size_t label, std::size_t num_labels) {
  if (label >= num_labels) throw ContractError("one_hot: label out of range");
  std::vector<double> v(num_labels, 0.0);
  v[label] = 1.0;
  return v;
}

}  // namespace tmcseg::dist
