#pragma once

// Diagonal Gaussians and categorical label distributions over the autodiff
// graph, with reparameterized sampling. Noise is always drawn by the caller
// so that estimators can replay identical random numbers.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "tmcseg/autodiff.hpp"

namespace tmcseg::dist {

inline constexpr double kStdFloor = 1e-4;
inline constexpr double kProbEpsilon = 1e-12;

using Rng = std::mt19937_64;

struct DiagGaussian {
  ad::Var mean;
  ad::Var std;
};

/// Splits a 2d-dimensional head output into (mean, max(softplus(raw), kStdFloor)).
DiagGaussian gaussian_from_head(ad::Graph& g, ad::Var head);

/// Categorical distribution on C labels. Both views are kept so that
/// log-densities never need log(probs).
struct LabelDistribution {
  ad::Var probs;
  ad::Var log_probs;
};

/// From unnormalized logits (softmax parameterization).
LabelDistribution label_from_logits(ad::Graph& g, ad::Var logits);
/// Two-class Bernoulli from the pre-sigmoid output a: rho = sigmoid(a) = p(omega_2).
LabelDistribution label_from_bernoulli_logit(ad::Graph& g, ad::Var a);
/// From explicit probabilities; zero entries are clamped at log(kProbEpsilon) and counted by the graph.
LabelDistribution label_from_probs(ad::Graph& g, ad::Var probs);

struct RelaxedLabelSample {
  ad::Var soft;
  double temperature = 1.0;
};

ad::Var gaussian_logpdf(ad::Graph& g, const DiagGaussian& d, ad::Var x);
/// mean + std * noise.
ad::Var gaussian_rsample(ad::Graph& g, const DiagGaussian& d, std::span<const double> noise);
/// Closed-form KL(q || p) for diagonal Gaussians.
ad::Var gaussian_kl(ad::Graph& g, const DiagGaussian& q, const DiagGaussian& p);

/// sum_c y_c log p_c. Exact log-pmf for one-hot y, linear relaxation for soft y.
ad::Var label_logpmf(ad::Graph& g, const LabelDistribution& d, ad::Var y);
/// softmax((log p + gumbel) / temperature).
RelaxedLabelSample gumbel_softmax_rsample(ad::Graph& g, const LabelDistribution& d, double temperature,
                                          std::span<const double> gumbel);

std::vector<double> draw_standard_normal(Rng& rng, std::size_t n);
/// -log(-log(u)), u ~ U(0,1).
std::vector<double> draw_gumbel(Rng& rng, std::size_t n);
/// Index sampled from a categorical with the given probabilities.
std::size_t draw_categorical(Rng& rng, std::span<const double> probs);

std::vector<double> one_hot(std::size_t label, std::size_t num_labels);

}  // namespace tmcseg::dist
