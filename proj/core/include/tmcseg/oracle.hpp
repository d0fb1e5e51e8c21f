#pragma once

// Exact reference computations on small or degenerate instances: log-domain
// forward-backward smoothing for a discrete hidden Markov chain with Gaussian
// emissions, and likelihood enumeration for models without a continuous latent.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tmcseg/data.hpp"
#include "tmcseg/errors.hpp"
#include "tmcseg/models.hpp"

namespace tmcseg::oracle {

struct DiscreteHmm {
  std::vector<double> initial;
  std::vector<std::vector<double>> transition;  // transition[i][j] = p(y_t = j | y_{t-1} = i)
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t states() const noexcept { return initial.size(); }
  void validate() const;
};

/// Observed data has probability zero under the model at the given step.
class EvidenceError : public NumericDomainError {
 public:
  EvidenceError(const std::string& what, std::size_t step) : NumericDomainError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct Smoothing {
  std::vector<std::vector<double>> posteriors;  // p(y_t | x, y^L)
  double log_evidence = 0.0;                    // log p(x, y^L)
};

/// clamp[t], when set, restricts y_t to that label.
Smoothing forward_backward(const DiscreteHmm& hmm, std::span<const double> xs,
                           std::span<const std::optional<data::Label>> clamp);
/// Clamps the observed labels of seq (d_x must be 1).
Smoothing forward_backward(const DiscreteHmm& hmm, const data::LabeledSequence& seq);

/// Per-step argmax of the smoothed posteriors, ties to label 0.
std::vector<data::Label> map_decode(const Smoothing& s);

/// log p(x, y^L) for a model with d_z = 0, by log-sum-exp over every completion of U.
double enumerate_loglik(const models::TmcModel& model, const data::LabeledSequence& seq);
inline constexpr std::size_t kMaxEnumerated = 20;

/// Sets the generative networks of a d-mTMC with d_z = 0 and d_x = 1 so that
/// p(y_0), p(y_t|y_{t-1}) and p(x_t|y_t) equal the HMM's tables exactly.
/// Uses the first C hidden units of each network as a ReLU pass-through of the one-hot input.
void configure_as_hmm(models::TmcModel& model, const DiscreteHmm& hmm);

/// Maximum-likelihood HMM from the observed labels of seq, with add-one smoothing on counts.
DiscreteHmm estimate_hmm(const data::LabeledSequence& seq);

}  // namespace tmcseg::oracle
