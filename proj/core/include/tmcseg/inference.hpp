#pragma once

// Monte-Carlo ELBO estimators, the training loop, and posterior label decoding.
//
// Per-step noise is drawn in a fixed order (Gumbel noise for an unobserved
// label, then standard-normal noise for z), independent of parameter values,
// so replaying an Rng state gives common random numbers across evaluations.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tmcseg/autodiff.hpp"
#include "tmcseg/data.hpp"
#include "tmcseg/distributions.hpp"
#include "tmcseg/models.hpp"
#include "tmcseg/nn.hpp"

namespace tmcseg::inference {

/// How unobserved labels are drawn inside the estimator. Relaxed draws are
/// differentiable and used for training; Hard draws take the argmax of the
/// same perturbed logits, which makes the estimate a proper lower bound.
enum class LabelSampling : std::uint8_t { Relaxed, Hard };

/// Weighted contributions; total is their sum.
///   reconstruction   sum_t log p(x_t|.)                   (x beta for vsl)
///   kl_or_prior      sum_t log p(z_t|.) - log q(z_t|.)     (x beta for vsl)
///   label_supervised sum_{t in L} log p(y_t|.)
///   label_entropy    sum_{t in U} log p(y_t|.) - log q(y_t|.)
///   penalty          alpha sum_{t in L} log p(y_t|h) + log q(y_t|x,h)   (svrnn)
struct ElboTerms {
  double reconstruction = 0.0;
  double kl_or_prior = 0.0;
  double label_supervised = 0.0;
  double label_entropy = 0.0;
  double penalty = 0.0;

  double sum() const noexcept { return reconstruction + kl_or_prior + label_supervised + label_entropy + penalty; }
};

struct ElboEstimate {
  double total = 0.0;
  ElboTerms terms;
  std::size_t n_samples = 0;
  bool valid = true;
};

/// Scalar graph nodes of one single-sample estimate.
struct ElboNodes {
  ad::Var total;
  ad::Var reconstruction;
  ad::Var kl_or_prior;
  ad::Var label_supervised;
  ad::Var label_entropy;
  ad::Var penalty;
};

struct ElboOptions {
  double temperature = 0.5;
  LabelSampling sampling = LabelSampling::Relaxed;
};

/// Recurrent state carried across truncation windows (values only, no gradient).
struct CarriedState {
  std::vector<double> h;
  std::vector<double> y_prev;
  std::vector<double> z_prev;
  bool started = false;
};

/// Steps [begin, end) of a sequence. Whole sequence when begin = 0 and end = length.
struct Window {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// d-mTMC estimator, variational factorization q(y_t|x_t,h~) q(z_t|x_t,y_t,h~).
ElboNodes elbo_generic(nn::ParamBinding& bind, const models::TmcModel& model, const data::LabeledSequence& seq,
                       dist::Rng& rng, const ElboOptions& opt, Window window = {}, CarriedState* carry = nullptr);
/// VSL estimator: supervised term plus beta times the z-ELBO. Always covers the whole sequence.
ElboNodes elbo_vsl(nn::ParamBinding& bind, const models::TmcModel& model, const data::LabeledSequence& seq,
                   dist::Rng& rng);
/// SVRNN estimator with the alpha-weighted label penalty.
ElboNodes elbo_svrnn(nn::ParamBinding& bind, const models::TmcModel& model, const data::LabeledSequence& seq,
                     dist::Rng& rng, const ElboOptions& opt, Window window = {}, CarriedState* carry = nullptr);

/// Dispatches on the model kind.
ElboNodes build_elbo(nn::ParamBinding& bind, const models::TmcModel& model, const data::LabeledSequence& seq,
                     dist::Rng& rng, const ElboOptions& opt, Window window = {}, CarriedState* carry = nullptr);

ElboEstimate read_estimate(const ad::Graph& g, const ElboNodes& nodes);

/// Average of n_samples independent single-sample estimates (value only).
ElboEstimate estimate_elbo(const models::TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
                           std::size_t n_samples, const ElboOptions& opt);

/// Single-sample estimate; adds d(ELBO)/d(param) into model.params grads.
ElboEstimate elbo_with_gradient(models::TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
                                const ElboOptions& opt);

struct TrainConfig {
  std::size_t epochs = 300;
  double learning_rate = 1e-3;
  std::size_t mc_samples = 1;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  /// 0 means whole-sequence steps; otherwise one Adam step per window of this length.
  std::size_t truncation_window = 0;
  std::size_t max_consecutive_skips = 10;
  /// Decode and score every this many epochs (0 disables); requires ground truth.
  std::size_t eval_every = 0;
  std::size_t eval_samples = 5;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TraceRow {
  std::size_t epoch = 0;
  ElboEstimate elbo;
  std::optional<double> error_rate;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<TraceRow> rows;
  std::size_t skipped_steps = 0;
};

/// epoch,elbo,reconstruction,kl_or_prior,label_supervised,label_entropy,penalty,error_rate,seconds
void write_trace_csv(std::ostream& os, const TrainTrace& trace);
void save_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);

/// Thrown when more than max_consecutive_skips steps in a row had a non-finite loss.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const TraceRow&)>;

/// Maximizes the ELBO with Adam. Reproducible given cfg.seed.
TrainTrace train(models::TmcModel& model, const data::LabeledSequence& seq, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {});

struct PosteriorLabels {
  /// Per step: the estimated label distribution (observed steps carry their one-hot label).
  std::vector<std::vector<double>> probs;
  std::vector<data::Label> decoded;
};

/// Estimates p(y_t | x, y^L) for t in U by averaging the variational label
/// distribution over n_samples runs of the variational recursion with hard
/// label draws; argmax decode with ties to label 0. Observed steps pass through.
PosteriorLabels posterior_labels(const models::TmcModel& model, const data::LabeledSequence& seq,
                                 std::size_t n_samples, std::uint64_t seed);

}  // namespace tmcseg::inference
