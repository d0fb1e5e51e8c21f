#pragma once

// Parameterized triplet Markov chain models over v_t = (z_t, x_t, y_t).
//
// Each model kind fixes a factorization of the transition p(v_t | v_{t-1})
// and of the variational distribution over (z, unobserved y):
//
//   dmtmc: p(y_t|y_{t-1}) p(z_t|z_{t-1}) p(x_t|y_t,z_t)
//          q(y_t|x_t, h~_{t-1}) q(z_t|x_t, y_t, h~_{t-1}),  h~_t = rnn(x_t, y_t, z_t, h~_{t-1})
//   vsl:   p(y_t|z_t) p(z_t|x_{t-1}, z_{t-1}) p(x_t|z_t)
//          q(z_t|x_0..x_T) from a bidirectional encoder, q(y_t|z_t) = p(y_t|z_t)
//   svrnn: p(y_t|h_{t-1}) p(z'_t|y_t, h_{t-1}) p(x_t|y_t, z'_t, h_{t-1}),  h_t = f(z'_t, y_t, x_t, h_{t-1})
//          q(y_t|x_t, h_{t-1}) q(z'_t|x_t, y_t, h_{t-1})
//
// Initial step: dmtmc has a learnable p(y_0) and p(z_0) = N(0, I); vsl uses
// p(z_0) = N(0, I); recurrent states start at zero.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tmcseg/autodiff.hpp"
#include "tmcseg/data.hpp"
#include "tmcseg/distributions.hpp"
#include "tmcseg/nn.hpp"

namespace tmcseg::models {

enum class ModelKind : std::uint8_t { Dmtmc, Vsl, Svrnn };

std::string to_string(ModelKind kind);
/// Display name used in reports: "d-mTMC", "VSL", "SVRNN".
std::string display_name(ModelKind kind);
ModelKind model_kind_from_string(std::string_view s);

/// Gumbel-Softmax temperature, linearly annealed from start to end over anneal_epochs.
struct TemperatureSchedule {
  double start = 0.5;
  double end = 0.5;
  std::size_t anneal_epochs = 0;

  double at(std::size_t epoch) const;
};

struct TmcConfig {
  ModelKind kind = ModelKind::Dmtmc;
  std::size_t d_x = 1;
  /// Latent dimension; for svrnn the stochastic part z'_t.
  std::size_t d_z = 2;
  std::size_t num_labels = 2;
  std::size_t hidden_units = 25;
  /// h~ (dmtmc) or h (svrnn) dimension.
  std::size_t rnn_state_dim = 44;
  /// vsl encoder: per-direction state and projected code dimensions.
  std::size_t encoder_state_dim = 8;
  std::size_t encoder_code_dim = 8;
  double beta = 0.1;
  double alpha = 1.0;
  TemperatureSchedule temperature;

  /// Defaults per kind, with hidden units 22 (svrnn), 25 (dmtmc), 41 (vsl)
  /// and recurrent sizes chosen so all three have about the same parameter count.
  static TmcConfig preset(ModelKind kind);
  void validate() const;
};

nlohmann::json config_to_json(const TmcConfig& cfg);
TmcConfig config_from_json(const nlohmann::json& j);

struct DmtmcNets {
  nn::Mlp2 p_y, p_z, p_x, q_z, q_y;
  nn::RnnCell recurrence;
  nn::ParamId y0_logits = 0;
};

struct VslNets {
  nn::Mlp2 p_y, p_z, p_x, q_z;
  nn::BiRnnEncoder encoder;
};

struct SvrnnNets {
  nn::Mlp2 p_y, p_z, p_x, q_z, q_y;
  nn::RnnCell recurrence;
};

/// Configuration, parameters and network layout. Nets for z are absent
/// (default-constructed, never evaluated) when d_z == 0.
struct TmcModel {
  TmcConfig config;
  nn::ParamSet params;
  std::variant<DmtmcNets, VslNets, SvrnnNets> nets;

  ModelKind kind() const noexcept { return config.kind; }
};

/// Builds the networks for cfg and initializes parameters from seed.
TmcModel make_model(const TmcConfig& cfg, std::uint64_t seed);

/// Per-step log-density nodes. Only the terms a model kind's factorization
/// defines are present.
struct TransitionTerms {
  std::optional<ad::Var> log_py;
  std::optional<ad::Var> log_pz;
  std::optional<ad::Var> log_px;
  std::optional<ad::Var> log_qy;
  std::optional<ad::Var> log_qz;
};

/// Label distribution from the pre-activation of a label head (sigmoid head for two labels, softmax otherwise).
dist::LabelDistribution label_head(nn::ParamBinding& bind, const nn::Mlp2& net, ad::Var input);

// --- d-mTMC -----------------------------------------------------------------

struct DmtmcPrevious {
  ad::Var y;
  ad::Var z;
};

/// prev is empty at t = 0.
TransitionTerms dmtmc_transition(nn::ParamBinding& bind, const TmcModel& model, const std::optional<DmtmcPrevious>& prev,
                                 ad::Var x, ad::Var y, ad::Var z);
/// q(y_t | x_t, h~_{t-1}); available before y_t is chosen.
dist::LabelDistribution dmtmc_q_label(nn::ParamBinding& bind, const TmcModel& model, ad::Var x, ad::Var h_prev);
/// q(z_t | x_t, y_t, h~_{t-1}); requires d_z > 0.
dist::DiagGaussian dmtmc_q_latent(nn::ParamBinding& bind, const TmcModel& model, ad::Var x, ad::Var y, ad::Var h_prev);
/// h~_t from (x_t, y_t, z_t, h~_{t-1}).
ad::Var dmtmc_recurrence(nn::ParamBinding& bind, const TmcModel& model, ad::Var x, ad::Var y, ad::Var z,
                         ad::Var h_prev);

// --- VSL --------------------------------------------------------------------

struct VslPrevious {
  ad::Var z;
  ad::Var x;
};

/// log p(y_t|z_t) is included only when y is given.
TransitionTerms vsl_transition(nn::ParamBinding& bind, const TmcModel& model, const std::optional<VslPrevious>& prev,
                               ad::Var x, std::optional<ad::Var> y, ad::Var z);
/// p(y_t | z_t), also used as q(y_t | z_t).
dist::LabelDistribution vsl_label(nn::ParamBinding& bind, const TmcModel& model, ad::Var z);
/// q(z_t | x_0..x_T) for every t.
std::vector<dist::DiagGaussian> vsl_variational(nn::ParamBinding& bind, const TmcModel& model,
                                                std::span<const ad::Var> xs);

// --- SVRNN ------------------------------------------------------------------

struct SvrnnTransition {
  TransitionTerms terms;
  ad::Var h;
};

SvrnnTransition svrnn_transition(nn::ParamBinding& bind, const TmcModel& model, ad::Var h_prev, ad::Var x, ad::Var y,
                                 ad::Var z);
/// h_t = f(z'_t, y_t, x_t, h_{t-1}).
ad::Var svrnn_recurrence(nn::ParamBinding& bind, const TmcModel& model, ad::Var z, ad::Var y, ad::Var x,
                         ad::Var h_prev);
dist::LabelDistribution svrnn_q_label(nn::ParamBinding& bind, const TmcModel& model, ad::Var x, ad::Var h_prev);
dist::DiagGaussian svrnn_q_latent(nn::ParamBinding& bind, const TmcModel& model, ad::Var x, ad::Var y, ad::Var h_prev);

// --- Sampling and joint density ---------------------------------------------

struct Trajectory {
  std::vector<std::vector<double>> zs;  // z_t (svrnn: z'_t)
  std::vector<std::vector<double>> xs;
  std::vector<data::Label> ys;

  std::size_t length() const noexcept { return ys.size(); }
};

/// Ancestral sample of steps 0..T. Reproducible for a given seed.
Trajectory generate(const TmcModel& model, std::size_t T, std::uint64_t seed);

/// Sum over t of the model's log transition terms for a complete trajectory.
double log_joint(const TmcModel& model, const Trajectory& traj);

const DmtmcNets& dmtmc_nets(const TmcModel& model);
const VslNets& vsl_nets(const TmcModel& model);
const SvrnnNets& svrnn_nets(const TmcModel& model);

}  // namespace tmcseg::models
