#include "tmcseg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace tmcseg::oracle {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_normal(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

void DiscreteHmm::validate() const {
  const std::size_t C = states();
  if (C < 2) throw ContractError("hmm: need at least two states");
  if (transition.size() != C || mean.size() != C || stddev.size() != C)
    throw ContractError("hmm: table sizes disagree");
  auto check_row = [](std::span<const double> row, const char* what) {
    double s = 0.0;
    for (double p : row) {
      if (p < 0.0) throw ContractError(std::string("hmm: negative probability in ") + what);
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ContractError(std::string("hmm: ") + what + " does not sum to 1");
  };
  check_row(initial, "initial distribution");
  for (const auto& row : transition) {
    if (row.size() != C) throw ContractError("hmm: transition matrix is not square");
    check_row(row, "transition row");
  }
  for (double s : stddev)
    if (!(s > 0.0)) throw ContractError("hmm: emission std must be positive");
}

Smoothing forward_backward(const DiscreteHmm& hmm, std::span<const double> xs,
                           std::span<const std::optional<data::Label>> clamp) {
  hmm.validate();
  const std::size_t C = hmm.states();
  const std::size_t n = xs.size();
  if (n == 0) throw ContractError("forward_backward: empty sequence");
  if (!clamp.empty() && clamp.size() != n) throw ContractError("forward_backward: constraint length mismatch");

  std::vector<std::vector<double>> logA(C, std::vector<double>(C));
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) logA[i][j] = safe_log(hmm.transition[i][j]);

  auto emission = [&](std::size_t t, std::size_t c) {
    if (!clamp.empty() && clamp[t] && *clamp[t] != c) return kNegInf;
    return log_normal(xs[t], hmm.mean[c], hmm.stddev[c]);
  };

  // Scaled log-forward variables: each row normalized, normalizers summed into the evidence.
  std::vector<std::vector<double>> alpha(n, std::vector<double>(C));
  std::vector<double> tmp(C);
  double log_evidence = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < C; ++j) {
      double prior;
      if (t == 0) {
        prior = safe_log(hmm.initial[j]);
      } else {
        for (std::size_t i = 0; i < C; ++i) tmp[i] = alpha[t - 1][i] + logA[i][j];
        prior = log_sum_exp(tmp);
      }
      alpha[t][j] = prior + emission(t, j);
    }
    const double norm = log_sum_exp(alpha[t]);
    if (norm == kNegInf)
      throw EvidenceError("forward_backward: zero-probability evidence at t=" + std::to_string(t), t);
    for (double& a : alpha[t]) a -= norm;
    log_evidence += norm;
  }

  std::vector<double> beta(C, 0.0), next(C);
  Smoothing out;
  out.log_evidence = log_evidence;
  out.posteriors.assign(n, std::vector<double>(C));
  for (std::size_t k = n; k-- > 0;) {
    if (k + 1 < n) {
      for (std::size_t i = 0; i < C; ++i) {
        for (std::size_t j = 0; j < C; ++j) tmp[j] = logA[i][j] + emission(k + 1, j) + beta[j];
        next[i] = log_sum_exp(tmp);
      }
      const double m = log_sum_exp(next);
      for (std::size_t i = 0; i < C; ++i) beta[i] = next[i] - m;
    }
    for (std::size_t c = 0; c < C; ++c) tmp[c] = alpha[k][c] + beta[c];
    const double z = log_sum_exp(tmp);
    for (std::size_t c = 0; c < C; ++c) out.posteriors[k][c] = std::exp(tmp[c] - z);
  }
  return out;
}

Smoothing forward_backward(const DiscreteHmm& hmm, const data::LabeledSequence& seq) {
  seq.validate();
  if (seq.d_x != 1) throw ContractError("forward_backward: scalar observations required");
  std::vector<std::optional<data::Label>> clamp(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t)
    if (seq.observed(t)) clamp[t] = seq.truth[t];
  return forward_backward(hmm, seq.xs, clamp);
}

std::vector<data::Label> map_decode(const Smoothing& s) {
  std::vector<data::Label> out(s.posteriors.size());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto& p = s.posteriors[t];
    out[t] = static_cast<data::Label>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return out;
}

double enumerate_loglik(const models::TmcModel& model, const data::LabeledSequence& seq) {
  if (model.config.d_z != 0) throw ContractError("enumerate_loglik: model must have d_z = 0");
  seq.validate();
  const auto U = seq.unobserved_indices();
  if (U.size() > kMaxEnumerated)
    throw ContractError("enumerate_loglik: " + std::to_string(U.size()) + " unobserved labels exceed the limit of " +
                        std::to_string(kMaxEnumerated));
  const std::size_t C = seq.num_labels;
  models::Trajectory tr;
  tr.ys = seq.truth;
  tr.zs.assign(seq.length(), {});
  for (std::size_t t = 0; t < seq.length(); ++t) tr.xs.emplace_back(seq.x(t).begin(), seq.x(t).end());

  std::size_t total = 1;
  for (std::size_t i = 0; i < U.size(); ++i) total *= C;
  std::vector<double> lls;
  lls.reserve(total);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t t : U) {
      tr.ys[t] = static_cast<data::Label>(rest % C);
      rest /= C;
    }
    lls.push_back(models::log_joint(model, tr));
  }
  return log_sum_exp(lls);
}

void configure_as_hmm(models::TmcModel& model, const DiscreteHmm& hmm) {
  hmm.validate();
  const auto& c = model.config;
  if (model.kind() != models::ModelKind::Dmtmc || c.d_z != 0 || c.d_x != 1)
    throw ContractError("configure_as_hmm: requires a d-mTMC with d_z = 0 and d_x = 1");
  const std::size_t C = c.num_labels;
  if (hmm.states() != C) throw ContractError("configure_as_hmm: state count mismatch");
  if (c.hidden_units < C) throw ContractError("configure_as_hmm: hidden_units must be at least the label count");
  for (double s : hmm.stddev)
    if (s <= dist::kStdFloor) throw ContractError("configure_as_hmm: emission std below the floor");

  const auto& n = models::dmtmc_nets(model);
  auto& P = model.params;
  auto pass_through = [&](const nn::Mlp2& net) {
    for (nn::ParamId id : {net.w1, net.b1, net.w2, net.b2, net.w3, net.b3})
      std::fill(P[id].value.begin(), P[id].value.end(), 0.0);
    for (std::size_t i = 0; i < C; ++i) {
      P[net.w1].value[i * net.input_dim + i] = 1.0;
      P[net.w2].value[i * net.hidden_dim + i] = 1.0;
    }
  };
  const bool bernoulli = C == 2;
  // Output row r, source state i.
  auto set_out = [&](const nn::Mlp2& net, std::size_t r, std::size_t i, double v) {
    P[net.w3].value[r * net.hidden_dim + i] = v;
  };

  pass_through(n.p_y);
  for (std::size_t i = 0; i < C; ++i) {
    if (bernoulli)
      set_out(n.p_y, 0, i, safe_log(hmm.transition[i][1]) - safe_log(hmm.transition[i][0]));
    else
      for (std::size_t j = 0; j < C; ++j) set_out(n.p_y, j, i, safe_log(hmm.transition[i][j]));
  }
  pass_through(n.p_x);
  for (std::size_t i = 0; i < C; ++i) {
    set_out(n.p_x, 0, i, hmm.mean[i]);
    set_out(n.p_x, 1, i, std::log(std::expm1(hmm.stddev[i])));
  }
  auto& y0 = P[n.y0_logits].value;
  if (bernoulli)
    y0[0] = safe_log(hmm.initial[1]) - safe_log(hmm.initial[0]);
  else
    for (std::size_t j = 0; j < C; ++j) y0[j] = safe_log(hmm.initial[j]);
}

DiscreteHmm estimate_hmm(const data::LabeledSequence& seq) {
  seq.validate();
  if (seq.d_x != 1) throw ContractError("estimate_hmm: scalar observations required");
  const std::size_t C = seq.num_labels;
  std::vector<double> count(C, 1.0);
  std::vector<std::vector<double>> trans(C, std::vector<double>(C, 1.0));
  std::vector<double> sum(C, 0.0), sum_sq(C, 0.0), n(C, 0.0);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (!seq.observed(t)) continue;
    const auto y = seq.truth[t];
    count[y] += 1.0;
    const double x = seq.xs[t];
    sum[y] += x;
    sum_sq[y] += x * x;
    n[y] += 1.0;
    if (t > 0 && seq.observed(t - 1)) trans[seq.truth[t - 1]][y] += 1.0;
  }
  DiscreteHmm hmm;
  const double total = std::accumulate(count.begin(), count.end(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    hmm.initial.push_back(count[c] / total);
    const double row = std::accumulate(trans[c].begin(), trans[c].end(), 0.0);
    std::vector<double> r;
    for (double v : trans[c]) r.push_back(v / row);
    hmm.transition.push_back(std::move(r));
    const double mu = n[c] > 0.0 ? sum[c] / n[c] : 0.0;
    const double var = n[c] > 1.0 ? sum_sq[c] / n[c] - mu * mu : 1.0;
    hmm.mean.push_back(mu);
    hmm.stddev.push_back(std::sqrt(std::max(var, 1e-6)));
  }
  return hmm;
}

}  // namespace tmcseg::oracle
