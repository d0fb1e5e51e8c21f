#include "tmcseg/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "tmcseg/errors.hpp"

namespace tmcseg::inference {

using ad::Var;
using models::ModelKind;
using models::TmcModel;

namespace {

struct Accumulator {
  std::vector<Var> recon, kl, sup, ent, pen;
};

Var sum_all(ad::Graph& g, const std::vector<Var>& parts) {
  if (parts.empty()) return g.zeros(1);
  if (parts.size() == 1) return parts.front();
  return g.sum(g.concat(std::span<const Var>(parts)));
}

ElboNodes finish(ad::Graph& g, const Accumulator& acc, double z_weight, double penalty_weight) {
  ElboNodes n;
  n.reconstruction = g.scale(sum_all(g, acc.recon), z_weight);
  n.kl_or_prior = g.scale(sum_all(g, acc.kl), z_weight);
  n.label_supervised = sum_all(g, acc.sup);
  n.label_entropy = sum_all(g, acc.ent);
  n.penalty = g.scale(sum_all(g, acc.pen), penalty_weight);
  n.total = g.add(g.add(g.add(n.reconstruction, n.kl_or_prior), g.add(n.label_supervised, n.label_entropy)),
                  n.penalty);
  return n;
}

Window resolve(Window w, const data::LabeledSequence& seq) {
  if (w.begin == 0 && w.end == 0) w.end = seq.length();
  if (w.begin >= w.end || w.end > seq.length()) throw ContractError("elbo: invalid window");
  return w;
}

void check_sequence(const TmcModel& model, const data::LabeledSequence& seq) {
  seq.validate();
  if (seq.d_x != model.config.d_x || seq.num_labels != model.config.num_labels)
    throw ContractError("elbo: sequence dimensions do not match the model");
}

std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Label for step t: the observed one-hot, or a draw from q using fresh Gumbel noise.
Var choose_label(ad::Graph& g, const data::LabeledSequence& seq, std::size_t t, const dist::LabelDistribution& qy,
                 dist::Rng& rng, const ElboOptions& opt) {
  const std::size_t C = seq.num_labels;
  if (seq.observed(t)) return g.constant(dist::one_hot(seq.observed_label(t), C));
  const auto gumbel = dist::draw_gumbel(rng, C);
  if (opt.sampling == LabelSampling::Relaxed) return dist::gumbel_softmax_rsample(g, qy, opt.temperature, gumbel).soft;
  const auto lp = g.value(qy.log_probs);
  std::vector<double> perturbed(C);
  for (std::size_t c = 0; c < C; ++c) perturbed[c] = lp[c] + gumbel[c];
  return g.constant(dist::one_hot(argmax_first(perturbed), C));
}

std::vector<double> values_of(const ad::Graph& g, Var v) {
  const auto s = g.value(v);
  return {s.begin(), s.end()};
}

}  // namespace

ElboNodes elbo_generic(nn::ParamBinding& bind, const TmcModel& model, const data::LabeledSequence& seq,
                       dist::Rng& rng, const ElboOptions& opt, Window window, CarriedState* carry) {
  if (model.kind() != ModelKind::Dmtmc) throw ContractError("elbo_generic: expects a d-mTMC model");
  check_sequence(model, seq);
  const Window w = resolve(window, seq);
  const auto& c = model.config;
  ad::Graph& g = bind.graph();

  Var h = g.zeros(c.rnn_state_dim);
  std::optional<models::DmtmcPrevious> prev;
  if (carry && carry->started) {
    h = g.constant(carry->h);
    prev = models::DmtmcPrevious{g.constant(carry->y_prev), g.constant(carry->z_prev)};
  }
  Accumulator acc;
  for (std::size_t t = w.begin; t < w.end; ++t) {
    const Var x = g.constant(seq.x(t));
    const auto qy = models::dmtmc_q_label(bind, model, x, h);
    const Var y = choose_label(g, seq, t, qy, rng, opt);
    Var z = g.zeros(0);
    std::optional<Var> log_qz;
    if (c.d_z > 0) {
      const auto qz = models::dmtmc_q_latent(bind, model, x, y, h);
      z = dist::gaussian_rsample(g, qz, dist::draw_standard_normal(rng, c.d_z));
      log_qz = dist::gaussian_logpdf(g, qz, z);
    }
    const auto terms = models::dmtmc_transition(bind, model, prev, x, y, z);
    acc.recon.push_back(*terms.log_px);
    if (terms.log_pz) acc.kl.push_back(log_qz ? g.sub(*terms.log_pz, *log_qz) : *terms.log_pz);
    if (seq.observed(t))
      acc.sup.push_back(*terms.log_py);
    else
      acc.ent.push_back(g.sub(*terms.log_py, dist::label_logpmf(g, qy, y)));
    h = models::dmtmc_recurrence(bind, model, x, y, z, h);
    prev = models::DmtmcPrevious{y, z};
  }
  if (carry) {
    carry->h = values_of(g, h);
    carry->y_prev = values_of(g, prev->y);
    carry->z_prev = values_of(g, prev->z);
    carry->started = true;
  }
  return finish(g, acc, 1.0, 0.0);
}

ElboNodes elbo_vsl(nn::ParamBinding& bind, const TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng) {
  if (model.kind() != ModelKind::Vsl) throw ContractError("elbo_vsl: expects a VSL model");
  check_sequence(model, seq);
  const auto& c = model.config;
  ad::Graph& g = bind.graph();
  const std::size_t n = seq.length();
  std::vector<Var> xs;
  xs.reserve(n);
  for (std::size_t t = 0; t < n; ++t) xs.push_back(g.constant(seq.x(t)));
  const auto qz = models::vsl_variational(bind, model, xs);

  Accumulator acc;
  std::optional<models::VslPrevious> prev;
  for (std::size_t t = 0; t < n; ++t) {
    const Var z = dist::gaussian_rsample(g, qz[t], dist::draw_standard_normal(rng, c.d_z));
    std::optional<Var> y;
    if (seq.observed(t)) y = g.constant(dist::one_hot(seq.observed_label(t), c.num_labels));
    const auto terms = models::vsl_transition(bind, model, prev, xs[t], y, z);
    acc.recon.push_back(*terms.log_px);
    acc.kl.push_back(g.sub(*terms.log_pz, dist::gaussian_logpdf(g, qz[t], z)));
    if (terms.log_py) acc.sup.push_back(*terms.log_py);
    prev = models::VslPrevious{z, xs[t]};
  }
  return finish(g, acc, c.beta, 0.0);
}

ElboNodes elbo_svrnn(nn::ParamBinding& bind, const TmcModel& model, const data::LabeledSequence& seq,
                     dist::Rng& rng, const ElboOptions& opt, Window window, CarriedState* carry) {
  if (model.kind() != ModelKind::Svrnn) throw ContractError("elbo_svrnn: expects an SVRNN model");
  check_sequence(model, seq);
  const Window w = resolve(window, seq);
  const auto& c = model.config;
  ad::Graph& g = bind.graph();

  Var h = (carry && carry->started) ? g.constant(carry->h) : g.zeros(c.rnn_state_dim);
  Accumulator acc;
  for (std::size_t t = w.begin; t < w.end; ++t) {
    const Var x = g.constant(seq.x(t));
    const auto qy = models::svrnn_q_label(bind, model, x, h);
    const Var y = choose_label(g, seq, t, qy, rng, opt);
    Var z = g.zeros(0);
    std::optional<Var> log_qz;
    if (c.d_z > 0) {
      const auto qz = models::svrnn_q_latent(bind, model, x, y, h);
      z = dist::gaussian_rsample(g, qz, dist::draw_standard_normal(rng, c.d_z));
      log_qz = dist::gaussian_logpdf(g, qz, z);
    }
    const auto step = models::svrnn_transition(bind, model, h, x, y, z);
    acc.recon.push_back(*step.terms.log_px);
    if (step.terms.log_pz) acc.kl.push_back(log_qz ? g.sub(*step.terms.log_pz, *log_qz) : *step.terms.log_pz);
    const Var log_qy = dist::label_logpmf(g, qy, y);
    if (seq.observed(t)) {
      acc.sup.push_back(*step.terms.log_py);
      acc.pen.push_back(g.add(*step.terms.log_py, log_qy));
    } else {
      acc.ent.push_back(g.sub(*step.terms.log_py, log_qy));
    }
    h = step.h;
  }
  if (carry) {
    carry->h = values_of(g, h);
    carry->started = true;
  }
  return finish(g, acc, 1.0, c.alpha);
}

ElboNodes build_elbo(nn::ParamBinding& bind, const TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
                     const ElboOptions& opt, Window window, CarriedState* carry) {
  switch (model.kind()) {
    case ModelKind::Dmtmc:
      return elbo_generic(bind, model, seq, rng, opt, window, carry);
    case ModelKind::Svrnn:
      return elbo_svrnn(bind, model, seq, rng, opt, window, carry);
    case ModelKind::Vsl:
      return elbo_vsl(bind, model, seq, rng);
  }
  throw ContractError("build_elbo: unknown model kind");
}

ElboEstimate read_estimate(const ad::Graph& g, const ElboNodes& nodes) {
  ElboEstimate e;
  e.total = g.scalar(nodes.total);
  e.terms.reconstruction = g.scalar(nodes.reconstruction);
  e.terms.kl_or_prior = g.scalar(nodes.kl_or_prior);
  e.terms.label_supervised = g.scalar(nodes.label_supervised);
  e.terms.label_entropy = g.scalar(nodes.label_entropy);
  e.terms.penalty = g.scalar(nodes.penalty);
  e.n_samples = 1;
  e.valid = std::isfinite(e.total);
  return e;
}

ElboEstimate estimate_elbo(const TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
                           std::size_t n_samples, const ElboOptions& opt) {
  if (n_samples == 0) throw ContractError("estimate_elbo: n_samples must be positive");
  ElboEstimate mean;
  mean.n_samples = n_samples;
  ad::Graph g;
  const double k = 1.0 / static_cast<double>(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    g.clear();
    nn::ParamBinding bind(g, model.params);
    const auto e = read_estimate(g, build_elbo(bind, model, seq, rng, opt));
    mean.valid = mean.valid && e.valid;
    mean.total += k * e.total;
    mean.terms.reconstruction += k * e.terms.reconstruction;
    mean.terms.kl_or_prior += k * e.terms.kl_or_prior;
    mean.terms.label_supervised += k * e.terms.label_supervised;
    mean.terms.label_entropy += k * e.terms.label_entropy;
    mean.terms.penalty += k * e.terms.penalty;
  }
  return mean;
}

ElboEstimate elbo_with_gradient(TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
                                const ElboOptions& opt) {
  ad::Graph g;
  nn::ParamBinding bind(g, model.params);
  const auto nodes = build_elbo(bind, model, seq, rng, opt);
  const auto e = read_estimate(g, nodes);
  if (e.valid) {
    g.backward(nodes.total);
    bind.accumulate_grads(model.params);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be positive");
  if (mc_samples == 0) throw ContractError("train config: mc_samples must be positive");
  if (!(clip_norm > 0.0)) throw ContractError("train config: clip_norm must be positive");
  if (eval_every > 0 && eval_samples == 0) throw ContractError("train config: eval_samples must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"mc_samples", c.mc_samples},
          {"seed", c.seed},
          {"clip_norm", c.clip_norm},
          {"truncation_window", c.truncation_window},
          {"max_consecutive_skips", c.max_consecutive_skips},
          {"eval_every", c.eval_every},
          {"eval_samples", c.eval_samples}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"epochs",         "learning_rate", "mc_samples",
                                              "seed",           "clip_norm",     "truncation_window",
                                              "max_consecutive_skips", "eval_every", "eval_samples"};
  if (!j.is_object()) throw ContractError("train config must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ContractError("train config: unknown key '" + key + "'");
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("epochs", c.epochs);
  get("learning_rate", c.learning_rate);
  get("mc_samples", c.mc_samples);
  get("seed", c.seed);
  get("clip_norm", c.clip_norm);
  get("truncation_window", c.truncation_window);
  get("max_consecutive_skips", c.max_consecutive_skips);
  get("eval_every", c.eval_every);
  get("eval_samples", c.eval_samples);
  c.validate();
  return c;
}

void write_trace_csv(std::ostream& os, const TrainTrace& trace) {
  os << "epoch,elbo,reconstruction,kl_or_prior,label_supervised,label_entropy,penalty,error_rate,seconds\n";
  os.precision(10);
  for (const auto& r : trace.rows) {
    const auto& t = r.elbo.terms;
    os << r.epoch << ',' << r.elbo.total << ',' << t.reconstruction << ',' << t.kl_or_prior << ','
       << t.label_supervised << ',' << t.label_entropy << ',' << t.penalty << ',';
    if (r.error_rate) os << *r.error_rate;
    os << ',' << r.seconds << '\n';
  }
}

void save_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  write_trace_csv(f, trace);
}

namespace {

void scale_grads(nn::ParamSet& params, double k) {
  for (auto& t : params.tensors())
    for (double& v : t.grad) v *= k;
}

std::vector<Window> windows_for(const TmcModel& model, std::size_t n, std::size_t window) {
  if (window == 0 || window >= n || model.kind() == ModelKind::Vsl) return {Window{0, n}};
  std::vector<Window> out;
  for (std::size_t b = 0; b < n; b += window) out.push_back({b, std::min(n, b + window)});
  return out;
}

double score(const data::LabeledSequence& seq, const PosteriorLabels& post) {
  std::size_t wrong = 0, total = 0;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (seq.observed(t)) continue;
    ++total;
    wrong += post.decoded[t] != seq.truth[t];
  }
  return total ? static_cast<double>(wrong) / static_cast<double>(total) : 0.0;
}

}  // namespace

TrainTrace train(TmcModel& model, const data::LabeledSequence& seq, const TrainConfig& cfg,
                 const EpochCallback& on_epoch) {
  cfg.validate();
  check_sequence(model, seq);
  nn::AdamState adam(model.params, nn::AdamConfig{cfg.learning_rate});
  dist::Rng rng(cfg.seed);
  TrainTrace trace;
  std::size_t consecutive_skips = 0;
  const auto windows = windows_for(model, seq.length(), cfg.truncation_window);
  const auto start = std::chrono::steady_clock::now();
  ad::Graph g;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ElboOptions opt;
    opt.temperature = model.config.temperature.at(epoch);
    TraceRow row;
    row.epoch = epoch;
    row.elbo.n_samples = cfg.mc_samples;
    CarriedState carry;
    for (const Window& w : windows) {
      model.params.zero_grad();
      bool finite = true;
      ElboTerms terms;
      double total = 0.0;
      CarriedState next = carry;
      for (std::size_t s = 0; s < cfg.mc_samples; ++s) {
        g.clear();
        nn::ParamBinding bind(g, model.params);
        next = carry;
        const auto nodes = build_elbo(bind, model, seq, rng, opt, w, &next);
        const auto e = read_estimate(g, nodes);
        if (!e.valid) {
          finite = false;
          break;
        }
        g.backward(nodes.total);
        bind.accumulate_grads(model.params);
        total += e.total;
        terms.reconstruction += e.terms.reconstruction;
        terms.kl_or_prior += e.terms.kl_or_prior;
        terms.label_supervised += e.terms.label_supervised;
        terms.label_entropy += e.terms.label_entropy;
        terms.penalty += e.terms.penalty;
      }
      if (finite) {
        const double k = 1.0 / static_cast<double>(cfg.mc_samples);
        scale_grads(model.params, -k);
        nn::clip_grad_norm(model.params, cfg.clip_norm);
        finite = nn::adam_step(adam, model.params);
        row.elbo.total += k * total;
        row.elbo.terms.reconstruction += k * terms.reconstruction;
        row.elbo.terms.kl_or_prior += k * terms.kl_or_prior;
        row.elbo.terms.label_supervised += k * terms.label_supervised;
        row.elbo.terms.label_entropy += k * terms.label_entropy;
        row.elbo.terms.penalty += k * terms.penalty;
        carry = std::move(next);
      }
      if (!finite) {
        row.elbo.valid = false;
        ++trace.skipped_steps;
        if (++consecutive_skips > cfg.max_consecutive_skips)
          throw TrainingAborted("training aborted after " + std::to_string(consecutive_skips) +
                                " consecutive non-finite steps (epoch " + std::to_string(epoch) + ")");
        carry = CarriedState{};
      } else {
        consecutive_skips = 0;
      }
    }
    if (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 && !seq.unobserved_indices().empty())
      row.error_rate = score(seq, posterior_labels(model, seq, cfg.eval_samples, cfg.seed ^ 0x5eedULL));
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(row);
    trace.rows.push_back(row);
  }
  model.params.zero_grad();
  return trace;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

/// One pass of the causal variational recursion with hard label draws;
/// adds q(y_t) into sums at unobserved steps.
void causal_pass(const TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
                 std::vector<std::vector<double>>& sums) {
  const auto& c = model.config;
  ad::Graph g;
  nn::ParamBinding bind(g, model.params);
  Var h = g.zeros(c.rnn_state_dim);
  const bool dm = model.kind() == ModelKind::Dmtmc;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const Var x = g.constant(seq.x(t));
    const auto qy = dm ? models::dmtmc_q_label(bind, model, x, h) : models::svrnn_q_label(bind, model, x, h);
    std::size_t label;
    if (seq.observed(t)) {
      label = seq.observed_label(t);
    } else {
      const auto p = g.value(qy.probs);
      for (std::size_t k = 0; k < c.num_labels; ++k) sums[t][k] += p[k];
      label = dist::draw_categorical(rng, p);
    }
    const Var y = g.constant(dist::one_hot(label, c.num_labels));
    Var z = g.zeros(0);
    if (c.d_z > 0) {
      const auto qz = dm ? models::dmtmc_q_latent(bind, model, x, y, h) : models::svrnn_q_latent(bind, model, x, y, h);
      z = g.constant(values_of(g, dist::gaussian_rsample(g, qz, dist::draw_standard_normal(rng, c.d_z))));
    }
    h = dm ? models::dmtmc_recurrence(bind, model, x, y, z, h) : models::svrnn_recurrence(bind, model, z, y, x, h);
  }
}

void vsl_pass(const TmcModel& model, const data::LabeledSequence& seq, dist::Rng& rng,
              std::vector<std::vector<double>>& sums) {
  const auto& c = model.config;
  ad::Graph g;
  nn::ParamBinding bind(g, model.params);
  std::vector<Var> xs;
  for (std::size_t t = 0; t < seq.length(); ++t) xs.push_back(g.constant(seq.x(t)));
  const auto qz = models::vsl_variational(bind, model, xs);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (seq.observed(t)) continue;
    const Var z = dist::gaussian_rsample(g, qz[t], dist::draw_standard_normal(rng, c.d_z));
    const auto p = g.value(models::vsl_label(bind, model, z).probs);
    for (std::size_t k = 0; k < c.num_labels; ++k) sums[t][k] += p[k];
  }
}

}  // namespace

PosteriorLabels posterior_labels(const TmcModel& model, const data::LabeledSequence& seq, std::size_t n_samples,
                                 std::uint64_t seed) {
  if (n_samples < 1) throw ContractError("posterior_labels: n_samples must be at least 1");
  check_sequence(model, seq);
  const std::size_t C = seq.num_labels;
  std::vector<std::vector<double>> sums(seq.length(), std::vector<double>(C, 0.0));
  dist::Rng rng(seed);
  for (std::size_t s = 0; s < n_samples; ++s) {
    if (model.kind() == ModelKind::Vsl)
      vsl_pass(model, seq, rng, sums);
    else
      causal_pass(model, seq, rng, sums);
  }
  PosteriorLabels out;
  out.probs.resize(seq.length());
  out.decoded.resize(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    if (seq.observed(t)) {
      out.decoded[t] = seq.observed_label(t);
      out.probs[t] = dist::one_hot(out.decoded[t], C);
      continue;
    }
    auto& p = sums[t];
    for (double& v : p) v /= static_cast<double>(n_samples);
    out.decoded[t] = static_cast<data::Label>(argmax_first(p));
    out.probs[t] = std::move(p);
  }
  return out;
}

}  // namespace tmcseg::inference
