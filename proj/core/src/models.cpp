#include "tmcseg/models.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "tmcseg/errors.hpp"

namespace tmcseg::models {

using ad::Var;
using nn::HeadKind;
using nn::ParamGroup;

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Dmtmc:
      return "dmtmc";
    case ModelKind::Vsl:
      return "vsl";
    case ModelKind::Svrnn:
      return "svrnn";
  }
  return "?";
}

std::string display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Dmtmc:
      return "d-mTMC";
    case ModelKind::Vsl:
      return "VSL";
    case ModelKind::Svrnn:
      return "SVRNN";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "dmtmc" || s == "d-mTMC" || s == "d-mtmc") return ModelKind::Dmtmc;
  if (s == "vsl" || s == "VSL") return ModelKind::Vsl;
  if (s == "svrnn" || s == "SVRNN") return ModelKind::Svrnn;
  throw ContractError("unknown model kind '" + std::string(s) + "'");
}

double TemperatureSchedule::at(std::size_t epoch) const {
  if (anneal_epochs == 0 || epoch >= anneal_epochs) return end;
  const double f = static_cast<double>(epoch) / static_cast<double>(anneal_epochs);
  return start + (end - start) * f;
}

TmcConfig TmcConfig::preset(ModelKind kind) {
  TmcConfig c;
  c.kind = kind;
  switch (kind) {
    case ModelKind::Dmtmc:
      c.hidden_units = 25;
      c.rnn_state_dim = 44;
      break;
    case ModelKind::Svrnn:
      c.hidden_units = 22;
      c.rnn_state_dim = 35;
      break;
    case ModelKind::Vsl:
      c.hidden_units = 41;
      c.rnn_state_dim = 0;
      c.encoder_state_dim = 8;
      c.encoder_code_dim = 8;
      break;
  }
  return c;
}

void TmcConfig::validate() const {
  if (d_x == 0) throw ContractError("model config: d_x must be positive");
  if (num_labels < 2) throw ContractError("model config: need at least two labels");
  if (hidden_units == 0) throw ContractError("model config: hidden_units must be positive");
  if (beta < 0.0 || alpha < 0.0) throw ContractError("model config: beta and alpha must be non-negative");
  if (!(temperature.start > 0.0) || !(temperature.end > 0.0))
    throw ContractError("model config: temperatures must be positive");
  switch (kind) {
    case ModelKind::Dmtmc:
    case ModelKind::Svrnn:
      if (rnn_state_dim == 0) throw ContractError("model config: rnn_state_dim must be positive");
      break;
    case ModelKind::Vsl:
      if (d_z == 0) throw ContractError("model config: vsl needs d_z > 0");
      if (encoder_state_dim == 0 || encoder_code_dim == 0)
        throw ContractError("model config: vsl encoder dimensions must be positive");
      break;
  }
}

nlohmann::json config_to_json(const TmcConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"d_x", c.d_x},
          {"d_z", c.d_z},
          {"num_labels", c.num_labels},
          {"hidden_units", c.hidden_units},
          {"rnn_state_dim", c.rnn_state_dim},
          {"encoder_state_dim", c.encoder_state_dim},
          {"encoder_code_dim", c.encoder_code_dim},
          {"beta", c.beta},
          {"alpha", c.alpha},
          {"temperature",
           {{"start", c.temperature.start}, {"end", c.temperature.end}, {"anneal_epochs", c.temperature.anneal_epochs}}}};
}

TmcConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"kind",          "d_x",           "d_z",
                                              "num_labels",    "hidden_units",  "rnn_state_dim",
                                              "encoder_state_dim", "encoder_code_dim", "beta",
                                              "alpha",         "temperature"};
  if (!j.is_object()) throw ContractError("model config must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ContractError("model config: unknown key '" + key + "'");
  TmcConfig c = TmcConfig::preset(model_kind_from_string(j.at("kind").get<std::string>()));
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("d_x", c.d_x);
  get("d_z", c.d_z);
  get("num_labels", c.num_labels);
  get("hidden_units", c.hidden_units);
  get("rnn_state_dim", c.rnn_state_dim);
  get("encoder_state_dim", c.encoder_state_dim);
  get("encoder_code_dim", c.encoder_code_dim);
  get("beta", c.beta);
  get("alpha", c.alpha);
  if (j.contains("temperature")) {
    const auto& t = j.at("temperature");
    for (const auto& [key, _] : t.items())
      if (key != "start" && key != "end" && key != "anneal_epochs")
        throw ContractError("model config: unknown temperature key '" + key + "'");
    if (t.contains("start")) c.temperature.start = t.at("start").get<double>();
    if (t.contains("end")) c.temperature.end = t.at("end").get<double>();
    if (t.contains("anneal_epochs")) c.temperature.anneal_epochs = t.at("anneal_epochs").get<std::size_t>();
  }
  c.validate();
  return c;
}

namespace {

std::size_t label_outputs(const TmcConfig& c) { return c.num_labels == 2 ? 1 : c.num_labels; }
HeadKind label_head_kind(const TmcConfig& c) { return c.num_labels == 2 ? HeadKind::Sigmoid : HeadKind::Linear; }

void expect_dim(const ad::Graph& g, Var v, std::size_t n, const char* what) {
  if (g.dim(v) != n)
    throw ContractError(std::string(what) + ": expected " + std::to_string(n) + " components, got " +
                        std::to_string(g.dim(v)));
}

dist::DiagGaussian gaussian_net(nn::ParamBinding& bind, const nn::Mlp2& net, Var input) {
  return dist::gaussian_from_head(bind.graph(), nn::mlp_preactivation(bind, net, input));
}

dist::DiagGaussian standard_normal(ad::Graph& g, std::size_t d) {
  const std::vector<double> ones(d, 1.0);
  return {g.zeros(d), g.constant(ones)};
}

template <class Nets>
const Nets& nets_of(const TmcModel& model, const char* who) {
  const auto* n = std::get_if<Nets>(&model.nets);
  if (!n) throw ContractError(std::string(who) + ": model is a " + to_string(model.kind()));
  return *n;
}

}  // namespace

const DmtmcNets& dmtmc_nets(const TmcModel& model) { return nets_of<DmtmcNets>(model, "dmtmc"); }
const VslNets& vsl_nets(const TmcModel& model) { return nets_of<VslNets>(model, "vsl"); }
const SvrnnNets& svrnn_nets(const TmcModel& model) { return nets_of<SvrnnNets>(model, "svrnn"); }

TmcModel make_model(const TmcConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TmcModel m;
  m.config = cfg;
  auto& P = m.params;
  const std::size_t C = cfg.num_labels, H = cfg.hidden_units, dx = cfg.d_x, dz = cfg.d_z, r = cfg.rnn_state_dim;
  const std::size_t ly = label_outputs(cfg);
  const HeadKind lh = label_head_kind(cfg);
  const auto G = ParamGroup::Generative;
  const auto V = ParamGroup::Variational;
  switch (cfg.kind) {
    case ModelKind::Dmtmc: {
      DmtmcNets n;
      n.p_y = nn::make_mlp2(P, "dmtmc.p_y", C, H, ly, lh, G);
      if (dz > 0) n.p_z = nn::make_mlp2(P, "dmtmc.p_z", dz, H, 2 * dz, HeadKind::Linear, G);
      n.p_x = nn::make_mlp2(P, "dmtmc.p_x", C + dz, H, 2 * dx, HeadKind::Linear, G);
      n.y0_logits = P.add("dmtmc.p_y0", ly, 1, G, nn::ParamRole::Free);
      if (dz > 0) n.q_z = nn::make_mlp2(P, "dmtmc.q_z", dx + C + r, H, 2 * dz, HeadKind::Linear, V);
      n.q_y = nn::make_mlp2(P, "dmtmc.q_y", dx + r, H, ly, lh, V);
      n.recurrence = nn::make_rnn_cell(P, "dmtmc.h", dx + C + dz, r, V);
      m.nets = n;
      break;
    }
    case ModelKind::Vsl: {
      VslNets n;
      n.p_y = nn::make_mlp2(P, "vsl.p_y", dz, H, ly, lh, G);
      n.p_z = nn::make_mlp2(P, "vsl.p_z", dx + dz, H, 2 * dz, HeadKind::Linear, G);
      n.p_x = nn::make_mlp2(P, "vsl.p_x", dz, H, 2 * dx, HeadKind::Linear, G);
      n.encoder = nn::make_birnn(P, "vsl.enc", dx, cfg.encoder_state_dim, cfg.encoder_code_dim, V);
      n.q_z = nn::make_mlp2(P, "vsl.q_z", cfg.encoder_code_dim, H, 2 * dz, HeadKind::Linear, V);
      m.nets = n;
      break;
    }
    case ModelKind::Svrnn: {
      SvrnnNets n;
      n.p_y = nn::make_mlp2(P, "svrnn.p_y", r, H, ly, lh, G);
      if (dz > 0) n.p_z = nn::make_mlp2(P, "svrnn.p_z", C + r, H, 2 * dz, HeadKind::Linear, G);
      n.p_x = nn::make_mlp2(P, "svrnn.p_x", C + dz + r, H, 2 * dx, HeadKind::Linear, G);
      n.recurrence = nn::make_rnn_cell(P, "svrnn.f", dz + C + dx, r, G);
      if (dz > 0) n.q_z = nn::make_mlp2(P, "svrnn.q_z", dx + C + r, H, 2 * dz, HeadKind::Linear, V);
      n.q_y = nn::make_mlp2(P, "svrnn.q_y", dx + r, H, ly, lh, V);
      m.nets = n;
      break;
    }
  }
  nn::init_params(P, seed);
  return m;
}

dist::LabelDistribution label_head(nn::ParamBinding& bind, const nn::Mlp2& net, Var input) {
  const Var a = nn::mlp_preactivation(bind, net, input);
  if (net.output_dim == 1) return dist::label_from_bernoulli_logit(bind.graph(), a);
  return dist::label_from_logits(bind.graph(), a);
}

// --- d-mTMC -----------------------------------------------------------------

TransitionTerms dmtmc_transition(nn::ParamBinding& bind, const TmcModel& model, const std::optional<DmtmcPrevious>& prev,
                                 Var x, Var y, Var z) {
  const auto& n = dmtmc_nets(model);
  const auto& c = model.config;
  ad::Graph& g = bind.graph();
  expect_dim(g, x, c.d_x, "dmtmc_transition x");
  expect_dim(g, y, c.num_labels, "dmtmc_transition y");
  expect_dim(g, z, c.d_z, "dmtmc_transition z");
  TransitionTerms terms;

  dist::LabelDistribution py;
  if (prev) {
    expect_dim(g, prev->y, c.num_labels, "dmtmc_transition y_prev");
    py = label_head(bind, n.p_y, prev->y);
  } else {
    const Var a = bind(n.y0_logits);
    py = c.num_labels == 2 ? dist::label_from_bernoulli_logit(g, a) : dist::label_from_logits(g, a);
  }
  terms.log_py = dist::label_logpmf(g, py, y);

  if (c.d_z > 0) {
    dist::DiagGaussian pz;
    if (prev) {
      expect_dim(g, prev->z, c.d_z, "dmtmc_transition z_prev");
      pz = gaussian_net(bind, n.p_z, prev->z);
    } else {
      pz = standard_normal(g, c.d_z);
    }
    terms.log_pz = dist::gaussian_logpdf(g, pz, z);
  }

  const auto px = gaussian_net(bind, n.p_x, g.concat({y, z}));
  terms.log_px = dist::gaussian_logpdf(g, px, x);
  return terms;
}

dist::LabelDistribution dmtmc_q_label(nn::ParamBinding& bind, const TmcModel& model, Var x, Var h_prev) {
  const auto& n = dmtmc_nets(model);
  ad::Graph& g = bind.graph();
  expect_dim(g, x, model.config.d_x, "dmtmc_q_label x");
  expect_dim(g, h_prev, model.config.rnn_state_dim, "dmtmc_q_label h_prev");
  return label_head(bind, n.q_y, g.concat({x, h_prev}));
}

dist::DiagGaussian dmtmc_q_latent(nn::ParamBinding& bind, const TmcModel& model, Var x, Var y, Var h_prev) {
  const auto& n = dmtmc_nets(model);
  ad::Graph& g = bind.graph();
  if (model.config.d_z == 0) throw ContractError("dmtmc_q_latent: model has no latent variable");
  expect_dim(g, x, model.config.d_x, "dmtmc_q_latent x");
  expect_dim(g, y, model.config.num_labels, "dmtmc_q_latent y");
  expect_dim(g, h_prev, model.config.rnn_state_dim, "dmtmc_q_latent h_prev");
  return gaussian_net(bind, n.q_z, g.concat({x, y, h_prev}));
}

Var dmtmc_recurrence(nn::ParamBinding& bind, const TmcModel& model, Var x, Var y, Var z, Var h_prev) {
  const auto& n = dmtmc_nets(model);
  return nn::rnn_step(bind, n.recurrence, bind.graph().concat({x, y, z}), h_prev);
}

// --- VSL --------------------------------------------------------------------

dist::LabelDistribution vsl_label(nn::ParamBinding& bind, const TmcModel& model, Var z) {
  expect_dim(bind.graph(), z, model.config.d_z, "vsl_label z");
  return label_head(bind, vsl_nets(model).p_y, z);
}

TransitionTerms vsl_transition(nn::ParamBinding& bind, const TmcModel& model, const std::optional<VslPrevious>& prev,
                               Var x, std::optional<Var> y, Var z) {
  const auto& n = vsl_nets(model);
  const auto& c = model.config;
  ad::Graph& g = bind.graph();
  expect_dim(g, x, c.d_x, "vsl_transition x");
  expect_dim(g, z, c.d_z, "vsl_transition z");
  TransitionTerms terms;
  dist::DiagGaussian pz;
  if (prev) {
    expect_dim(g, prev->x, c.d_x, "vsl_transition x_prev");
    expect_dim(g, prev->z, c.d_z, "vsl_transition z_prev");
    pz = gaussian_net(bind, n.p_z, g.concat({prev->x, prev->z}));
  } else {
    pz = standard_normal(g, c.d_z);
  }
  terms.log_pz = dist::gaussian_logpdf(g, pz, z);
  terms.log_px = dist::gaussian_logpdf(g, gaussian_net(bind, n.p_x, z), x);
  if (y) {
    expect_dim(g, *y, c.num_labels, "vsl_transition y");
    terms.log_py = dist::label_logpmf(g, vsl_label(bind, model, z), *y);
  }
  return terms;
}

std::vector<dist::DiagGaussian> vsl_variational(nn::ParamBinding& bind, const TmcModel& model,
                                                std::span<const Var> xs) {
  const auto& n = vsl_nets(model);
  if (xs.empty()) throw ContractError("vsl_variational: empty sequence");
  for (Var x : xs) expect_dim(bind.graph(), x, model.config.d_x, "vsl_variational x");
  const auto codes = nn::birnn_encode(bind, n.encoder, xs);
  std::vector<dist::DiagGaussian> out;
  out.reserve(codes.size());
  for (Var code : codes) out.push_back(gaussian_net(bind, n.q_z, code));
  return out;
}

// --- SVRNN ------------------------------------------------------------------

Var svrnn_recurrence(nn::ParamBinding& bind, const TmcModel& model, Var z, Var y, Var x, Var h_prev) {
  return nn::rnn_step(bind, svrnn_nets(model).recurrence, bind.graph().concat({z, y, x}), h_prev);
}

SvrnnTransition svrnn_transition(nn::ParamBinding& bind, const TmcModel& model, Var h_prev, Var x, Var y, Var z) {
  const auto& n = svrnn_nets(model);
  const auto& c = model.config;
  ad::Graph& g = bind.graph();
  expect_dim(g, h_prev, c.rnn_state_dim, "svrnn_transition h_prev");
  expect_dim(g, x, c.d_x, "svrnn_transition x");
  expect_dim(g, y, c.num_labels, "svrnn_transition y");
  expect_dim(g, z, c.d_z, "svrnn_transition z");
  SvrnnTransition out;
  out.terms.log_py = dist::label_logpmf(g, label_head(bind, n.p_y, h_prev), y);
  if (c.d_z > 0) out.terms.log_pz = dist::gaussian_logpdf(g, gaussian_net(bind, n.p_z, g.concat({y, h_prev})), z);
  out.terms.log_px = dist::gaussian_logpdf(g, gaussian_net(bind, n.p_x, g.concat({y, z, h_prev})), x);
  out.h = svrnn_recurrence(bind, model, z, y, x, h_prev);
  return out;
}

dist::LabelDistribution svrnn_q_label(nn::ParamBinding& bind, const TmcModel& model, Var x, Var h_prev) {
  ad::Graph& g = bind.graph();
  expect_dim(g, x, model.config.d_x, "svrnn_q_label x");
  expect_dim(g, h_prev, model.config.rnn_state_dim, "svrnn_q_label h_prev");
  return label_head(bind, svrnn_nets(model).q_y, g.concat({x, h_prev}));
}

dist::DiagGaussian svrnn_q_latent(nn::ParamBinding& bind, const TmcModel& model, Var x, Var y, Var h_prev) {
  ad::Graph& g = bind.graph();
  if (model.config.d_z == 0) throw ContractError("svrnn_q_latent: model has no latent variable");
  expect_dim(g, x, model.config.d_x, "svrnn_q_latent x");
  expect_dim(g, y, model.config.num_labels, "svrnn_q_latent y");
  expect_dim(g, h_prev, model.config.rnn_state_dim, "svrnn_q_latent h_prev");
  return gaussian_net(bind, svrnn_nets(model).q_z, g.concat({x, y, h_prev}));
}

// --- Sampling ---------------------------------------------------------------

namespace {

std::vector<double> sample_gaussian(const ad::Graph& g, const dist::DiagGaussian& d, dist::Rng& rng) {
  const auto mean = g.value(d.mean);
  const auto sd = g.value(d.std);
  auto noise = dist::draw_standard_normal(rng, mean.size());
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = mean[i] + sd[i] * noise[i];
  return noise;
}

data::Label sample_label(const ad::Graph& g, const dist::LabelDistribution& d, dist::Rng& rng) {
  return static_cast<data::Label>(dist::draw_categorical(rng, g.value(d.probs)));
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

Trajectory generate(const TmcModel& model, std::size_t T, std::uint64_t seed) {
  const auto& c = model.config;
  dist::Rng rng(seed);
  Trajectory tr;
  ad::Graph g;
  std::vector<double> h(c.rnn_state_dim, 0.0);
  for (std::size_t t = 0; t <= T; ++t) {
    g.clear();
    nn::ParamBinding bind(g, model.params);
    data::Label y = 0;
    std::vector<double> z, x;
    switch (c.kind) {
      case ModelKind::Dmtmc: {
        const auto& n = dmtmc_nets(model);
        dist::LabelDistribution py;
        if (t == 0) {
          const Var a = bind(n.y0_logits);
          py = c.num_labels == 2 ? dist::label_from_bernoulli_logit(g, a) : dist::label_from_logits(g, a);
        } else {
          py = label_head(bind, n.p_y, g.constant(dist::one_hot(tr.ys.back(), c.num_labels)));
        }
        y = sample_label(g, py, rng);
        if (c.d_z > 0) {
          const auto pz = t == 0 ? standard_normal(g, c.d_z) : gaussian_net(bind, n.p_z, g.constant(tr.zs.back()));
          z = sample_gaussian(g, pz, rng);
        }
        const Var yv = g.constant(dist::one_hot(y, c.num_labels));
        x = sample_gaussian(g, gaussian_net(bind, n.p_x, g.concat({yv, g.constant(z)})), rng);
        break;
      }
      case ModelKind::Vsl: {
        const auto& n = vsl_nets(model);
        const auto pz =
            t == 0 ? standard_normal(g, c.d_z)
                   : gaussian_net(bind, n.p_z, g.concat({g.constant(tr.xs.back()), g.constant(tr.zs.back())}));
        z = sample_gaussian(g, pz, rng);
        const Var zv = g.constant(z);
        y = sample_label(g, label_head(bind, n.p_y, zv), rng);
        x = sample_gaussian(g, gaussian_net(bind, n.p_x, zv), rng);
        break;
      }
      case ModelKind::Svrnn: {
        const auto& n = svrnn_nets(model);
        const Var hv = g.constant(h);
        y = sample_label(g, label_head(bind, n.p_y, hv), rng);
        const Var yv = g.constant(dist::one_hot(y, c.num_labels));
        if (c.d_z > 0) z = sample_gaussian(g, gaussian_net(bind, n.p_z, g.concat({yv, hv})), rng);
        const Var zv = g.constant(z);
        x = sample_gaussian(g, gaussian_net(bind, n.p_x, g.concat({yv, zv, hv})), rng);
        h = to_vec(g.value(svrnn_recurrence(bind, model, zv, yv, g.constant(x), hv)));
        break;
      }
    }
    tr.ys.push_back(y);
    tr.zs.push_back(std::move(z));
    tr.xs.push_back(std::move(x));
  }
  return tr;
}

double log_joint(const TmcModel& model, const Trajectory& traj) {
  const auto& c = model.config;
  if (traj.zs.size() != traj.length() || traj.xs.size() != traj.length())
    throw ContractError("log_joint: trajectory components have different lengths");
  ad::Graph g;
  nn::ParamBinding bind(g, model.params);
  double total = 0.0;
  auto add = [&](const TransitionTerms& terms) {
    for (const auto& term : {terms.log_py, terms.log_pz, terms.log_px})
      if (term) total += g.scalar(*term);
  };
  Var h = g.zeros(c.rnn_state_dim);
  std::optional<DmtmcPrevious> dprev;
  std::optional<VslPrevious> vprev;
  for (std::size_t t = 0; t < traj.length(); ++t) {
    const Var x = g.constant(traj.xs[t]);
    const Var y = g.constant(dist::one_hot(traj.ys[t], c.num_labels));
    const Var z = g.constant(traj.zs[t]);
    switch (c.kind) {
      case ModelKind::Dmtmc:
        add(dmtmc_transition(bind, model, dprev, x, y, z));
        dprev = DmtmcPrevious{y, z};
        break;
      case ModelKind::Vsl:
        add(vsl_transition(bind, model, vprev, x, y, z));
        vprev = VslPrevious{z, x};
        break;
      case ModelKind::Svrnn: {
        const auto step = svrnn_transition(bind, model, h, x, y, z);
        add(step.terms);
        h = step.h;
        break;
      }
    }
  }
  return total;
}

}  // namespace tmcseg::models
