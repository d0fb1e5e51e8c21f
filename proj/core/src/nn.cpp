#include "tmcseg/nn.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "tmcseg/errors.hpp"

namespace tmcseg::nn {

ParamId ParamSet::add(std::string name, std::size_t rows, std::size_t cols, ParamGroup group, ParamRole role) {
  if (find(name)) throw ContractError("ParamSet: duplicate tensor name " + name);
  ParamTensor t;
  t.name = std::move(name);
  t.rows = rows;
  t.cols = cols;
  t.group = group;
  t.role = role;
  t.value.assign(rows * cols, 0.0);
  t.grad.assign(rows * cols, 0.0);
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

std::optional<ParamId> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void ParamSet::set_trainable(ParamGroup group, bool trainable) {
  for (auto& t : tensors_)
    if (t.group == group) t.trainable = trainable;
}

std::vector<double> ParamSet::flat_values() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& t : tensors_) out.insert(out.end(), t.value.begin(), t.value.end());
  return out;
}

void ParamSet::assign_flat(std::span<const double> values) {
  if (values.size() != scalar_count()) throw ContractError("ParamSet::assign_flat: size mismatch");
  std::size_t pos = 0;
  for (auto& t : tensors_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.value.begin());
    pos += t.size();
  }
}

void init_params(ParamSet& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& t : params.tensors()) {
    if (t.role != ParamRole::Weight) {
      std::fill(t.value.begin(), t.value.end(), 0.0);
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : t.value) v = u(rng);
  }
}

ParamBinding::ParamBinding(ad::Graph& graph, const ParamSet& params)
    : graph_(&graph), params_(&params), bound_(params.tensor_count()) {}

ad::Var ParamBinding::operator()(ParamId id) {
  if (id >= bound_.size()) throw ContractError("ParamBinding: unknown parameter id");
  if (!bound_[id].valid()) bound_[id] = graph_->variable((*params_)[id].value);
  return bound_[id];
}

void ParamBinding::accumulate_grads(ParamSet& params) const {
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (!bound_[i].valid()) continue;
    const auto g = graph_->grad(bound_[i]);
    auto& dst = params[i].grad;
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
  }
}

const char* to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::Linear:
      return "linear";
    case HeadKind::Softplus:
      return "softplus";
    case HeadKind::Sigmoid:
      return "sigmoid";
  }
  return "?";
}

Mlp2 make_mlp2(ParamSet& params, const std::string& name, std::size_t input_dim, std::size_t hidden_dim,
               std::size_t output_dim, HeadKind head, ParamGroup group) {
  if (input_dim == 0 || hidden_dim == 0 || output_dim == 0)
    throw ContractError("make_mlp2(" + name + "): dimensions must be positive");
  Mlp2 net;
  net.input_dim = input_dim;
  net.hidden_dim = hidden_dim;
  net.output_dim = output_dim;
  net.head = head;
  net.w1 = params.add(name + ".w1", hidden_dim, input_dim, group, ParamRole::Weight);
  net.b1 = params.add(name + ".b1", hidden_dim, 1, group, ParamRole::Bias);
  net.w2 = params.add(name + ".w2", hidden_dim, hidden_dim, group, ParamRole::Weight);
  net.b2 = params.add(name + ".b2", hidden_dim, 1, group, ParamRole::Bias);
  net.w3 = params.add(name + ".w3", output_dim, hidden_dim, group, ParamRole::Weight);
  net.b3 = params.add(name + ".b3", output_dim, 1, group, ParamRole::Bias);
  return net;
}

ad::Var mlp_preactivation(ParamBinding& bind, const Mlp2& net, ad::Var input) {
  ad::Graph& g = bind.graph();
  if (g.dim(input) != net.input_dim)
    throw ContractError("mlp_forward: input has " + std::to_string(g.dim(input)) + " components, expected " +
                        std::to_string(net.input_dim));
  ad::Var h = g.relu(g.affine(bind(net.w1), input, bind(net.b1)));
  h = g.relu(g.affine(bind(net.w2), h, bind(net.b2)));
  return g.affine(bind(net.w3), h, bind(net.b3));
}

ad::Var mlp_forward(ParamBinding& bind, const Mlp2& net, ad::Var input) {
  ad::Graph& g = bind.graph();
  const ad::Var a = mlp_preactivation(bind, net, input);
  switch (net.head) {
    case HeadKind::Linear:
      return a;
    case HeadKind::Softplus:
      return g.softplus(a);
    case HeadKind::Sigmoid:
      return g.sigmoid(a);
  }
  return a;
}

RnnCell make_rnn_cell(ParamSet& params, const std::string& name, std::size_t input_dim, std::size_t state_dim,
                      ParamGroup group) {
  if (state_dim == 0) throw ContractError("make_rnn_cell(" + name + "): state_dim must be positive");
  RnnCell cell;
  cell.input_dim = input_dim;
  cell.state_dim = state_dim;
  cell.w = params.add(name + ".w", state_dim, input_dim + state_dim, group, ParamRole::Weight);
  cell.b = params.add(name + ".b", state_dim, 1, group, ParamRole::Bias);
  return cell;
}

ad::Var rnn_step(ParamBinding& bind, const RnnCell& cell, ad::Var input, ad::Var state) {
  ad::Graph& g = bind.graph();
  if (g.dim(input) != cell.input_dim || g.dim(state) != cell.state_dim)
    throw ContractError("rnn_step: got input/state dims " + std::to_string(g.dim(input)) + "/" +
                        std::to_string(g.dim(state)) + ", expected " + std::to_string(cell.input_dim) + "/" +
                        std::to_string(cell.state_dim));
  return g.tanh(g.affine(bind(cell.w), g.concat({input, state}), bind(cell.b)));
}

BiRnnEncoder make_birnn(ParamSet& params, const std::string& name, std::size_t input_dim, std::size_t state_dim,
                        std::size_t code_dim, ParamGroup group) {
  BiRnnEncoder enc;
  enc.forward = make_rnn_cell(params, name + ".fwd", input_dim, state_dim, group);
  enc.backward = make_rnn_cell(params, name + ".bwd", input_dim, state_dim, group);
  enc.code_dim = code_dim;
  enc.proj_w = params.add(name + ".proj.w", code_dim, 2 * state_dim, group, ParamRole::Weight);
  enc.proj_b = params.add(name + ".proj.b", code_dim, 1, group, ParamRole::Bias);
  return enc;
}

std::vector<ad::Var> birnn_encode(ParamBinding& bind, const BiRnnEncoder& enc, std::span<const ad::Var> xs) {
  if (xs.empty()) throw ContractError("birnn_encode: empty sequence");
  ad::Graph& g = bind.graph();
  const std::size_t n = xs.size();
  std::vector<ad::Var> fwd(n), bwd(n);
  ad::Var h = g.zeros(enc.forward.state_dim);
  for (std::size_t t = 0; t < n; ++t) fwd[t] = h = rnn_step(bind, enc.forward, xs[t], h);
  h = g.zeros(enc.backward.state_dim);
  for (std::size_t t = n; t-- > 0;) bwd[t] = h = rnn_step(bind, enc.backward, xs[t], h);
  std::vector<ad::Var> codes(n);
  const ad::Var w = bind(enc.proj_w);
  const ad::Var b = bind(enc.proj_b);
  for (std::size_t t = 0; t < n; ++t) codes[t] = g.affine(w, g.concat({fwd[t], bwd[t]}), b);
  return codes;
}

AdamState::AdamState(const ParamSet& params, AdamConfig cfg) : config(cfg) {
  for (const auto& t : params.tensors()) {
    first_moment.emplace_back(t.size(), 0.0);
    second_moment.emplace_back(t.size(), 0.0);
  }
}

bool adam_step(AdamState& state, ParamSet& params) {
  if (state.first_moment.size() != params.tensor_count())
    throw ContractError("adam_step: optimizer state does not match parameter layout");
  for (const auto& t : params.tensors()) {
    if (!t.trainable) continue;
    for (double g : t.grad)
      if (!std::isfinite(g)) {
        ++state.rejected_steps;
        return false;
      }
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto tensors = params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = tensors[i];
    if (!t.trainable) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != t.size()) throw ContractError("adam_step: moment shape mismatch for " + t.name);
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double g = t.grad[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      t.value[k] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
  return true;
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& t : params.tensors())
    if (t.trainable)
      for (double g : t.grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm && max_norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& t : params.tensors())
      if (t.trainable)
        for (double& g : t.grad) g *= s;
  }
  return norm;
}

nlohmann::json params_to_json(const ParamSet& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : params.tensors()) {
    arr.push_back({{"name", t.name},
                   {"rows", t.rows},
                   {"cols", t.cols},
                   {"group", t.group == ParamGroup::Generative ? "generative" : "variational"},
                   {"values", t.value}});
  }
  return arr;
}

void params_from_json(const nlohmann::json& j, ParamSet& params) {
  if (!j.is_array() || j.size() != params.tensor_count())
    throw ContractError("checkpoint: parameter tensor count does not match the model layout");
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto& t = params[i];
    const auto& e = j[i];
    if (e.at("name").get<std::string>() != t.name || e.at("rows").get<std::size_t>() != t.rows ||
        e.at("cols").get<std::size_t>() != t.cols)
      throw ContractError("checkpoint: tensor " + std::to_string(i) + " (" + e.at("name").get<std::string>() +
                          ") does not match model tensor " + t.name);
    auto values = e.at("values").get<std::vector<double>>();
    if (values.size() != t.size()) throw ContractError("checkpoint: wrong value count for " + t.name);
    t.value = std::move(values);
  }
}

}  // namespace tmcseg::nn
