#pragma once

// Parameter storage, the small network blocks used to produce distribution
// parameters (two-hidden-layer ReLU perceptrons, vanilla tanh recurrent cells,
// a bidirectional encoder) and the Adam optimizer.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tmcseg/autodiff.hpp"

namespace tmcseg::nn {

/// theta (generative) or phi (variational) side of a model.
enum class ParamGroup : std::uint8_t { Generative, Variational };

enum class ParamRole : std::uint8_t { Weight, Bias, Free };

struct ParamTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  ParamGroup group = ParamGroup::Generative;
  ParamRole role = ParamRole::Weight;
  bool trainable = true;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const noexcept { return value.size(); }
};

using ParamId = std::size_t;

class ParamSet {
 public:
  ParamId add(std::string name, std::size_t rows, std::size_t cols, ParamGroup group, ParamRole role);

  ParamTensor& operator[](ParamId id) { return tensors_.at(id); }
  const ParamTensor& operator[](ParamId id) const { return tensors_.at(id); }
  std::size_t tensor_count() const noexcept { return tensors_.size(); }
  std::span<ParamTensor> tensors() noexcept { return tensors_; }
  std::span<const ParamTensor> tensors() const noexcept { return tensors_; }
  std::optional<ParamId> find(const std::string& name) const;

  /// Total number of scalar parameters.
  std::size_t scalar_count() const noexcept;
  void zero_grad();
  void set_trainable(ParamGroup group, bool trainable);

  std::vector<double> flat_values() const;
  void assign_flat(std::span<const double> values);

 private:
  std::vector<ParamTensor> tensors_;
};

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases and free parameters.
/// Reproducible for a given seed and tensor layout.
void init_params(ParamSet& params, std::uint64_t seed);

/// Binds parameter tensors as leaves of one graph. Each tensor is copied into
/// the graph at most once per pass.
class ParamBinding {
 public:
  ParamBinding(ad::Graph& graph, const ParamSet& params);

  ad::Var operator()(ParamId id);
  ad::Graph& graph() noexcept { return *graph_; }
  const ParamSet& params() const noexcept { return *params_; }

  /// Adds the graph adjoints of every bound tensor into params.grad.
  void accumulate_grads(ParamSet& params) const;

 private:
  ad::Graph* graph_;
  const ParamSet* params_;
  std::vector<ad::Var> bound_;
};

enum class HeadKind : std::uint8_t { Linear, Softplus, Sigmoid };

const char* to_string(HeadKind kind);

/// Two ReLU hidden layers and an output head.
struct Mlp2 {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  HeadKind head = HeadKind::Linear;
  ParamId w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0;
};

Mlp2 make_mlp2(ParamSet& params, const std::string& name, std::size_t input_dim, std::size_t hidden_dim,
               std::size_t output_dim, HeadKind head, ParamGroup group);

/// Output layer before the head activation.
ad::Var mlp_preactivation(ParamBinding& bind, const Mlp2& net, ad::Var input);
ad::Var mlp_forward(ParamBinding& bind, const Mlp2& net, ad::Var input);

/// h' = tanh(W [input; h] + b)
struct RnnCell {
  std::size_t input_dim = 0;
  std::size_t state_dim = 0;
  ParamId w = 0, b = 0;
};

RnnCell make_rnn_cell(ParamSet& params, const std::string& name, std::size_t input_dim, std::size_t state_dim,
                      ParamGroup group);
ad::Var rnn_step(ParamBinding& bind, const RnnCell& cell, ad::Var input, ad::Var state);

/// Forward and backward tanh cells followed by a linear projection of the
/// concatenated states, one code per time step.
struct BiRnnEncoder {
  RnnCell forward;
  RnnCell backward;
  std::size_t code_dim = 0;
  ParamId proj_w = 0, proj_b = 0;
};

BiRnnEncoder make_birnn(ParamSet& params, const std::string& name, std::size_t input_dim, std::size_t state_dim,
                        std::size_t code_dim, ParamGroup group);
std::vector<ad::Var> birnn_encode(ParamBinding& bind, const BiRnnEncoder& enc, std::span<const ad::Var> xs);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::uint64_t rejected_steps = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  AdamState() = default;
  AdamState(const ParamSet& params, AdamConfig cfg);
};

/// Bias-corrected Adam update of every trainable tensor from its grad.
/// Returns false (and leaves everything untouched except rejected_steps) if any
/// trainable gradient is non-finite.
bool adam_step(AdamState& state, ParamSet& params);

/// Rescales all trainable gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParamSet& params, double max_norm);

nlohmann::json params_to_json(const ParamSet& params);
/// Fills values into a ParamSet with an identical layout; throws ContractError on mismatch.
void params_from_json(const nlohmann::json& j, ParamSet& params);

}  // namespace tmcseg::nn
