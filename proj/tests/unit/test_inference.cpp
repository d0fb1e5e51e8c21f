#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

#include "reference.hpp"
#include "tmcseg/errors.hpp"
#include "tmcseg/inference.hpp"
#include "tmcseg/oracle.hpp"

using namespace tmcseg;
using models::ModelKind;

namespace {

constexpr ModelKind kKinds[] = {ModelKind::Dmtmc, ModelKind::Vsl, ModelKind::Svrnn};

models::TmcModel small_model(ModelKind kind, std::size_t d_z, std::uint64_t seed) {
  auto c = models::TmcConfig::preset(kind);
  c.d_z = d_z;
  c.hidden_units = 6;
  c.rnn_state_dim = 5;
  c.encoder_state_dim = 3;
  c.encoder_code_dim = 3;
  auto m = models::make_model(c, seed);
  ref::jitter(m.params, 0.3, seed + 1);
  return m;
}

data::LabeledSequence small_sequence(std::size_t n, std::uint64_t seed, double fraction = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  data::LabeledSequence s;
  data::Label y = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (t % 4 == 0) y = static_cast<data::Label>(rng() % 2);
    s.truth.push_back(y);
    s.xs.push_back((y ? 1.0 : -1.0) + 0.5 * nd(rng));
  }
  s.mask = data::mask_labels(n, fraction, seed + 3);
  return s;
}

}  // namespace

TEST(Elbo, NoLatentFullyObservedEqualsLogJoint) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = small_model(ModelKind::Dmtmc, 0, seed);
    const auto seq = small_sequence(12, seed, 0.0);
    models::Trajectory tr;
    for (std::size_t t = 0; t < seq.length(); ++t) {
      tr.xs.push_back({seq.xs[t]});
      tr.zs.push_back({});
      tr.ys.push_back(seq.truth[t]);
    }
    dist::Rng rng(seed);
    const auto e = inference::estimate_elbo(m, seq, rng, 1, {});
    EXPECT_NEAR(e.total, ref::log_joint(m, tr), 1e-10);
    EXPECT_NEAR(e.total, e.terms.sum(), 1e-10);
  }
}

TEST(Elbo, TermsSumToTotal) {
  for (auto k : kKinds) {
    const auto m = small_model(k, 2, 4);
    const auto seq = small_sequence(20, 4);
    dist::Rng rng(1);
    const auto e = inference::estimate_elbo(m, seq, rng, 3, {});
    EXPECT_TRUE(e.valid);
    EXPECT_NEAR(e.total, e.terms.sum(), 1e-9) << models::to_string(k);
    if (k != ModelKind::Svrnn) EXPECT_EQ(e.terms.penalty, 0.0);
  }
}

TEST(Elbo, CommonRandomNumbersReplay) {
  for (auto k : kKinds) {
    const auto m = small_model(k, 2, 5);
    const auto seq = small_sequence(16, 5);
    dist::Rng a(9), b(9);
    EXPECT_EQ(inference::estimate_elbo(m, seq, a, 2, {}).total, inference::estimate_elbo(m, seq, b, 2, {}).total);
  }
}

TEST(Elbo, WrongKindOrDimensionRejected) {
  const auto m = small_model(ModelKind::Vsl, 2, 1);
  const auto seq = small_sequence(8, 1);
  ad::Graph g;
  nn::ParamBinding bind(g, m.params);
  dist::Rng rng(1);
  EXPECT_THROW(inference::elbo_generic(bind, m, seq, rng, {}), ContractError);
  auto bad = seq;
  bad.d_x = 2;
  bad.xs.resize(16);
  EXPECT_THROW(inference::estimate_elbo(m, bad, rng, 1, {}), ContractError);
}

TEST(Elbo, GradientMatchesFiniteDifferences) {
  for (auto k : kKinds) {
    auto m = small_model(k, 2, 8);
    const auto seq = small_sequence(10, 8);
    dist::Rng rng(21);
    const auto state = rng;
    m.params.zero_grad();
    inference::elbo_with_gradient(m, seq, rng, {});
    std::vector<double> grad;
    for (const auto& t : m.params.tensors()) grad.insert(grad.end(), t.grad.begin(), t.grad.end());
    const auto flat = m.params.flat_values();
    std::mt19937_64 pick(3);
    const double h = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t i = pick() % flat.size();
      auto eval = [&](double delta) {
        auto shifted = flat;
        shifted[i] += delta;
        m.params.assign_flat(shifted);
        auto r = state;
        return inference::estimate_elbo(m, seq, r, 1, {}).total;
      };
      const double fd = (eval(h) - eval(-h)) / (2 * h);
      const double scale = std::max(std::abs(fd), std::abs(grad[i]));
      if (scale < 1e-3)
        EXPECT_NEAR(grad[i], fd, 1e-6) << models::to_string(k) << " param " << i;
      else
        EXPECT_LE(std::abs(grad[i] - fd) / scale, 1e-3) << models::to_string(k) << " param " << i;
    }
    m.params.assign_flat(flat);
  }
}

TEST(Elbo, HardSamplingIsALowerBound) {
  auto cfg = models::TmcConfig::preset(ModelKind::Dmtmc);
  cfg.d_z = 0;
  cfg.hidden_units = 6;
  cfg.rnn_state_dim = 4;
  auto m = models::make_model(cfg, 2);
  ref::jitter(m.params, 0.5, 3);
  auto seq = small_sequence(4, 2, 0.5);
  const double exact = oracle::enumerate_loglik(m, seq);
  dist::Rng rng(5);
  inference::ElboOptions opt;
  opt.sampling = inference::LabelSampling::Hard;
  const std::size_t n = 20000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = inference::estimate_elbo(m, seq, rng, 1, opt).total;
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  EXPECT_LE(mean, exact + 3 * se);
}

TEST(TrainConfig, JsonAndValidation) {
  inference::TrainConfig c;
  c.epochs = 17;
  c.truncation_window = 64;
  const auto back = inference::train_config_from_json(nlohmann::json::parse(inference::train_config_to_json(c).dump()));
  EXPECT_EQ(back.epochs, 17u);
  EXPECT_EQ(back.truncation_window, 64u);
  auto j = inference::train_config_to_json(c);
  j["epoch"] = 3;
  EXPECT_THROW(inference::train_config_from_json(j), ContractError);
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ContractError);
}

TEST(Train, ImprovesElboAndIsReproducible) {
  for (auto k : kKinds) {
    const auto seq = small_sequence(64, 6);
    inference::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.learning_rate = 1e-2;
    cfg.seed = 4;
    auto a = small_model(k, 1, 3);
    auto b = small_model(k, 1, 3);
    dist::Rng r0(1);
    const double before = inference::estimate_elbo(a, seq, r0, 50, {}).total;
    const auto ta = inference::train(a, seq, cfg);
    const auto tb = inference::train(b, seq, cfg);
    EXPECT_EQ(a.params.flat_values(), b.params.flat_values());
    ASSERT_EQ(ta.rows.size(), 60u);
    EXPECT_EQ(ta.rows.back().elbo.total, tb.rows.back().elbo.total);
    dist::Rng r1(1);
    EXPECT_GT(inference::estimate_elbo(a, seq, r1, 50, {}).total, before) << models::to_string(k);
  }
}

TEST(Train, TruncationWindowsTakeOneStepEach) {
  const auto seq = small_sequence(40, 2);
  inference::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.truncation_window = 16;
  auto m = small_model(ModelKind::Svrnn, 1, 2);
  const auto trace = inference::train(m, seq, cfg);
  EXPECT_EQ(trace.rows.size(), 2u);
  EXPECT_EQ(trace.skipped_steps, 0u);
  EXPECT_TRUE(std::isfinite(trace.rows[1].elbo.total));
}

TEST(Train, AbortsAfterRepeatedNonFiniteSteps) {
  auto seq = small_sequence(16, 1);
  seq.xs[3] = std::numeric_limits<double>::infinity();
  inference::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.max_consecutive_skips = 4;
  auto m = small_model(ModelKind::Dmtmc, 1, 1);
  const auto before = m.params.flat_values();
  EXPECT_THROW(inference::train(m, seq, cfg), inference::TrainingAborted);
  EXPECT_EQ(m.params.flat_values(), before);
}

TEST(Train, EvalEveryRecordsErrorRate) {
  const auto seq = small_sequence(32, 3);
  inference::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.eval_every = 2;
  auto m = small_model(ModelKind::Dmtmc, 1, 1);
  std::size_t calls = 0;
  const auto trace = inference::train(m, seq, cfg, [&](const inference::TraceRow&) { ++calls; });
  EXPECT_EQ(calls, 4u);
  EXPECT_FALSE(trace.rows[0].error_rate.has_value());
  ASSERT_TRUE(trace.rows[1].error_rate.has_value());
  EXPECT_GE(*trace.rows[1].error_rate, 0.0);
  std::ostringstream os;
  inference::write_trace_csv(os, trace);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "epoch,elbo,reconstruction,kl_or_prior,label_supervised,label_entropy,penalty,error_rate,seconds");
}

TEST(Posterior, SimplexPassThroughAndDeterminism) {
  for (auto k : kKinds) {
    const auto m = small_model(k, 2, 7);
    const auto seq = small_sequence(30, 7);
    const auto p = inference::posterior_labels(m, seq, 8, 3);
    const auto q = inference::posterior_labels(m, seq, 8, 3);
    EXPECT_EQ(p.decoded, q.decoded);
    ASSERT_EQ(p.probs.size(), seq.length());
    for (std::size_t t = 0; t < seq.length(); ++t) {
      double s = 0.0;
      for (double v : p.probs[t]) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
      if (seq.observed(t)) {
        EXPECT_EQ(p.decoded[t], seq.truth[t]);
        EXPECT_EQ(p.probs[t][seq.truth[t]], 1.0);
      } else {
        EXPECT_EQ(p.decoded[t], p.probs[t][1] > p.probs[t][0] ? 1 : 0);
      }
    }
    EXPECT_THROW(inference::posterior_labels(m, seq, 0, 1), ContractError);
  }
}

TEST(Posterior, CausalDecodeIgnoresFuture) {
  const auto m = small_model(ModelKind::Dmtmc, 2, 9);
  auto seq = small_sequence(30, 9);
  const auto a = inference::posterior_labels(m, seq, 4, 1);
  for (std::size_t t = 20; t < 30; ++t) seq.xs[t] += 3.0;
  const auto b = inference::posterior_labels(m, seq, 4, 1);
  for (std::size_t t = 0; t < 20; ++t) EXPECT_EQ(a.probs[t], b.probs[t]);
}
