#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sfb/dataset.hpp"
#include "sfb/envs.hpp"
#include "sfb/fb_exact.hpp"
#include "sfb/measures.hpp"
#include "sfb/rng.hpp"

using namespace sfb;

namespace {

Eigen::MatrixXd random_invertible(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd b(n, n);
  for (int r = 0; r < n; ++r) b.row(r) = rng.gaussian_vector(n).transpose();
  return b + 3.0 * Eigen::MatrixXd::Identity(n, n);
}

// Two states, two actions, "go to the state the action names". Under the
// uniform policy the conditional visitation from any pair is 3/4 on the named
// state and 1/4 on the other (gamma 1/2).
TabularMdp make_goto_chain() {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 2;
  mdp.discount = 0.5;
  mdp.transition = Eigen::MatrixXd::Zero(4, 2);
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) mdp.transition(mdp.sa_index(s, a), a) = 1.0;
  mdp.initial_dist = Eigen::Vector2d(0.5, 0.5);
  mdp.validate();
  return mdp;
}

PolicyRowFamily uniform_family(int n_actions) {
  return [n_actions](int, const Eigen::VectorXd&) {
    return Eigen::VectorXd::Constant(n_actions, 1.0 / n_actions);
  };
}

}  // namespace

TEST_CASE("exact measures validate and carry both marginals") {
  const TabularMdp mdp = make_random_mdp(4, 3, 0.9, 1);
  const MeasureEstimate est = exact_measure(mdp, uniform_policy(mdp));
  CHECK(est.kind == MeasureEstimate::Kind::exact);
  CHECK_NOTHROW(est.validate());
  CHECK(est.state_marginal.sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(est.sa_marginal.sum() == doctest::Approx(1.0).epsilon(1e-10));
  const SuccessorMeasure m = occupancy_marginals(mdp, uniform_policy(mdp));
  CHECK((est.sa_marginal - m.marginal).cwiseAbs().maxCoeff() < 1e-12);

  MeasureEstimate bad = est;
  bad.state_marginal[0] -= 0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = est;
  bad.sa_marginal[0] = -1e-3;
  bad.sa_marginal[1] += 1e-3 + bad.sa_marginal[0];
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("grid coordinates attach cell geometry") {
  const GridDidacticEnv env = make_grid_env(3, 0.5);
  MeasureEstimate est = exact_measure(env.mdp, uniform_policy(env.mdp));
  attach_grid_coordinates(est, env);
  REQUIRE(est.state_coords.rows() == 9);
  REQUIRE(est.action_coords.rows() == 9);
  for (int c = 0; c < 9; ++c) {
    CHECK((est.state_coords.row(c).transpose() - env.cell_center(c)).norm() < 1e-12);
    CHECK((est.action_coords.row(c).transpose() - env.cell_center(c)).norm() < 1e-12);
  }
  CHECK(est.jitter_half_width == doctest::Approx(env.cell_width / 2.0).epsilon(1e-15));
}

TEST_CASE("sampling is seeded and reproduces the marginal") {
  MeasureEstimate est;
  est.kind = MeasureEstimate::Kind::exact;
  est.n_states = 2;
  est.n_actions = 1;
  est.state_marginal = Eigen::Vector2d(0.25, 0.75);
  est.sa_marginal = est.state_marginal;
  est.validate();

  const auto a = sample_measure(est, 4096, 5);
  const auto b = sample_measure(est, 4096, 5);
  REQUIRE(a.size() == 4096);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].s == b[i].s);
    CHECK_FALSE(a[i].has_coords);
  }
  double freq = 0.0;
  for (const auto& s : a) freq += s.s == 1 ? 1.0 : 0.0;
  // 4 sigma of a Bernoulli(0.75) mean over 4096 draws is about 0.027
  CHECK(freq / 4096.0 == doctest::Approx(0.75).epsilon(0.04));
}

TEST_CASE("samples with a lift stay inside their jitter boxes") {
  const GridDidacticEnv env = make_grid_env(3, 0.5);
  MeasureEstimate est = exact_measure(env.mdp, uniform_policy(env.mdp));
  attach_grid_coordinates(est, env);
  for (const auto& s : sample_measure(est, 512, 6)) {
    CHECK(s.has_coords);
    CHECK((s.state_xy - env.cell_center(s.s)).cwiseAbs().maxCoeff() <=
          env.cell_width / 2.0 + 1e-12);
    CHECK((s.action_xy - env.cell_center(s.a)).cwiseAbs().maxCoeff() <=
          env.cell_width / 2.0 + 1e-12);
  }
}

TEST_CASE("implicit reconstruction is exact for invertible exact models") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const TabularMdp mdp = make_random_mdp(3, 2, 0.9, 400 + seed);
    const ExactFbModel model =
        make_exact_model(mdp, random_invertible(mdp.n_pairs(), 410 + seed));
    Rng rng(420 + seed);
    const Eigen::VectorXd z = 0.7 * rng.ball_uniform(model.dim());
    const MeasureEstimate via = implicit_measure(model, z);
    CHECK(via.kind == MeasureEstimate::Kind::implicit);
    const SuccessorMeasure direct = model.measure(z);
    CHECK((via.sa_marginal - direct.marginal).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((via.state_marginal - direct.state_marginal).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("learned implicit route mixes the start distribution and lifts by the policy") {
  const CounterexampleEnv env = make_counterexample(0.5);
  const Eigen::VectorXd rho = Eigen::VectorXd::Ones(1);
  FbModel m = make_fb_model(1, 2, 2, 0.5, rho, 4, 0.75, 8);
  // F = (1,1) for every pair and embedding (bias column), B = (1,1): the
  // state weight is positive, so the single state keeps all the mass and the
  // pair marginal is exactly the policy row.
  m.params.forward.setZero();
  m.params.forward.col(m.n_features() - 1).setOnes();
  m.params.backward.setOnes();
  m.target = m.params;

  Rng rng(9);
  const Eigen::VectorXd z = 0.4 * rng.ball_uniform(2);
  const MeasureEstimate est = implicit_measure(m, z, env.mdp);
  CHECK(est.state_marginal[0] == doctest::Approx(1.0).epsilon(1e-12));
  const StochasticPolicy pi = soft_policy(m, z);
  CHECK(est.sa_marginal[0] == doctest::Approx(pi.probs(0, 0)).epsilon(1e-10));
  CHECK(est.sa_marginal[1] == doctest::Approx(pi.probs(0, 1)).epsilon(1e-10));
}

TEST_CASE("implicit route throws when every weight clamps away") {
  const CounterexampleEnv env = make_counterexample(0.5);
  const Eigen::VectorXd rho = Eigen::VectorXd::Ones(1);
  // zero forward weights leave nothing after the clamp
  const FbModel m = make_fb_model(1, 2, 2, 0.5, rho, 4, 0.75, 10);
  CHECK_THROWS_WITH_AS(implicit_measure(m, Eigen::VectorXd::Zero(2), env.mdp),
                       doctest::Contains("degenerate"), std::runtime_error);
}

TEST_CASE("conditional heads clamp and renormalize") {
  ExplicitMeasureModel model;
  model.n_states = 2;
  model.n_actions = 1;
  model.d = 2;
  model.discount = 0.5;
  model.features = make_fourier_features(2, 2, 0.75, 11);
  const int nfeat = model.features.dim();
  model.weights = Eigen::MatrixXd::Zero(2 * 2, nfeat);  // two pair slabs of two states
  model.weights(0, nfeat - 1) = 2.0;   // raw head (2, -1) via the bias feature
  model.weights(1, nfeat - 1) = -1.0;
  const Eigen::VectorXd psi = model.features(Eigen::VectorXd::Zero(2));
  const Eigen::VectorXd raw = model.raw_conditional(0, psi);
  CHECK(raw[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(raw[1] == doctest::Approx(-1.0).epsilon(1e-12));
  const Eigen::VectorXd dist = model.conditional(0, psi);
  CHECK(dist[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dist[1] == doctest::Approx(0.0).epsilon(1e-12));

  model.weights(0, nfeat - 1) = -2.0;  // everything clamps: uniform fallback
  const Eigen::VectorXd fallback = model.conditional(0, psi);
  CHECK(fallback[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("explicit training learns the goto chain's conditional measure") {
  const TabularMdp mdp = make_goto_chain();
  const TransitionDataset data =
      collect_dataset(mdp, uniform_policy(mdp), 2000, 4, 12);
  ExplicitTrainConfig cfg;
  cfg.n_steps = 4000;
  cfg.d = 2;
  cfg.n_waves = 4;
  cfg.seed = 13;
  const ExplicitTrainResult res =
      explicit_measure_train(2, 2, 0.5, data, uniform_family(2), cfg);
  CHECK_FALSE(res.log.empty());
  const Eigen::VectorXd psi = res.model.features(Eigen::VectorXd::Zero(2));
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const Eigen::VectorXd cond = res.model.conditional(res.model.sa_index(s, a), psi);
      CHECK(cond[a] == doctest::Approx(0.75).epsilon(0.03));
      CHECK(cond[1 - a] == doctest::Approx(0.25).epsilon(0.1));
    }

  // seeded: a second run reproduces the weights bit for bit
  const ExplicitTrainResult again =
      explicit_measure_train(2, 2, 0.5, data, uniform_family(2), cfg);
  CHECK((res.model.weights.array() == again.model.weights.array()).all());
}

TEST_CASE("explicit reconstruction follows the mixing formula") {
  const TabularMdp mdp = make_goto_chain();
  ExplicitMeasureModel model;
  model.n_states = 2;
  model.n_actions = 2;
  model.d = 2;
  model.discount = 0.5;
  model.features = make_fourier_features(2, 2, 0.75, 14);
  const int nfeat = model.features.dim();
  model.weights = Eigen::MatrixXd::Zero(4 * 2, nfeat);
  // hand-set every conditional to the chain's true one: 3/4 on the named
  // state, 1/4 on the other
  for (int s = 0; s < 2; ++s)
    for (int a = 0; a < 2; ++a) {
      const int sa = model.sa_index(s, a);
      model.weights(sa * 2 + a, nfeat - 1) = 0.75;
      model.weights(sa * 2 + (1 - a), nfeat - 1) = 0.25;
    }
  const MeasureEstimate est =
      explicit_measure(model, Eigen::VectorXd::Zero(2), mdp, uniform_family(2));
  CHECK(est.kind == MeasureEstimate::Kind::explicit_model);
  // (1-g) mu0 + g * mean conditional = 0.25 + 0.25 per state
  CHECK(est.state_marginal[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(est.state_marginal[1] == doctest::Approx(0.5).epsilon(1e-10));
  // matches the true occupancy of the uniform policy here
  const SuccessorMeasure truth = occupancy_marginals(mdp, uniform_policy(mdp));
  CHECK((est.state_marginal - truth.state_marginal).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((est.sa_marginal - truth.marginal).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("divergent explicit training aborts with the step index") {
  const TabularMdp mdp = make_goto_chain();
  const TransitionDataset data = collect_dataset(mdp, uniform_policy(mdp), 200, 4, 15);
  ExplicitTrainConfig cfg;
  cfg.n_steps = 5000;
  cfg.lr = 1e30;
  cfg.d = 2;
  cfg.n_waves = 4;
  CHECK_THROWS_WITH_AS(explicit_measure_train(2, 2, 0.5, data, uniform_family(2), cfg),
                       doctest::Contains("step"), std::runtime_error);
  ExplicitTrainConfig bad;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
