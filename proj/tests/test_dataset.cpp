#include <doctest.h>

#include <map>

#include "sfb/dataset.hpp"
#include "sfb/envs.hpp"

using namespace sfb;

TEST_CASE("collection is seeded, sized, and supported by the kernel") {
  const TabularMdp mdp = make_random_mdp(4, 3, 0.9, 7);
  const TransitionDataset a = collect_dataset(mdp, uniform_policy(mdp), 500, 4, 9);
  const TransitionDataset b = collect_dataset(mdp, uniform_policy(mdp), 500, 4, 9);
  REQUIRE(a.size() == 500);
  CHECK(a.source_seed == 9);
  CHECK(a.n_states == 4);
  CHECK(a.n_actions == 3);
  CHECK_NOTHROW(a.validate());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.transitions[i].s == b.transitions[i].s);
    CHECK(a.transitions[i].a == b.transitions[i].a);
    CHECK(a.transitions[i].s_next == b.transitions[i].s_next);
    // every recorded step is possible under the kernel
    CHECK(mdp.transition(mdp.sa_index(a.transitions[i].s, a.transitions[i].a),
                         a.transitions[i].s_next) > 0.0);
  }
  const TransitionDataset c = collect_dataset(mdp, uniform_policy(mdp), 500, 4, 10);
  bool all_same = true;
  for (int i = 0; i < c.size(); ++i)
    all_same = all_same && c.transitions[i].a == a.transitions[i].a;
  CHECK_FALSE(all_same);
}

TEST_CASE("episodes restart from the initial distribution") {
  // Grid dynamics trap every non-center state, so each episode's first
  // transition must start at the center and later ones must not move.
  const GridDidacticEnv env = make_grid_env(3, 0.5);
  const TransitionDataset data =
      collect_dataset(env.mdp, uniform_policy(env.mdp), 40, 4, 3);
  for (int i = 0; i < data.size(); ++i) {
    if (i % 4 == 0) {
      CHECK(data.transitions[i].s == env.center);
    } else {
      CHECK(data.transitions[i].s == data.transitions[i - 1].s_next);
    }
  }

  const TransitionDataset single =
      collect_dataset(env.mdp, uniform_policy(env.mdp), 12, 1, 3);
  for (const auto& t : single.transitions) CHECK(t.s == env.center);
}

TEST_CASE("empirical state distribution counts both endpoints") {
  const TabularMdp mdp = make_random_mdp(3, 2, 0.9, 20);
  const TransitionDataset data = collect_dataset(mdp, uniform_policy(mdp), 100, 5, 21);
  std::map<int, double> counts;
  for (const auto& t : data.transitions) {
    counts[t.s] += 1.0;
    counts[t.s_next] += 1.0;
  }
  const double total = 2.0 * data.size();
  CHECK(data.empirical_state_dist.sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (int s = 0; s < 3; ++s)
    CHECK(data.empirical_state_dist[s] ==
          doctest::Approx(counts[s] / total).epsilon(1e-12));
}

TEST_CASE("dataset csv round trips and validates") {
  const TabularMdp mdp = make_random_mdp(3, 2, 0.9, 30);
  const TransitionDataset data = collect_dataset(mdp, uniform_policy(mdp), 50, 4, 31);
  const std::string csv = dataset_to_csv(data, "random:30");
  CHECK(csv.find("random:30") != std::string::npos);

  const TransitionDataset back = dataset_from_csv(csv, 3, 2);
  REQUIRE(back.size() == data.size());
  CHECK(back.source_seed == data.source_seed);
  for (int i = 0; i < back.size(); ++i) {
    CHECK(back.transitions[i].s == data.transitions[i].s);
    CHECK(back.transitions[i].a == data.transitions[i].a);
    CHECK(back.transitions[i].s_next == data.transitions[i].s_next);
  }
  CHECK((back.empirical_state_dist - data.empirical_state_dist).cwiseAbs().maxCoeff() <
        1e-12);

  CHECK_THROWS_AS(dataset_from_csv(csv, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(dataset_from_csv("s,a,s_next\n0,9,0\n", 3, 2), std::invalid_argument);
  CHECK_THROWS_AS(dataset_from_csv("", 3, 2), std::invalid_argument);
}
