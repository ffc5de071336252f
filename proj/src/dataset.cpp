#include "sfb/dataset.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

#include "sfb/rng.hpp"

namespace sfb {

void TransitionDataset::validate() const {
  if (n_states <= 0 || n_actions <= 0)
    throw std::invalid_argument("TransitionDataset: dimensions must be positive");
  for (const auto& t : transitions) {
    if (t.s < 0 || t.s >= n_states || t.s_next < 0 || t.s_next >= n_states ||
        t.a < 0 || t.a >= n_actions)
      throw std::invalid_argument("TransitionDataset: index out of bounds");
  }
  if (empirical_state_dist.size() != n_states)
    throw std::invalid_argument("TransitionDataset: rho size mismatch");
  if (std::abs(empirical_state_dist.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("TransitionDataset: rho does not sum to 1");
}

namespace {

Eigen::VectorXd endpoint_distribution(const std::vector<TransitionDataset::Transition>& ts,
                                      int n_states) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n_states);
  for (const auto& t : ts) {
    counts[t.s] += 1.0;
    counts[t.s_next] += 1.0;
  }
  return counts / counts.sum();
}

}  // namespace

TransitionDataset collect_dataset(const TabularMdp& mdp, const StochasticPolicy& behavior,
                                  int n_steps, int episode_len, std::uint64_t seed) {
  mdp.validate();
  behavior.validate();
  if (n_steps < 1) throw std::invalid_argument("collect_dataset: n_steps must be >= 1");
  if (episode_len < 1) throw std::invalid_argument("collect_dataset: episode_len must be >= 1");
  Rng rng(seed);
  TransitionDataset data;
  data.n_states = mdp.n_states;
  data.n_actions = mdp.n_actions;
  data.source_seed = seed;
  data.transitions.reserve(n_steps);
  int s = 0;
  int steps_in_episode = 0;
  bool need_reset = true;
  while (data.size() < n_steps) {
    if (need_reset) {
      s = rng.categorical(mdp.initial_dist);
      steps_in_episode = 0;
      need_reset = false;
    }
    const int a = rng.categorical(behavior.probs.row(s).transpose());
    const int s_next = rng.categorical(mdp.transition.row(mdp.sa_index(s, a)).transpose());
    data.transitions.push_back({s, a, s_next});
    s = s_next;
    if (++steps_in_episode >= episode_len) need_reset = true;
  }
  data.empirical_state_dist = endpoint_distribution(data.transitions, mdp.n_states);
  data.validate();
  return data;
}

std::string dataset_to_csv(const TransitionDataset& data, const std::string& env_id) {
  std::ostringstream out;
  out << "# env=" << env_id << " seed=" << data.source_seed << " n_steps=" << data.size()
      << "\n";
  out << "s,a,s_next\n";
  for (const auto& t : data.transitions)
    out << t.s << "," << t.a << "," << t.s_next << "\n";
  return out.str();
}

TransitionDataset dataset_from_csv(const std::string& text, int n_states, int n_actions) {
  TransitionDataset data;
  data.n_states = n_states;
  data.n_actions = n_actions;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      const auto seed_pos = line.find("seed=");
      if (seed_pos != std::string::npos) {
        std::uint64_t seed = 0;
        const char* first = line.data() + seed_pos + 5;
        std::from_chars(first, line.data() + line.size(), seed);
        data.source_seed = seed;
      }
      continue;
    }
    if (line.rfind("s,", 0) == 0) continue;
    TransitionDataset::Transition t;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    auto r1 = std::from_chars(p, end, t.s);
    if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ',')
      throw std::invalid_argument("dataset_from_csv: malformed row '" + line + "'");
    auto r2 = std::from_chars(r1.ptr + 1, end, t.a);
    if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != ',')
      throw std::invalid_argument("dataset_from_csv: malformed row '" + line + "'");
    auto r3 = std::from_chars(r2.ptr + 1, end, t.s_next);
    if (r3.ec != std::errc())
      throw std::invalid_argument("dataset_from_csv: malformed row '" + line + "'");
    data.transitions.push_back(t);
  }
  if (data.transitions.empty())
    throw std::invalid_argument("dataset_from_csv: no transitions found");
  data.empirical_state_dist = endpoint_distribution(data.transitions, n_states);
  data.validate();
  return data;
}

}  // namespace sfb
