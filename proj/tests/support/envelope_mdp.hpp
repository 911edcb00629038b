// Random finite MDPs and the exact envelope operator over a tabular Q, shared by
// the unit tests and the acceptance binary.
#pragma once

#include "pbmorl/eql.hpp"

namespace pbmorl::testing {

struct RandomMdp {
  std::size_t states = 0;
  std::size_t actions = 0;
  std::vector<Vector> reward;          // [s * actions + a] -> m-vector
  std::vector<Vector> transition;      // [s * actions + a] -> distribution over s'
  std::vector<std::uint8_t> terminal;  // [s * actions + a]
};

inline RandomMdp random_mdp(Rng& rng, std::size_t max_states, std::size_t max_actions, std::size_t objectives) {
  RandomMdp mdp;
  mdp.states = std::uniform_int_distribution<std::size_t>(2, max_states)(rng);
  mdp.actions = std::uniform_int_distribution<std::size_t>(2, max_actions)(rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  for (std::size_t i = 0; i < mdp.states * mdp.actions; ++i) {
    Vector r(objectives);
    for (auto& x : r) x = u(rng);
    mdp.reward.push_back(std::move(r));
    Vector dist(mdp.states);
    double total = 0.0;
    for (auto& x : dist) total += (x = p(rng) < 0.5 ? p(rng) : 0.0);
    if (total == 0.0) dist[i % mdp.states] = total = 1.0;
    for (auto& x : dist) x /= total;
    mdp.transition.push_back(std::move(dist));
    mdp.terminal.push_back(p(rng) < 0.1 ? 1 : 0);
  }
  return mdp;
}

/// Table with every entry grounded, so the filter ranges over the whole lattice.
inline TabularQ full_table(std::size_t states, std::size_t actions, std::size_t objectives, std::size_t resolution,
                           const std::function<double()>& draw) {
  TabularQ q(states, actions, objectives, resolution);
  for (auto& x : q.raw()) x = draw();
  q.load_json(q.to_json());
  return q;
}

/// (BQ)(s,a,w) = r(s,a) + gamma * E_{s'} (HQ)(s', w), H over every lattice point.
inline TabularQ envelope_operator(const RandomMdp& mdp, const TabularQ& q, double gamma) {
  TabularQ out = q;
  const auto& lat = q.lattice();
  std::vector<Weight> grid;
  for (std::size_t k = 0; k < lat.size(); ++k) grid.push_back(lat.point(k));
  for (std::size_t k = 0; k < lat.size(); ++k) {
    std::vector<Vector> filtered;
    for (std::size_t s = 0; s < mdp.states; ++s) filtered.push_back(envelope_filter(q, State{s, {}}, grid[k], grid));
    for (std::size_t s = 0; s < mdp.states; ++s) {
      for (std::size_t a = 0; a < mdp.actions; ++a) {
        const std::size_t i = s * mdp.actions + a;
        Vector y = mdp.reward[i];
        if (!mdp.terminal[i]) {
          for (std::size_t n = 0; n < mdp.states; ++n) {
            for (std::size_t j = 0; j < y.size(); ++j) y[j] += gamma * mdp.transition[i][n] * filtered[n][j];
          }
        }
        auto e = out.entry(s, k, a);
        std::copy(y.begin(), y.end(), e.begin());
      }
    }
  }
  return out;
}

/// d(Q1, Q2) = max over (s, a, lattice w) of |w . (Q1 - Q2)(s, a, w)|
inline double envelope_distance(const TabularQ& a, const TabularQ& b) {
  const auto& lat = a.lattice();
  double worst = 0.0;
  for (std::size_t s = 0; s < a.states(); ++s) {
    for (std::size_t k = 0; k < lat.size(); ++k) {
      for (std::size_t act = 0; act < a.actions(); ++act) {
        const auto x = a.entry(s, k, act);
        const auto y = b.entry(s, k, act);
        double v = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) v += lat.point(k)[j] * (x[j] - y[j]);
        worst = std::max(worst, std::abs(v));
      }
    }
  }
  return worst;
}

}  // namespace pbmorl::testing
