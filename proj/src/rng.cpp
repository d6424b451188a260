#include "llmrank/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace llmrank {

std::size_t weighted_index(const std::vector<double>& cumulative, double u) {
  if (cumulative.empty()) throw std::invalid_argument("weighted_index: empty weights");
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

std::vector<std::size_t> weighted_draws(const std::vector<double>& weights, std::size_t n,
                                        Rng& rng) {
  std::vector<double> cum(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw std::invalid_argument("weighted_draws: negative weight");
    total += weights[i];
    cum[i] = total;
  }
  if (total <= 0.0) throw std::invalid_argument("weighted_draws: zero total mass");
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(weighted_index(cum, rng.next_double()));
  }
  return out;
}

}  // namespace llmrank
