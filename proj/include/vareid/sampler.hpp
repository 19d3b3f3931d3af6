// Identity-balanced P x Q batch sampling.
#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "vareid/error.hpp"

namespace vareid {

/// Training sample indices grouped by class (dense class index).
using ClassBuckets = std::vector<std::vector<std::size_t>>;

/// P distinct classes, Q samples from each. A class with fewer than Q samples
/// contributes every sample once and fills the rest by drawing with replacement.
template <class Rng>
std::vector<std::size_t> pk_sample(const ClassBuckets& buckets, std::size_t p, std::size_t q, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < buckets.size(); ++c) {
    if (!buckets[c].empty()) eligible.push_back(c);
  }
  if (p > eligible.size()) {
    throw Error(ErrorKind::TooFewIdentities, "need " + std::to_string(p) + " identities, have " +
                                                 std::to_string(eligible.size()));
  }
  // Partial Fisher-Yates: the first p entries become the chosen classes.
  for (std::size_t i = 0; i < p; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  std::vector<std::size_t> batch;
  batch.reserve(p * q);
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<std::size_t> pool = buckets[eligible[i]];
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() >= q) {
      batch.insert(batch.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(q));
      continue;
    }
    batch.insert(batch.end(), pool.begin(), pool.end());
    std::uniform_int_distribution<std::size_t> extra(0, pool.size() - 1);
    for (std::size_t k = pool.size(); k < q; ++k) batch.push_back(pool[extra(rng)]);
  }
  return batch;
}

}  // namespace vareid
