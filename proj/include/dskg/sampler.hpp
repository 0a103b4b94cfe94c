#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dskg/common.hpp"

namespace dskg {

// Zipfian sampler over a frequency-ordered lexicon of size N:
//   P(j) = log((j + 2) / (j + 1)) / log(N + 1),  j in [0, N).
// Draws invert the CDF: j = floor(exp(u * log(N + 1))) - 1.
// Holds scratch state for duplicate rejection, so one instance per thread.
class LogUniformSampler {
 public:
  explicit LogUniformSampler(std::uint32_t n)
      : n_(n), log_range_(std::log(static_cast<double>(n) + 1.0)), stamp_(n, 0) {
    if (n == 0) throw ConfigError("log-uniform sampler over an empty lexicon");
  }

  std::uint32_t size() const noexcept { return n_; }

  double probability(std::uint32_t j) const {
    return std::log((j + 2.0) / (j + 1.0)) / log_range_;
  }

  template <typename Rng>
  std::uint32_t draw(Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double x = std::exp(unit(rng) * log_range_);
    const auto j = static_cast<std::int64_t>(std::floor(x)) - 1;
    return static_cast<std::uint32_t>(std::clamp<std::int64_t>(j, 0, n_ - 1));
  }

  // `count` distinct ids, none equal to `exclude`, in draw order. Rejects
  // duplicates and the excluded id. When count == N - 1 the result is forced,
  // so the complement is returned directly.
  template <typename Rng>
  void sample(std::uint32_t count, std::uint32_t exclude, Rng& rng,
              std::vector<std::uint32_t>& out) {
    if (count + 1 > n_) {
      throw ConfigError("cannot draw " + std::to_string(count) +
                        " distinct negatives from a lexicon of " + std::to_string(n_));
    }
    out.clear();
    if (count + 1 == n_ && exclude < n_) {
      for (std::uint32_t j = 0; j < n_; ++j) {
        if (j != exclude) out.push_back(j);
      }
      return;
    }
    if (++generation_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      generation_ = 1;
    }
    if (exclude < n_) stamp_[exclude] = generation_;
    while (out.size() < count) {
      const auto j = draw(rng);
      if (stamp_[j] == generation_) continue;
      stamp_[j] = generation_;
      out.push_back(j);
    }
  }

  template <typename Rng>
  std::vector<std::uint32_t> sample(std::uint32_t count, std::uint32_t exclude, Rng& rng) {
    std::vector<std::uint32_t> out;
    sample(count, exclude, rng, out);
    return out;
  }

 private:
  std::uint32_t n_;
  double log_range_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t generation_ = 0;
};

}  // namespace dskg
