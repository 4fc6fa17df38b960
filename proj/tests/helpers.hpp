#pragma once

#include <filesystem>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "o3n/videodata.hpp"

namespace o3n::test {

inline std::filesystem::path tmp_dir(const std::string& name) {
  auto p = std::filesystem::path(O3N_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Upper-tail p-value of Pearson's statistic for observed counts against equal expected counts.
template <typename Counts>
double chi_square_uniform_p(const Counts& counts) {
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Video whose frame t (1-based) is filled with the value t in every pixel.
inline Video ramp_video(std::uint32_t n, std::uint32_t h = 8, std::uint32_t w = 8) {
  Video v(n, h, w, 3);
  for (std::uint32_t t = 0; t < n; ++t)
    for (auto& p : v.frame(t)) p = static_cast<std::uint8_t>(t + 1);
  return v;
}

}  // namespace o3n::test
