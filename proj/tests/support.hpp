#pragma once

#include <cstdlib>
#include <random>
#include <string>

#include "mvpb/collision.hpp"

namespace testing {

inline std::string cache_dir() {
  const char* c = std::getenv("MVPB_CACHE");
  return c ? c : "";
}

// 16 x 8 model shared by the fast tests.
inline const mvpb::LinearModel& small_model() {
  static const mvpb::LinearModel m = mvpb::build_model(16, 8, 8.0, {}, cache_dir());
  return m;
}

// Default 32 x 16 model.
inline const mvpb::LinearModel& default_model() {
  static const mvpb::LinearModel m = mvpb::build_model(32, 16, 8.0, {}, cache_dir());
  return m;
}

inline mvpb::Vec random_vec(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  mvpb::Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

}  // namespace testing
