#pragma once

// Brute-force oracles and thin gradient-check wrappers shared by the unit and
// acceptance suites.

#include <cmath>
#include <vector>

#include "fairseg/gradcheck.hpp"
#include "fairseg/losses.hpp"
#include "fairseg/numerics.hpp"
#include "fairseg/rng.hpp"
#include "fairseg/verify.hpp"

namespace fairseg::testing {

using verify::random_ce_instance;
using verify::random_cluster_instance;
using verify::random_cons_instance;
using verify::random_grid;
using verify::random_prop1_trial;

inline Grid grid_from(const ParamBlock& b, std::size_t h, std::size_t w, std::size_t c) {
  Grid g(h, w, c);
  g.values() = b.values;
  return g;
}

// Enumerates unordered neighbour pairs once and counts each twice.
inline double brute_force_cons(const Grid& image, const Grid& probs, std::size_t window,
                               double sigma1) {
  const long h = static_cast<long>(image.height()), w = static_cast<long>(image.width());
  const long r = static_cast<long>(window / 2);
  double total = 0.0;
  double pairs = 0.0;
  for (long p = 0; p < h * w; ++p)
    for (long q = p + 1; q < h * w; ++q) {
      const long py = p / w, px = p % w, qy = q / w, qx = q % w;
      if (std::labs(py - qy) > r || std::labs(px - qx) > r) continue;
      double dc = 0, dp = 0;
      for (std::size_t c = 0; c < image.channels(); ++c) {
        const double d = image.at(py, px, c) - image.at(qy, qx, c);
        dc += d * d;
      }
      for (std::size_t c = 0; c < probs.channels(); ++c) {
        const double d = probs.at(py, px, c) - probs.at(qy, qx, c);
        dp += d * d;
      }
      total += 2.0 * std::exp(-dc / (2.0 * sigma1 * sigma1)) * dp;
      pairs += 2.0;
    }
  return pairs > 0 ? total / pairs : 0.0;
}

inline double gradcheck_weighted_ce(Rng& rng, double eps = 1e-6) {
  return verify::gradcheck_instance("weighted_ce", rng, eps).max_rel_error;
}
inline double gradcheck_cluster(Rng& rng, double eps = 1e-6) {
  return verify::gradcheck_instance("cluster_loss", rng, eps).max_rel_error;
}
inline double gradcheck_cons(Rng& rng, bool literal, double eps = 1e-6) {
  return verify::gradcheck_instance(literal ? "cons_loss_literal" : "cons_loss", rng, eps).max_rel_error;
}
inline double gradcheck_cons_logits(Rng& rng, double eps = 1e-6) {
  return verify::gradcheck_instance("cons_loss_logits", rng, eps).max_rel_error;
}
inline double gradcheck_distill(Rng& rng, double eps = 1e-6) {
  return verify::gradcheck_instance("distill_loss", rng, eps).max_rel_error;
}

}  // namespace fairseg::testing
