#include <cmath>
#include <tuple>

#include "fairseg/error.hpp"
#include "fairseg/losses.hpp"
#include "fairseg/numerics.hpp"

namespace fairseg {

ClusterLossResult cluster_loss(const Grid& features, const LabelMap& labels,
                               const PrototypeBank& protos, const ClusterConfig& cfg) {
  require(labels.pixels() == features.pixels(), ErrorKind::Dimension,
          "cluster_loss: label shape mismatch");
  require(features.channels() == protos.dim(), ErrorKind::Dimension,
          "cluster_loss: feature dim differs from prototype dim");
  const std::size_t dim = features.channels();

  ClusterLossResult out;
  auto& grad = out.slot.grads["features"];
  grad.assign(features.size(), 0.0);
  CompensatedSum total;

  for (std::size_t i = 0; i < features.pixels(); ++i) {
    const std::uint16_t y = labels.data[i];
    if (y == kIgnoreLabel) continue;
    const auto f = features.pixel(i);
    double* g = grad.data() + i * dim;
    bool own_seen = false;
    for (const auto& [cls, proto] : protos.entries()) {
      if (!proto.initialized) continue;
      const double dist = euclidean(f, proto.vector);
      // Unit direction from p_c to f; zero at coincidence.
      const double scale = dist > 0.0 ? 1.0 / dist : 0.0;
      if (cls == y) {
        own_seen = true;
        total.add(dist);
        for (std::size_t d = 0; d < dim; ++d) g[d] += (f[d] - proto.vector[d]) * scale;
      } else if (dist < cfg.margin) {
        total.add(cfg.margin - dist);
        for (std::size_t d = 0; d < dim; ++d) g[d] -= (f[d] - proto.vector[d]) * scale;
      }
    }
    if (!own_seen) ++out.skipped_terms;
    ++out.pixels;
  }
  if (out.pixels == 0) return out;
  const double inv = 1.0 / static_cast<double>(out.pixels);
  std::tie(out.slot.value, out.slot.value_residual) =
      total.divided_by(static_cast<double>(out.pixels));
  for (double& g : grad) g *= inv;
  return out;
}

GradSlot distill_loss(const Grid& now, const Grid& prev) {
  require(now.same_shape(prev), ErrorKind::Dimension, "distill_loss: feature shapes differ");
  GradSlot slot;
  auto& grad = slot.grads["features"];
  grad.assign(now.size(), 0.0);
  const std::size_t n = now.pixels(), dim = now.channels();
  if (n == 0) return slot;
  const double inv = 1.0 / static_cast<double>(n);
  CompensatedSum total;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = now.pixel(i), b = prev.pixel(i);
    const double dist = euclidean(a, b);
    total.add(dist);
    if (dist == 0.0) continue;
    for (std::size_t d = 0; d < dim; ++d) grad[i * dim + d] = inv * (a[d] - b[d]) / dist;
  }
  std::tie(slot.value, slot.value_residual) = total.divided_by(static_cast<double>(n));
  return slot;
}

Prop1Report verify_proposition1(const Grid& now, const Grid& prev,
                                const std::vector<std::vector<double>>& prototypes) {
  require(now.same_shape(prev), ErrorKind::Dimension, "verify_proposition1: shapes differ");
  require(!prototypes.empty(), ErrorKind::Unavailable, "verify_proposition1: no prototypes");
  Prop1Report rep;
  rep.pixels = now.pixels();
  bool first = true;
  for (std::size_t i = 0; i < now.pixels(); ++i) {
    const auto a = now.pixel(i), b = prev.pixel(i);
    const double lhs = euclidean(a, b);
    double rhs = 0.0;
    for (const auto& p : prototypes) rhs += euclidean(a, p) + euclidean(p, b);
    rhs /= static_cast<double>(prototypes.size());
    const double slack = rhs - lhs;
    rep.min_slack = first ? slack : std::min(rep.min_slack, slack);
    rep.max_lhs = first ? lhs : std::max(rep.max_lhs, lhs);
    rep.max_rhs = first ? rhs : std::max(rep.max_rhs, rhs);
    rep.mean_lhs += lhs;
    rep.mean_rhs += rhs;
    if (!(lhs <= rhs + 1e-9)) rep.holds = false;
    first = false;
  }
  if (rep.pixels) {
    rep.mean_lhs /= static_cast<double>(rep.pixels);
    rep.mean_rhs /= static_cast<double>(rep.pixels);
  }
  return rep;
}

Prop1Report verify_proposition1(const Grid& now, const Grid& prev, const PrototypeBank& protos) {
  std::vector<std::vector<double>> vecs;
  for (const auto& [cls, p] : protos.entries())
    if (p.initialized) vecs.push_back(p.vector);
  return verify_proposition1(now, prev, vecs);
}

}  // namespace fairseg
