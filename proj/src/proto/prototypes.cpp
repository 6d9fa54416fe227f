#include "fairseg/prototypes.hpp"

#include <cmath>
#include <limits>

#include "fairseg/error.hpp"
#include "fairseg/numerics.hpp"

namespace fairseg {

void ClusterConfig::validate() const {
  require(margin > 0.0, ErrorKind::Config, "cluster margin must be positive");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config,
          "cluster momentum must lie in [0, 1)");
  require(update_period >= 1, ErrorKind::Config, "cluster update_period must be >= 1");
  require(bank_capacity >= 1, ErrorKind::Config, "cluster bank_capacity must be >= 1");
}

FeatureBank::FeatureBank(std::size_t dim, std::size_t capacity) : dim_(dim), capacity_(capacity) {
  require(capacity >= 1, ErrorKind::Config, "feature bank capacity must be >= 1");
}

void FeatureBank::deposit(std::uint16_t cls, std::span<const double> feature) {
  require(feature.size() == dim_, ErrorKind::Dimension,
          "deposit of length " + std::to_string(feature.size()) + " into bank of dim " +
              std::to_string(dim_));
  auto& q = queues_[cls];
  q.emplace_back(feature.begin(), feature.end());
  while (q.size() > capacity_) q.pop_front();
}

std::size_t FeatureBank::size(std::uint16_t cls) const {
  const auto it = queues_.find(cls);
  return it == queues_.end() ? 0 : it->second.size();
}

const std::deque<std::vector<double>>* FeatureBank::queue(std::uint16_t cls) const {
  const auto it = queues_.find(cls);
  return it == queues_.end() ? nullptr : &it->second;
}

std::optional<std::vector<double>> FeatureBank::mean(std::uint16_t cls) const {
  const auto* q = queue(cls);
  if (q == nullptr || q->empty()) return std::nullopt;
  std::vector<double> m(dim_, 0.0);
  for (const auto& f : *q)
    for (std::size_t d = 0; d < dim_; ++d) m[d] += f[d];
  for (double& v : m) v /= static_cast<double>(q->size());
  return m;
}

std::vector<std::uint16_t> FeatureBank::classes() const {
  std::vector<std::uint16_t> out;
  for (const auto& [cls, q] : queues_) out.push_back(cls);
  return out;
}

void PrototypeBank::ensure(std::uint16_t cls) {
  if (!contains(cls)) entries_[cls] = Prototype{std::vector<double>(dim_, 0.0), false, false};
}

const Prototype& PrototypeBank::at(std::uint16_t cls) const {
  const auto it = entries_.find(cls);
  require(it != entries_.end(), ErrorKind::State, "no prototype for class " + std::to_string(cls));
  return it->second;
}

void PrototypeBank::set(std::uint16_t cls, std::vector<double> vector) {
  require(vector.size() == dim_, ErrorKind::Dimension, "prototype dimension mismatch");
  ensure(cls);
  auto& p = entries_[cls];
  require(!p.frozen, ErrorKind::State, "prototype " + std::to_string(cls) + " is frozen");
  p.vector = std::move(vector);
  p.initialized = true;
}

void PrototypeBank::restore(std::uint16_t cls, Prototype proto) {
  require(proto.vector.size() == dim_, ErrorKind::Dimension, "prototype dimension mismatch");
  entries_[cls] = std::move(proto);
}

void PrototypeBank::freeze(const std::vector<std::uint16_t>& classes) {
  for (auto cls : classes) {
    const auto it = entries_.find(cls);
    require(it != entries_.end() && it->second.initialized, ErrorKind::State,
            "cannot freeze uninitialized prototype " + std::to_string(cls));
  }
  for (auto cls : classes) entries_[cls].frozen = true;
}

std::vector<std::uint16_t> PrototypeBank::frozen_classes() const {
  std::vector<std::uint16_t> out;
  for (const auto& [cls, p] : entries_)
    if (p.frozen) out.push_back(cls);
  return out;
}

std::vector<std::uint16_t> PrototypeBank::initialized_classes() const {
  std::vector<std::uint16_t> out;
  for (const auto& [cls, p] : entries_)
    if (p.initialized) out.push_back(cls);
  return out;
}

bool PrototypeBank::any_initialized() const {
  for (const auto& [cls, p] : entries_)
    if (p.initialized) return true;
  return false;
}

std::uint16_t PrototypeBank::pseudo_label(std::span<const double> feature) const {
  std::optional<std::uint16_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  // entries_ is ordered by id, so strict < keeps the smallest id on ties.
  for (const auto& [cls, p] : entries_) {
    if (!p.initialized) continue;
    const double d = euclidean(feature, p.vector);
    if (!best || d < best_dist) {
      best = cls;
      best_dist = d;
    }
  }
  if (!best) fail(ErrorKind::Unavailable, "no initialized prototypes for pseudo-labeling");
  return *best;
}

std::size_t update_prototypes(PrototypeBank& protos, const FeatureBank& bank,
                              const ClusterConfig& cfg, std::size_t iteration) {
  const std::size_t m = cfg.update_period;
  const bool first = iteration == m;
  const bool periodic = iteration > m && iteration % m == 0;
  if (!first && !periodic) return 0;

  std::size_t written = 0;
  for (const auto& [cls, proto] : protos.entries()) {
    if (proto.frozen) continue;
    const auto mean = bank.mean(cls);
    if (!mean) continue;
    if (first || !proto.initialized) {
      protos.set(cls, *mean);
    } else {
      std::vector<double> next = proto.vector;
      for (std::size_t d = 0; d < next.size(); ++d)
        next[d] = cfg.momentum * next[d] + (1.0 - cfg.momentum) * (*mean)[d];
      protos.set(cls, std::move(next));
    }
    ++written;
  }
  return written;
}

}  // namespace fairseg
