#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace fairseg {

struct ClusterConfig {
  double margin = 10.0;          // hinge margin between a feature and foreign prototypes
  double momentum = 0.99;        // prototype momentum
  std::size_t update_period = 50;  // iterations between prototype refreshes
  std::size_t bank_capacity = 500;
  std::size_t deposits_per_class = 32;  // per image and present class

  void validate() const;
};

// Bounded FIFO of feature vectors per class.
class FeatureBank {
 public:
  FeatureBank(std::size_t dim, std::size_t capacity);

  void deposit(std::uint16_t cls, std::span<const double> feature);
  std::size_t size(std::uint16_t cls) const;
  std::optional<std::vector<double>> mean(std::uint16_t cls) const;
  const std::deque<std::vector<double>>* queue(std::uint16_t cls) const;
  std::vector<std::uint16_t> classes() const;
  void clear() { queues_.clear(); }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t capacity() const noexcept { return capacity_; }

  friend bool operator==(const FeatureBank&, const FeatureBank&) = default;

 private:
  std::size_t dim_;
  std::size_t capacity_;
  std::map<std::uint16_t, std::deque<std::vector<double>>> queues_;
};

struct Prototype {
  std::vector<double> vector;
  bool frozen = false;
  bool initialized = false;

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

// One prototype per known class plus the unknown cluster at id 0.
class PrototypeBank {
 public:
  static constexpr std::uint16_t kUnknown = 0;

  explicit PrototypeBank(std::size_t dim) : dim_(dim) {}

  // Registers a class (uninitialized, active) if it is not present yet.
  void ensure(std::uint16_t cls);
  bool contains(std::uint16_t cls) const { return entries_.count(cls) != 0; }
  const Prototype& at(std::uint16_t cls) const;
  void set(std::uint16_t cls, std::vector<double> vector);
  // Direct state restore (checkpoint loading, fixtures).
  void restore(std::uint16_t cls, Prototype proto);

  // Marks classes frozen; fails with State for uninitialized prototypes.
  void freeze(const std::vector<std::uint16_t>& classes);
  std::vector<std::uint16_t> frozen_classes() const;
  std::vector<std::uint16_t> initialized_classes() const;
  bool any_initialized() const;

  // Nearest initialized prototype by Euclidean distance, ties to the smallest id.
  // Throws Unavailable when nothing is initialized.
  std::uint16_t pseudo_label(std::span<const double> feature) const;

  std::size_t dim() const noexcept { return dim_; }
  const std::map<std::uint16_t, Prototype>& entries() const noexcept { return entries_; }

  friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

 private:
  std::size_t dim_;
  std::map<std::uint16_t, Prototype> entries_;
};

// Periodic refresh with the step-local iteration counter (1-based):
// at i == M every active prototype is reset to its bank mean; at i > M with
// i % M == 0 it moves by momentum towards the bank mean. Frozen prototypes and
// empty banks are skipped. Returns the number of prototypes written.
std::size_t update_prototypes(PrototypeBank& protos, const FeatureBank& bank,
                              const ClusterConfig& cfg, std::size_t iteration);

}  // namespace fairseg
