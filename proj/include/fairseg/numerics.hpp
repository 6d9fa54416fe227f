#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace fairseg {

double euclidean(std::span<const double> a, std::span<const double> b);

// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);

// Pulls a gradient w.r.t. softmax outputs back to the logits:
// dlogit_k = p_k * (dp_k - sum_j p_j dp_j).
void softmax_backward(std::span<const double> probs, std::span<const double> dprobs,
                      std::span<double> dlogits);

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }
  // (hi, lo) with hi = fl(sum / divisor) and lo the remaining low-order part.
  std::pair<double, double> divided_by(double divisor) const;

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace fairseg
