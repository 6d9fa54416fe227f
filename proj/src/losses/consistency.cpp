#include <cmath>
#include <tuple>

#include "fairseg/error.hpp"
#include "fairseg/losses.hpp"
#include "fairseg/numerics.hpp"

namespace fairseg {

void ConsConfig::validate() const {
  require(sigma1 > 0.0 && sigma2 > 0.0, ErrorKind::Config, "cons sigmas must be positive");
  require(window % 2 == 1 && window >= 3, ErrorKind::Config, "cons window must be odd and >= 3");
}

GradSlot cons_loss(const Grid& image, const Grid& probs, const ConsConfig& cfg) {
  cfg.validate();
  require(image.height() == probs.height() && image.width() == probs.width(),
          ErrorKind::Dimension, "cons_loss: image and probs differ in size");
  const std::size_t h = image.height(), w = image.width();
  const std::size_t k = probs.channels(), ch = image.channels();
  const auto r = static_cast<std::ptrdiff_t>(cfg.window / 2);
  const double color_scale = 1.0 / (2.0 * cfg.sigma1 * cfg.sigma1);
  const double pred_scale = 1.0 / (2.0 * cfg.sigma2 * cfg.sigma2);

  GradSlot slot;
  auto& grad = slot.grads["probs"];
  grad.assign(probs.size(), 0.0);
  CompensatedSum total;
  std::size_t pairs = 0;

  // Ordered pairs (p, q), q != p inside the window; each unordered pair is
  // visited twice with identical terms.
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t p = y * w + x;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
          const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) ||
              nx >= static_cast<std::ptrdiff_t>(w))
            continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx);
          double dcolor = 0.0;
          for (std::size_t c = 0; c < ch; ++c) {
            const double d = image.data()[p * ch + c] - image.data()[q * ch + c];
            dcolor += d * d;
          }
          double dpred = 0.0;
          for (std::size_t c = 0; c < k; ++c) {
            const double d = probs.data()[p * k + c] - probs.data()[q * k + c];
            dpred += d * d;
          }
          ++pairs;
          if (cfg.literal) {
            const double term = std::exp(-dcolor * color_scale - dpred * pred_scale);
            total.add(term);
            const double coef = -term * 2.0 * pred_scale;
            for (std::size_t c = 0; c < k; ++c) {
              const double d = probs.data()[p * k + c] - probs.data()[q * k + c];
              grad[p * k + c] += coef * d;
              grad[q * k + c] -= coef * d;
            }
          } else {
            const double weight = std::exp(-dcolor * color_scale);
            total.add(weight * dpred);
            for (std::size_t c = 0; c < k; ++c) {
              const double d = probs.data()[p * k + c] - probs.data()[q * k + c];
              grad[p * k + c] += 2.0 * weight * d;
              grad[q * k + c] -= 2.0 * weight * d;
            }
          }
        }
    }
  if (pairs == 0) return slot;
  const double inv = 1.0 / static_cast<double>(pairs);
  std::tie(slot.value, slot.value_residual) = total.divided_by(static_cast<double>(pairs));
  for (double& g : grad) g *= inv;
  return slot;
}

GradSlot cons_loss_from_logits(const Grid& image, const Grid& logits, const ConsConfig& cfg) {
  Grid probs(logits.height(), logits.width(), logits.channels());
  for (std::size_t i = 0; i < logits.pixels(); ++i) softmax_into(logits.pixel(i), probs.pixel(i));
  GradSlot inner = cons_loss(image, probs, cfg);
  GradSlot out;
  out.value = inner.value;
  out.value_residual = inner.value_residual;
  auto& dlogits = out.grads["logits"];
  dlogits.assign(logits.size(), 0.0);
  const auto& dprobs = inner.grads.at("probs");
  const std::size_t k = logits.channels();
  for (std::size_t i = 0; i < logits.pixels(); ++i)
    softmax_backward(probs.pixel(i), std::span<const double>(dprobs.data() + i * k, k),
                     std::span<double>(dlogits.data() + i * k, k));
  return out;
}

}  // namespace fairseg
