#pragma once

#include <cmath>
#include <string>

#include "tsvat/encoder.hpp"

namespace gradcheck {

struct Report {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  long long checked = 0;
};

/// Relative error with an absolute floor so that entries whose true gradient
/// is zero are compared absolutely.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central finite differences over every parameter entry.
inline Report compare(const tsvat::encoder::EncoderModel& model, const tsvat::Matrix& window,
                      const tsvat::encoder::Patches& target,
                      const tsvat::encoder::MaskSpec* mask, tsvat::encoder::Loss loss,
                      double h = 1e-4) {
  using namespace tsvat::encoder;
  const auto analytic = gradients(model, window, target, mask, loss);
  EncoderModel probe = model;
  Report report;
  std::vector<std::pair<std::string, tsvat::Matrix*>> slots;
  probe.params.for_each([&](const std::string& name, tsvat::Matrix& m) { slots.emplace_back(name, &m); });
  std::vector<const tsvat::Matrix*> grads;
  analytic.grads.for_each([&](const std::string&, const tsvat::Matrix& m) { grads.push_back(&m); });
  for (std::size_t s = 0; s < slots.size(); ++s) {
    tsvat::Matrix& m = *slots[s].second;
    for (tsvat::Index i = 0; i < m.size(); ++i) {
      const double original = m.data()[i];
      m.data()[i] = original + h;
      const double up = loss_value(probe, window, target, mask, loss);
      m.data()[i] = original - h;
      const double down = loss_value(probe, window, target, mask, loss);
      m.data()[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(grads[s]->data()[i], numeric);
      ++report.checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = slots[s].first + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace gradcheck
