#pragma once

#include <cmath>

namespace pflab {

/// Neumaier-compensated accumulator. add_product feeds the exact product
/// a*b (rounded value plus its fma residual) so that weighted sums of tail
/// probabilities cancel exactly when they should.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  void add_product(double a, double b) {
    const double p = a * b;
    add(p);
    add(std::fma(a, b, -p));
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace pflab
