#pragma once

#include <vector>

#include "gridsite/lp.hpp"
#include "gridsite/miblp.hpp"

namespace gridsite {

/// Tangent cut of one transformer disk: c * I_real + s * I_imag <= rating.
struct CurrentCut {
  int limit = -1;
  double c = 1.0;
  double s = 0.0;
};

/// Linear relaxation of a decomposed problem over a box. Row layout is fixed for a given cut
/// count: linear rows, four envelope rows per bilinear term, an octagon per current limit, one
/// objective-cut row, then the appended tangent cuts.
class Relaxation {
 public:
  explicit Relaxation(const DecomposedProblem& dp);

  /// Relaxation with x, z continuous. `objective` is minimized; `objective_floor` bounds the
  /// siting objective sum(w z) from below (use -inf to disable).
  LpProblem build(const Box& box, const std::vector<double>& objective, double objective_floor) const;

  /// Minimize -sum(w z).
  std::vector<double> siting_objective() const;

  /// Adds tangent cuts for every current limit violated by more than `tol` at `point`; returns how many.
  int separate(const std::vector<double>& point, double tol);

  double max_current_violation(const std::vector<double>& point) const;

  const std::vector<CurrentCut>& cuts() const { return cuts_; }
  const DecomposedProblem& problem() const { return dp_; }
  int num_base_rows() const { return base_rows_; }

 private:
  const DecomposedProblem& dp_;
  std::vector<CurrentCut> cuts_;
  int base_rows_ = 0;

  void add_limit_row(LpProblem& lp, const CurrentCut& cut) const;
};

/// Largest |s - v1 v2| over the bilinear registry and the index of that term (-1 when none).
double max_bilinear_violation(const MiblpProblem& problem, const std::vector<double>& point, int* which = nullptr);

}  // namespace gridsite
