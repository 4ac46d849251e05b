#include "gridsite/relaxation.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace gridsite {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kPolygonSides = 8;

std::size_t at(int i) { return static_cast<std::size_t>(i); }

}  // namespace

Relaxation::Relaxation(const DecomposedProblem& dp) : dp_(dp) {
  const MiblpProblem& pb = dp_.problem;
  base_rows_ = static_cast<int>(pb.constraints.size() + 4 * pb.bilinear.size() +
                                kPolygonSides * pb.current_limits.size() + 1);
}

std::vector<double> Relaxation::siting_objective() const {
  std::vector<double> c(dp_.problem.vars.size(), 0.0);
  for (const Term& t : dp_.problem.objective) c[at(t.var)] -= t.coef;
  return c;
}

void Relaxation::add_limit_row(LpProblem& lp, const CurrentCut& cut) const {
  const CurrentLimit& lim = dp_.problem.current_limits[at(cut.limit)];
  std::vector<std::pair<int, double>> e;
  for (const Term& t : lim.real.terms) e.push_back({t.var, cut.c * t.coef});
  for (const Term& t : lim.imag.terms) e.push_back({t.var, cut.s * t.coef});
  lp.add_row(e, -kInf, lim.rating - cut.c * lim.real.constant - cut.s * lim.imag.constant);
}

LpProblem Relaxation::build(const Box& box, const std::vector<double>& objective, double objective_floor) const {
  const MiblpProblem& pb = dp_.problem;
  LpProblem lp;
  for (std::size_t j = 0; j < pb.vars.size(); ++j) lp.add_col(box.lower[j], box.upper[j], objective[j]);

  for (const LinearConstraint& row : pb.constraints) {
    std::vector<std::pair<int, double>> e;
    e.reserve(row.terms.size());
    for (const Term& t : row.terms) e.push_back({t.var, t.coef});
    lp.add_row(e, row.lower, row.upper);
  }
  for (const BilinearTerm& b : pb.bilinear) {
    const auto cuts = mccormick_envelope(b.square(), box.lower[at(b.left)], box.upper[at(b.left)],
                                         box.lower[at(b.right)], box.upper[at(b.right)]);
    for (const EnvelopeCut& c : cuts) {
      std::vector<std::pair<int, double>> e{{b.product, c.coef_product}, {b.left, c.coef_left}};
      if (!b.square()) e.push_back({b.right, c.coef_right});
      lp.add_row(e, -kInf, c.rhs);
    }
  }
  for (std::size_t l = 0; l < pb.current_limits.size(); ++l) {
    for (int k = 0; k < kPolygonSides; ++k) {
      const double th = 2.0 * std::numbers::pi * k / kPolygonSides;
      add_limit_row(lp, {static_cast<int>(l), std::cos(th), std::sin(th)});
    }
  }
  {
    std::vector<std::pair<int, double>> e;
    for (const Term& t : pb.objective) e.push_back({t.var, t.coef});
    lp.add_row(e, objective_floor, kInf);
  }
  for (const CurrentCut& c : cuts_) add_limit_row(lp, c);
  return lp;
}

double Relaxation::max_current_violation(const std::vector<double>& point) const {
  double worst = 0.0;
  for (const CurrentLimit& lim : dp_.problem.current_limits) {
    worst = std::max(worst, std::hypot(lim.real.eval(point), lim.imag.eval(point)) - lim.rating);
  }
  return worst;
}

int Relaxation::separate(const std::vector<double>& point, double tol) {
  int added = 0;
  const auto& limits = dp_.problem.current_limits;
  for (std::size_t l = 0; l < limits.size(); ++l) {
    const double re = limits[l].real.eval(point);
    const double im = limits[l].imag.eval(point);
    const double mag = std::hypot(re, im);
    if (mag - limits[l].rating <= tol || mag == 0.0) continue;
    cuts_.push_back({static_cast<int>(l), re / mag, im / mag});
    ++added;
  }
  return added;
}

double max_bilinear_violation(const MiblpProblem& problem, const std::vector<double>& point, int* which) {
  double worst = 0.0;
  int idx = -1;
  for (std::size_t k = 0; k < problem.bilinear.size(); ++k) {
    const BilinearTerm& b = problem.bilinear[k];
    const double v = std::abs(point[at(b.product)] - point[at(b.left)] * point[at(b.right)]);
    if (v > worst) {
      worst = v;
      idx = static_cast<int>(k);
    }
  }
  if (which) *which = idx;
  return worst;
}

}  // namespace gridsite
