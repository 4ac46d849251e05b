#include "gridsite/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "gridsite/error.hpp"

namespace gridsite {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBig = 1e7;  // stand-in for an infinite bound
constexpr double kPivotTol = 1e-9;
constexpr double kSafePivot = 1e-7;  // smaller pivots force a refactorization first

std::size_t at(int i) { return static_cast<std::size_t>(i); }

struct Breakpoint {
  int j;
  double ratio;
  double a;  // |alpha_j|
};

class DualSimplex {
 public:
  DualSimplex(const LpProblem& p, const LpOptions& o) : prob_(p), opt_(o) {}

  LpResult run(const LpBasis* warm) {
    LpResult res;
    if (!setup(res)) return res;
    const bool warm_ok = warm && install_warm(*warm) && factor();
    if (!warm_ok) {
      slack_basis();
      if (!factor()) {
        res.status = LpStatus::Numerical;
        return res;
      }
    }
    if (warm_ok) {
      // A warm basis that is still primal feasible (objective change only) goes to the primal.
      compute_primal();
      if (primal_infeasibility() <= opt_.primal_tol && primal_iterate(res.iterations)) {
        res.status = LpStatus::Optimal;
        finish(res);
        return res;
      }
    }
    dual_phase(res);
    return res;
  }

  // Same rows and bounds, objective taken again from the problem; continues from the last basis.
  LpResult resolve() {
    if (!ready_) return run(nullptr);
    LpResult res;
    for (int j = 0; j < n_; ++j) cost_[at(j)] = prob_.cost[at(j)];
    cost0_ = cost_;
    perturbed_ = false;
    perturb_rounds_ = 0;
    compute_primal();
    if (primal_infeasibility() <= opt_.primal_tol && primal_iterate(res.iterations)) {
      res.status = LpStatus::Optimal;
      finish(res);
      return res;
    }
    dual_phase(res);
    return res;
  }

 private:
  void dual_phase(LpResult& res) {
    compute_duals();
    if (opt_.perturb) perturb();
    make_dual_feasible();
    compute_primal();
    res.status = iterate(res.iterations);
    finish(res);
  }

  const LpProblem& prob_;
  LpOptions opt_;
  int m_ = 0, n_ = 0;
  std::vector<int> cs_, ci_;
  std::vector<double> cv_;
  std::vector<double> scale_;
  std::vector<double> lo_, up_, cost_, cost0_;
  std::vector<char> artificial_;
  std::vector<int> rs_, rj_;
  std::vector<double> rv_;
  std::vector<int> S_, R_, spos_, rpos_;
  int k_ = 0;
  std::vector<char> at_upper_;
  std::vector<double> x_, d_;
  Eigen::MatrixXd M_;
  bool perturbed_ = false;
  int perturb_rounds_ = 0;
  bool ready_ = false;  // factorization and basis valid for a resolve

  int total() const { return n_ + m_; }
  bool fixed(int j) const { return lo_[at(j)] == up_[at(j)]; }

  bool setup(LpResult& res) {
    perturb_rounds_ = 0;
    n_ = prob_.num_cols();
    m_ = prob_.num_rows();
    lo_.assign(at(total()), 0.0);
    up_.assign(at(total()), 0.0);
    cost_.assign(at(total()), 0.0);
    artificial_.assign(at(total()), 0);
    for (int j = 0; j < n_; ++j) {
      double l = prob_.col_lower[at(j)], u = prob_.col_upper[at(j)];
      if (l > u) {
        res.status = LpStatus::Infeasible;
        return false;
      }
      if (l == -kInf) l = -kBig, artificial_[at(j)] = 1;
      if (u == kInf) u = kBig, artificial_[at(j)] = 1;
      lo_[at(j)] = l;
      up_[at(j)] = u;
      cost_[at(j)] = prob_.cost[at(j)];
    }

    // Row-scaled matrix in column form; duplicates merged.
    std::vector<std::map<int, double>> merged(at(m_));
    scale_.assign(at(m_), 1.0);
    for (int i = 0; i < m_; ++i) {
      for (const auto& [j, a] : prob_.rows[at(i)]) {
        if (j < 0 || j >= n_ || !std::isfinite(a)) throw Error(ErrorKind::Degenerate, "LP row has an invalid entry");
        merged[at(i)][j] += a;
      }
      double mx = 0.0;
      for (const auto& [j, a] : merged[at(i)]) mx = std::max(mx, std::abs(a));
      if (mx > 0.0) scale_[at(i)] = 1.0 / mx;
    }
    std::vector<std::vector<std::pair<int, double>>> cols(at(n_));
    for (int i = 0; i < m_; ++i) {
      double amin = 0.0, amax = 0.0;
      for (const auto& [j, a0] : merged[at(i)]) {
        if (a0 == 0.0) continue;
        const double a = a0 * scale_[at(i)];
        cols[at(j)].push_back({i, a});
        amin += std::min(a * lo_[at(j)], a * up_[at(j)]);
        amax += std::max(a * lo_[at(j)], a * up_[at(j)]);
      }
      double l = prob_.row_lower[at(i)], u = prob_.row_upper[at(i)];
      if (l > u) {
        res.status = LpStatus::Infeasible;
        return false;
      }
      const int r = n_ + i;
      lo_[at(r)] = l == -kInf ? amin - 1.0 : l * scale_[at(i)];
      up_[at(r)] = u == kInf ? amax + 1.0 : u * scale_[at(i)];
    }
    cs_.assign(at(n_ + 1), 0);
    ci_.clear();
    cv_.clear();
    for (int j = 0; j < n_; ++j) {
      for (const auto& [i, a] : cols[at(j)]) {
        ci_.push_back(i);
        cv_.push_back(a);
      }
      cs_[at(j + 1)] = static_cast<int>(ci_.size());
    }
    rs_.assign(at(m_ + 1), 0);
    rj_.clear();
    rv_.clear();
    for (int i = 0; i < m_; ++i) {
      for (const auto& [j, a0] : merged[at(i)]) {
        if (a0 == 0.0) continue;
        rj_.push_back(j);
        rv_.push_back(a0 * scale_[at(i)]);
      }
      rs_[at(i + 1)] = static_cast<int>(rj_.size());
    }
    cost0_ = cost_;
    return true;
  }

  void slack_basis() {
    at_upper_.assign(at(total()), 0);
    for (int j = 0; j < n_; ++j) at_upper_[at(j)] = cost_[at(j)] < 0.0 ? 1 : 0;
    spos_.assign(at(n_), -1);
    rpos_.assign(at(m_), -1);
  }

  bool install_warm(const LpBasis& b) {
    if (static_cast<int>(b.cols.size()) != n_ || static_cast<int>(b.rows.size()) > m_) return false;
    at_upper_.assign(at(total()), 0);
    spos_.assign(at(n_), -1);
    rpos_.assign(at(m_), -1);
    int ns = 0, nr = 0;
    for (int j = 0; j < n_; ++j) {
      const BasisStatus s = b.cols[at(j)];
      if (s == BasisStatus::Basic) {
        spos_[at(j)] = 0;
        ++ns;
      }
      at_upper_[at(j)] = s == BasisStatus::AtUpper ? 1 : 0;
    }
    for (int i = 0; i < static_cast<int>(b.rows.size()); ++i) {
      const BasisStatus s = b.rows[at(i)];
      if (s != BasisStatus::Basic) {
        rpos_[at(i)] = 0;
        ++nr;
      }
      at_upper_[at(n_ + i)] = s == BasisStatus::AtUpper ? 1 : 0;
    }
    return ns == nr;
  }

  bool basic(int j) const { return j < n_ ? spos_[at(j)] >= 0 : rpos_[at(j - n_)] < 0; }

  // Inverse of A_RS: rows R carry nonbasic logicals, columns S are the basic structurals. The
  // basic logicals of the remaining rows follow from row activities and need no storage.
  bool factor() {
    S_.clear();
    R_.clear();
    for (int j = 0; j < n_; ++j) {
      if (spos_[at(j)] >= 0) {
        spos_[at(j)] = static_cast<int>(S_.size());
        S_.push_back(j);
      }
    }
    for (int i = 0; i < m_; ++i) {
      if (rpos_[at(i)] >= 0) {
        rpos_[at(i)] = static_cast<int>(R_.size());
        R_.push_back(i);
      }
    }
    k_ = static_cast<int>(S_.size());
    if (k_ != static_cast<int>(R_.size())) return false;
    const int cap = std::min(n_, m_);
    if (M_.rows() != cap) M_.resize(cap, cap);
    if (k_ == 0) return true;
    Eigen::MatrixXd ars = Eigen::MatrixXd::Zero(k_, k_);
    for (int c = 0; c < k_; ++c) {
      const int j = S_[at(c)];
      for (int e = cs_[at(j)]; e < cs_[at(j + 1)]; ++e) {
        const int r = rpos_[at(ci_[at(e)])];
        if (r >= 0) ars(r, c) = cv_[at(e)];
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ars);
    if (lu.rcond() > 1e-12) {
      M_.topLeftCorner(k_, k_) = lu.inverse();
      if (M_.topLeftCorner(k_, k_).allFinite()) return true;
    }
    return repair(ars) && factor();
  }

  // Drops the dependent structurals of A_RS and makes the logicals of the uncovered rows basic.
  bool repair(const Eigen::MatrixXd& ars) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ars);
    lu.setThreshold(1e-10);
    const int r = static_cast<int>(lu.rank());
    if (r == k_) return false;
    std::vector<int> keep_col;
    for (int t = 0; t < r; ++t) keep_col.push_back(lu.permutationQ().indices()(t));
    Eigen::MatrixXd sub(k_, r);
    for (int t = 0; t < r; ++t) sub.col(t) = ars.col(keep_col[at(t)]);
    Eigen::FullPivLU<Eigen::MatrixXd> rows_lu(sub.transpose());
    std::vector<char> col_ok(at(k_), 0), row_ok(at(k_), 0);
    for (int c : keep_col) col_ok[at(c)] = 1;
    for (int t = 0; t < r; ++t) row_ok[at(rows_lu.permutationQ().indices()(t))] = 1;
    for (int c = 0; c < k_; ++c) {
      if (col_ok[at(c)]) continue;
      const int j = S_[at(c)];
      spos_[at(j)] = -1;
      const double v = x_.empty() ? lo_[at(j)] : x_[at(j)];
      at_upper_[at(j)] = up_[at(j)] - v < v - lo_[at(j)] ? 1 : 0;
    }
    for (int t = 0; t < k_; ++t) {
      if (!row_ok[at(t)]) rpos_[at(R_[at(t)])] = -1;
    }
    return true;
  }

  double nonbasic_value(int j) const { return at_upper_[at(j)] ? up_[at(j)] : lo_[at(j)]; }

  void compute_primal() {
    x_.assign(at(total()), 0.0);
    std::vector<double> act(at(m_), 0.0);
    for (int j = 0; j < n_; ++j) {
      if (spos_[at(j)] >= 0) continue;
      const double v = nonbasic_value(j);
      x_[at(j)] = v;
      if (v == 0.0) continue;
      for (int e = cs_[at(j)]; e < cs_[at(j + 1)]; ++e) act[at(ci_[at(e)])] += cv_[at(e)] * v;
    }
    Eigen::VectorXd rhs(k_);
    for (int r = 0; r < k_; ++r) {
      const int i = R_[at(r)];
      x_[at(n_ + i)] = nonbasic_value(n_ + i);
      rhs(r) = x_[at(n_ + i)] - act[at(i)];
    }
    const Eigen::VectorXd xs = M_.topLeftCorner(k_, k_) * rhs;
    for (int c = 0; c < k_; ++c) {
      const int j = S_[at(c)];
      x_[at(j)] = xs(c);
      for (int e = cs_[at(j)]; e < cs_[at(j + 1)]; ++e) act[at(ci_[at(e)])] += cv_[at(e)] * xs(c);
    }
    for (int i = 0; i < m_; ++i) {
      if (rpos_[at(i)] < 0) x_[at(n_ + i)] = act[at(i)];
    }
  }

  void compute_duals() {
    Eigen::VectorXd cb(k_);
    for (int c = 0; c < k_; ++c) cb(c) = cost_[at(S_[at(c)])];
    const Eigen::VectorXd yr = M_.topLeftCorner(k_, k_).transpose() * cb;
    std::vector<double> y(at(m_), 0.0);
    for (int r = 0; r < k_; ++r) y[at(R_[at(r)])] = yr(r);
    d_.assign(at(total()), 0.0);
    for (int j = 0; j < n_; ++j) {
      if (spos_[at(j)] >= 0) continue;
      double v = cost_[at(j)];
      for (int e = cs_[at(j)]; e < cs_[at(j + 1)]; ++e) v -= cv_[at(e)] * y[at(ci_[at(e)])];
      d_[at(j)] = v;
    }
    for (int i = 0; i < m_; ++i) {
      if (rpos_[at(i)] >= 0) d_[at(n_ + i)] = y[at(i)];
    }
  }

  // Moves every dual-infeasible nonbasic variable to its other bound.
  int make_dual_feasible() {
    int flips = 0;
    for (int j = 0; j < total(); ++j) {
      if (basic(j) || fixed(j)) continue;
      if (!at_upper_[at(j)] && d_[at(j)] < -opt_.dual_tol) {
        at_upper_[at(j)] = 1;
        ++flips;
      } else if (at_upper_[at(j)] && d_[at(j)] > opt_.dual_tol) {
        at_upper_[at(j)] = 0;
        ++flips;
      }
    }
    return flips;
  }

  void perturb() {
    std::mt19937 rng(12345u + static_cast<unsigned>(perturb_rounds_));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double cmax = 0.0;
    for (int j = 0; j < n_; ++j) cmax = std::max(cmax, std::abs(cost_[at(j)]));
    const double base = 1e-7 * std::pow(10.0, perturb_rounds_++) * std::max(1.0, cmax);
    for (int j = 0; j < n_; ++j) {
      if (fixed(j)) continue;
      const double xi = base * (1.0 + u(rng));
      double sign;
      if (basic(j)) {
        sign = u(rng) < 0.5 ? -1.0 : 1.0;
      } else {
        sign = at_upper_[at(j)] ? -1.0 : 1.0;
      }
      cost_[at(j)] += sign * xi;
    }
    perturbed_ = true;
    compute_duals();
  }

  void refactor_or_throw() {
    if (!factor()) throw Error(ErrorKind::Numerical, "simplex basis became singular");
    compute_duals();
    make_dual_feasible();
    compute_primal();
  }

  double primal_infeasibility() const {
    double worst = 0.0;
    for (int j = 0; j < total(); ++j) {
      if (basic(j)) worst = std::max({worst, lo_[at(j)] - x_[at(j)], x_[at(j)] - up_[at(j)]});
    }
    return worst;
  }

  // B^-1 a_q: `w` on the S positions, `col` on the rows of basic logicals.
  void entering_column(int q, Eigen::VectorXd& w, std::vector<double>& col) {
    std::fill(col.begin(), col.end(), 0.0);
    if (q < n_) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(k_);
      for (int e = cs_[at(q)]; e < cs_[at(q + 1)]; ++e) {
        const int r = rpos_[at(ci_[at(e)])];
        if (r >= 0) u(r) = cv_[at(e)];
        col[at(ci_[at(e)])] -= cv_[at(e)];
      }
      w.noalias() = M_.topLeftCorner(k_, k_) * u;
    } else {
      w = -M_.col(rpos_[at(q - n_)]).head(k_);
    }
    for (int c = 0; c < k_; ++c) {
      if (w(c) == 0.0) continue;
      const int j = S_[at(c)];
      for (int e = cs_[at(j)]; e < cs_[at(j + 1)]; ++e) col[at(ci_[at(e)])] += cv_[at(e)] * w(c);
    }
  }

  // Bounded primal simplex from a feasible basis. False when it gives up (cycling, lost
  // feasibility, numerical trouble); the caller then runs the dual from wherever this stopped.
  bool primal_iterate(int& iters) {
    compute_duals();
    std::vector<double> col(at(m_));
    Eigen::VectorXd w, z;
    const int cap = iters + 20 * (m_ + n_);
    bool fresh = true;
    int since_refactor = 0;
    while (true) {
      if (iters >= std::min(cap, opt_.max_iterations)) return false;
      int q = -1;
      double best = opt_.dual_tol;
      for (int j = 0; j < total(); ++j) {
        if (basic(j) || fixed(j)) continue;
        const double g = at_upper_[at(j)] ? d_[at(j)] : -d_[at(j)];
        if (g > best) {
          best = g;
          q = j;
        }
      }
      if (q < 0) {
        if (fresh) return primal_infeasibility() <= opt_.primal_tol;
        if (!factor()) return false;
        compute_primal();
        compute_duals();
        fresh = true;
        since_refactor = 0;
        if (primal_infeasibility() > opt_.primal_tol) return false;
        continue;
      }
      const double dir = at_upper_[at(q)] ? -1.0 : 1.0;
      entering_column(q, w, col);

      // Harris ratio test; basic x moves by -t * dir * alpha.
      auto rate_of = [&](int v) { return v < n_ ? -dir * w(spos_[at(v)]) : -dir * col[at(v - n_)]; };
      auto bound_gap = [&](int v, double rate, double slack) {
        return rate < 0 ? (x_[at(v)] - lo_[at(v)] + slack) / -rate : (up_[at(v)] - x_[at(v)] + slack) / rate;
      };
      double tmax = up_[at(q)] - lo_[at(q)];
      auto pass1 = [&](int v) {
        const double r = rate_of(v);
        if (std::abs(r) > kPivotTol) tmax = std::min(tmax, bound_gap(v, r, opt_.primal_tol));
      };
      for (int c = 0; c < k_; ++c) pass1(S_[at(c)]);
      for (int i = 0; i < m_; ++i) {
        if (rpos_[at(i)] < 0) pass1(n_ + i);
      }
      int vp = -1;
      double big = 0.0, step = up_[at(q)] - lo_[at(q)];
      auto pass2 = [&](int v) {
        const double r = rate_of(v);
        if (std::abs(r) <= kPivotTol) return;
        const double t = bound_gap(v, r, 0.0);
        if (t <= tmax && std::abs(r) > big) {
          big = std::abs(r);
          vp = v;
          step = std::max(0.0, t);
        }
      };
      if (tmax < up_[at(q)] - lo_[at(q)]) {
        for (int c = 0; c < k_; ++c) pass2(S_[at(c)]);
        for (int i = 0; i < m_; ++i) {
          if (rpos_[at(i)] < 0) pass2(n_ + i);
        }
      }
      if (vp < 0 && step >= kBig) return false;

      for (int c = 0; c < k_; ++c) x_[at(S_[at(c)])] -= step * dir * w(c);
      for (int i = 0; i < m_; ++i) {
        if (rpos_[at(i)] < 0) x_[at(n_ + i)] -= step * dir * col[at(i)];
      }
      ++iters;
      if (vp < 0) {
        // Bound flip of the entering variable.
        at_upper_[at(q)] = dir > 0 ? 1 : 0;
        x_[at(q)] = nonbasic_value(q);
        continue;
      }
      const double pivot = vp < n_ ? w(spos_[at(vp)]) : col[at(vp - n_)];
      if (std::abs(pivot) < kSafePivot) {
        if (fresh) return false;
        if (!factor()) return false;
        compute_primal();
        compute_duals();
        fresh = true;
        since_refactor = 0;
        continue;
      }
      x_[at(q)] += step * dir;
      const bool to_upper = rate_of(vp) > 0;
      x_[at(vp)] = to_upper ? up_[at(vp)] : lo_[at(vp)];
      at_upper_[at(vp)] = to_upper ? 1 : 0;
      if (vp >= n_) row_times_inverse(vp - n_, z);
      update_inverse(vp, q, w, z, pivot);
      fresh = false;
      if (++since_refactor >= opt_.refactor_every) {
        if (!factor()) return false;
        compute_primal();
        fresh = true;
        since_refactor = 0;
      }
      compute_duals();
    }
  }

  // z' = a_{i,S} M over the R positions.
  void row_times_inverse(int i, Eigen::VectorXd& z) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(k_);
    for (int e = rs_[at(i)]; e < rs_[at(i + 1)]; ++e) {
      const int c = spos_[at(rj_[at(e)])];
      if (c >= 0) a(c) = rv_[at(e)];
    }
    z.noalias() = M_.topLeftCorner(k_, k_).transpose() * a;
  }

  LpStatus iterate(int& iters) {
    std::vector<double> rho(at(m_));
    std::vector<double> alpha(at(total()));
    std::vector<double> alpha_l(at(m_));
    std::vector<Breakpoint> cands;
    int unperturbed_since = iters;
    Eigen::VectorXd z, w;
    bool fresh = true;  // factorization just rebuilt
    int since_refactor = 0;
    while (true) {
      if (iters >= opt_.max_iterations) return LpStatus::IterationLimit;
      // Stalling without perturbation (degenerate cycling): perturb again, a little harder.
      if (!perturbed_ && iters - unperturbed_since > 10 * (m_ + n_) && perturb_rounds_ < 4) {
        perturb();
        make_dual_feasible();
        compute_primal();
      }
      if (perturbed_) unperturbed_since = iters;

      // Leaving variable: largest primal infeasibility.
      int vp = -1;
      double worst = opt_.primal_tol;
      auto consider = [&](int v) {
        const double inf = std::max(lo_[at(v)] - x_[at(v)], x_[at(v)] - up_[at(v)]);
        if (inf > worst) {
          worst = inf;
          vp = v;
        }
      };
      for (int c = 0; c < k_; ++c) consider(S_[at(c)]);
      for (int i = 0; i < m_; ++i) {
        if (rpos_[at(i)] < 0) consider(n_ + i);
      }
      if (vp < 0) {
        if (!fresh) {
          refactor_or_throw();
          fresh = true;
          since_refactor = 0;
          continue;
        }
        if (perturbed_) {
          cost_ = cost0_;
          perturbed_ = false;
          compute_duals();
          if (make_dual_feasible() > 0) {
            compute_primal();
            continue;
          }
        }
        return LpStatus::Optimal;
      }

      const double s = x_[at(vp)] < lo_[at(vp)] ? 1.0 : -1.0;
      std::fill(rho.begin(), rho.end(), 0.0);
      if (vp < n_) {
        const int c = spos_[at(vp)];
        for (int r = 0; r < k_; ++r) rho[at(R_[at(r)])] = M_(c, r);
      } else {
        row_times_inverse(vp - n_, z);
        for (int r = 0; r < k_; ++r) rho[at(R_[at(r)])] = z(r);
        rho[at(vp - n_)] = -1.0;
      }

      for (int j = 0; j < n_; ++j) {
        if (spos_[at(j)] >= 0) {
          alpha[at(j)] = 0.0;
          continue;
        }
        double v = 0.0;
        for (int e = cs_[at(j)]; e < cs_[at(j + 1)]; ++e) v += rho[at(ci_[at(e)])] * cv_[at(e)];
        alpha[at(j)] = v;
      }
      for (int i = 0; i < m_; ++i) alpha[at(n_ + i)] = rpos_[at(i)] >= 0 ? -rho[at(i)] : 0.0;

      // Bound-flipping ratio test: breakpoints are passed while the leaving infeasibility still
      // pays for flipping the boxed variable behind them.
      cands.clear();
      for (int j = 0; j < total(); ++j) {
        if (basic(j) || fixed(j)) continue;
        const double sa = s * alpha[at(j)];
        if (!at_upper_[at(j)] && sa < -kPivotTol) {
          cands.push_back({j, std::max(0.0, d_[at(j)] / -sa), -sa});
        } else if (at_upper_[at(j)] && sa > kPivotTol) {
          cands.push_back({j, std::max(0.0, -d_[at(j)] / sa), sa});
        }
      }
      std::sort(cands.begin(), cands.end(), [](const Breakpoint& l, const Breakpoint& r) { return l.ratio < r.ratio; });
      std::size_t passed = 0;
      for (double slope = worst; passed < cands.size(); ++passed) {
        const Breakpoint& c = cands[passed];
        slope -= c.a * (up_[at(c.j)] - lo_[at(c.j)]);
        if (slope <= opt_.primal_tol) break;
      }
      int q = -1;
      double best = 0.0;
      double step = 0.0;
      if (passed < cands.size()) {
        double tmax = kInf;
        for (std::size_t t = passed; t < cands.size(); ++t) tmax = std::min(tmax, cands[t].ratio + opt_.dual_tol / cands[t].a);
        for (std::size_t t = passed; t < cands.size() && cands[t].ratio <= tmax; ++t) {
          if (cands[t].a > best) {
            best = cands[t].a;
            q = cands[t].j;
            step = cands[t].ratio;
          }
        }
      }
      if (q < 0 || (best < kSafePivot && !fresh)) {
        if (!fresh) {
          refactor_or_throw();
          fresh = true;
          since_refactor = 0;
          continue;
        }
        return LpStatus::Infeasible;
      }

      entering_column(q, w, alpha_l);
      const double pivot = vp < n_ ? w(spos_[at(vp)]) : alpha_l[at(vp - n_)];
      if (std::abs(pivot - alpha[at(q)]) > 1e-7 * (1.0 + std::abs(pivot)) || std::abs(pivot) < kPivotTol) {
        if (!fresh) {
          refactor_or_throw();
          fresh = true;
          since_refactor = 0;
          continue;
        }
        if (std::abs(pivot) < kPivotTol) return LpStatus::Numerical;
      }

      if (passed > 0) {
        for (std::size_t t = 0; t < passed; ++t) at_upper_[at(cands[t].j)] ^= 1;
        compute_primal();
      }

      // Dual update.
      for (int j = 0; j < total(); ++j) {
        if (!basic(j)) d_[at(j)] += s * step * alpha[at(j)];
      }
      d_[at(vp)] = s * step;
      d_[at(q)] = 0.0;

      // Primal update: leaving variable lands on the violated bound.
      const double bound = s > 0 ? lo_[at(vp)] : up_[at(vp)];
      const double delta = (x_[at(vp)] - bound) / pivot;
      for (int c = 0; c < k_; ++c) x_[at(S_[at(c)])] -= delta * w(c);
      for (int i = 0; i < m_; ++i) {
        if (rpos_[at(i)] < 0) x_[at(n_ + i)] -= delta * alpha_l[at(i)];
      }
      x_[at(q)] += delta;
      x_[at(vp)] = bound;
      at_upper_[at(vp)] = s < 0 ? 1 : 0;

      update_inverse(vp, q, w, z, pivot);

      ++iters;
      fresh = false;
      if (++since_refactor >= opt_.refactor_every) {
        refactor_or_throw();
        fresh = true;
        since_refactor = 0;
      }
    }
  }

  // Basis change vp -> q. `w` is M times the entering column on R, `z` is a_{i,S} M when vp is the
  // logical of row i.
  void update_inverse(int vp, int q, const Eigen::VectorXd& w, const Eigen::VectorXd& z, double pivot) {
    auto M = M_.topLeftCorner(k_, k_);
    if (vp < n_ && q < n_) {
      const int c = spos_[at(vp)];
      const Eigen::RowVectorXd prow = M.row(c) / w(c);
      M.noalias() -= w * prow;
      M.row(c) = prow;
      S_[at(c)] = q;
      spos_[at(q)] = c;
      spos_[at(vp)] = -1;
    } else if (vp >= n_ && q < n_) {
      // Border with row i and column q.
      const int i = vp - n_;
      const double sc = -pivot;
      M.noalias() += w * z.transpose() / sc;
      M_.col(k_).head(k_) = -w / sc;
      M_.row(k_).head(k_) = -z.transpose() / sc;
      M_(k_, k_) = 1.0 / sc;
      S_.push_back(q);
      R_.push_back(i);
      spos_[at(q)] = k_;
      rpos_[at(i)] = k_;
      ++k_;
    } else if (vp < n_) {
      // Drop column vp and row of q.
      const int c = spos_[at(vp)];
      const int r = rpos_[at(q - n_)];
      const int last = k_ - 1;
      if (c != last) {
        M_.row(c).head(k_).swap(M_.row(last).head(k_));
        S_[at(c)] = S_[at(last)];
        spos_[at(S_[at(c)])] = c;
      }
      if (r != last) {
        M_.col(r).head(k_).swap(M_.col(last).head(k_));
        R_[at(r)] = R_[at(last)];
        rpos_[at(R_[at(r)])] = r;
      }
      const double mu = M_(last, last);
      M_.topLeftCorner(last, last).noalias() -= M_.col(last).head(last) * M_.row(last).head(last) / mu;
      S_.pop_back();
      R_.pop_back();
      spos_[at(vp)] = -1;
      rpos_[at(q - n_)] = -1;
      --k_;
    } else {
      // Row of q swapped for row of vp.
      const int r = rpos_[at(q - n_)];
      const int i = vp - n_;
      const Eigen::VectorXd ncol = M.col(r) / z(r);
      M.noalias() -= ncol * z.transpose();
      M.col(r) = ncol;
      R_[at(r)] = i;
      rpos_[at(i)] = r;
      rpos_[at(q - n_)] = -1;
    }
  }

  void finish(LpResult& res) {
    ready_ = res.status == LpStatus::Optimal;
    res.x.assign(at(n_), 0.0);
    res.reduced_costs.assign(at(n_), 0.0);
    res.duals.assign(at(m_), 0.0);
    res.row_activity.assign(at(m_), 0.0);
    if (x_.empty()) return;
    for (int j = 0; j < n_; ++j) {
      res.x[at(j)] = std::clamp(x_[at(j)], lo_[at(j)], up_[at(j)]);
      res.reduced_costs[at(j)] = d_[at(j)];
    }
    for (int i = 0; i < m_; ++i) {
      double a = 0.0;
      for (const auto& [j, v] : prob_.rows[at(i)]) a += v * res.x[at(j)];
      res.row_activity[at(i)] = a;
      res.duals[at(i)] = d_[at(n_ + i)] * scale_[at(i)];
    }
    res.objective = prob_.objective_offset;
    for (int j = 0; j < n_; ++j) res.objective += prob_.cost[at(j)] * res.x[at(j)];

    res.basis.cols.resize(at(n_));
    res.basis.rows.resize(at(m_));
    auto status = [&](int j) {
      if (basic(j)) return BasisStatus::Basic;
      return at_upper_[at(j)] ? BasisStatus::AtUpper : BasisStatus::AtLower;
    };
    for (int j = 0; j < n_; ++j) res.basis.cols[at(j)] = status(j);
    for (int i = 0; i < m_; ++i) res.basis.rows[at(i)] = status(n_ + i);

    if (res.status == LpStatus::Optimal) {
      // The optimum depends on a stand-in bound only through nonzero reduced costs.
      for (int j = 0; j < n_; ++j) {
        if (!artificial_[at(j)] || basic(j) || std::abs(x_[at(j)]) < 0.5 * kBig) continue;
        if (std::abs(d_[at(j)]) > opt_.dual_tol) {
          res.status = LpStatus::Unbounded;
          break;
        }
      }
    }
  }
};

}  // namespace

int LpProblem::add_col(double lower, double upper, double c) {
  col_lower.push_back(lower);
  col_upper.push_back(upper);
  cost.push_back(c);
  return num_cols() - 1;
}

int LpProblem::add_row(const std::vector<std::pair<int, double>>& entries, double lower, double upper) {
  rows.push_back(entries);
  row_lower.push_back(lower);
  row_upper.push_back(upper);
  return num_rows() - 1;
}

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal:
      return "optimal";
    case LpStatus::Infeasible:
      return "infeasible";
    case LpStatus::Unbounded:
      return "unbounded";
    case LpStatus::IterationLimit:
      return "iteration_limit";
    case LpStatus::Numerical:
      return "numerical";
  }
  return "unknown";
}

struct LpSession::Impl {
  Impl(LpProblem p, const LpOptions& o) : problem(std::move(p)), options(o), simplex(problem, options) {}
  LpProblem problem;
  LpOptions options;
  DualSimplex simplex;
};

LpSession::LpSession(LpProblem problem, const LpOptions& options)
    : impl_(std::make_unique<Impl>(std::move(problem), options)) {}

LpSession::~LpSession() = default;

const LpProblem& LpSession::problem() const { return impl_->problem; }

LpResult LpSession::solve(const std::vector<double>& cost, const LpBasis* warm) {
  if (static_cast<int>(cost.size()) != impl_->problem.num_cols())
    throw Error(ErrorKind::Degenerate, "objective size does not match the LP");
  impl_->problem.cost = cost;
  try {
    if (!started_) {
      started_ = true;
      return impl_->simplex.run(warm);
    }
    return impl_->simplex.resolve();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numerical) throw;
  }
  // Start over cold on a fresh factorization.
  impl_ = std::make_unique<Impl>(std::move(impl_->problem), impl_->options);
  try {
    return impl_->simplex.run(nullptr);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numerical) throw;
  }
  LpResult res;
  res.status = LpStatus::Numerical;
  return res;
}

LpResult solve_lp(const LpProblem& problem, const LpOptions& options, const LpBasis* warm) {
  DualSimplex solver(problem, options);
  try {
    return solver.run(warm);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numerical) throw;
    if (warm) return solve_lp(problem, options, nullptr);
    LpResult res;
    res.status = LpStatus::Numerical;
    return res;
  }
}

}  // namespace gridsite
