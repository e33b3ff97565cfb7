// SPDX-License-Identifier: Apache-2.0
#ifndef UCTS_FWI_HPP
#define UCTS_FWI_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "ucts/adjoint.hpp"
#include "ucts/common.hpp"
#include "ucts/geometry.hpp"
#include "ucts/wave.hpp"

namespace ucts {

struct FwiConfig {
  int max_iters = 50;
  int lbfgs_memory = 5;
  double c_min = 1300.0;  // bounds on reconstructed speed, m/s
  double c_max = 3100.0;
  double init_speed = 1500.0;  // homogeneous initial map
  int max_backtracks = 20;
  double armijo_c = 1.0e-4;  // sufficient-decrease constant
  double stop_tol = 1.0e-4;  // relative misfit decrease over stop_window
  int stop_window = 5;

  void validate() const {
    if (!(c_min >= 1000.0 && c_max <= 5000.0 && c_min < c_max))
      throw ConfigError("FWI speed bounds must satisfy 1000 <= min < max <= 5000");
    if (lbfgs_memory < 1) throw ConfigError("L-BFGS memory must be >= 1");
    if (!(stop_tol > 0.0 && stop_tol < 1.0))
      throw ConfigError("stop_tol must lie in (0, 1)");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(init_speed >= c_min && init_speed <= c_max))
      throw ConfigError("initial speed must lie within the bounds");
  }
};

/// Per-iteration record of an FWI run; one row per accepted iterate, plus the
/// initial misfit at index 0 with step 0.
struct FwiTrace {
  std::vector<double> misfit;
  std::vector<double> step;
  std::vector<double> grad_norm;
  std::vector<double> seconds;
  bool line_search_failed = false;
  std::string stop_reason;

  void write_csv(std::ostream& os) const {
    os << "iter,misfit,step,gradnorm,seconds\n";
    for (std::size_t i = 0; i < misfit.size(); ++i)
      os << i << ',' << misfit[i] << ',' << step[i] << ',' << grad_norm[i]
         << ',' << seconds[i] << '\n';
  }
};

struct LbfgsOptions {
  int max_iters = 100;
  int memory = 5;
  int max_backtracks = 20;
  double armijo_c = 1.0e-4;
  double stop_tol = 1.0e-4;
  int stop_window = 5;
  double grad_tol = 0.0;  // stop when ||g||_inf <= grad_tol (0 disables)
  double f_tol = 0.0;     // stop when f <= f_tol (0 disables)
};

/// Projected L-BFGS (two-loop recursion) with Armijo backtracking.
/// `objective(x, grad_out)` returns f(x) and fills grad_out; `project`
/// clamps an iterate into the feasible box (identity for unconstrained
/// problems). Deterministic: fixed inputs give a bitwise-identical run.
/// Returns the best-misfit iterate; `trace`, when given, records every
/// accepted iterate.
inline std::vector<double> lbfgs_minimize(
    const std::function<double(const std::vector<double>&,
                               std::vector<double>&)>& objective,
    std::vector<double> x,
    const std::function<void(std::vector<double>&)>& project,
    const LbfgsOptions& opt, FwiTrace* trace = nullptr) {
  using clock = std::chrono::steady_clock;
  const std::size_t dim = x.size();
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
  };

  project(x);
  std::vector<double> g(dim);
  auto tic = clock::now();
  double f = objective(x, g);
  if (!std::isfinite(f)) throw NumericalError("initial FWI misfit is not finite");
  auto record = [&](double fv, double stepv, double gn) {
    if (!trace) return;
    trace->misfit.push_back(fv);
    trace->step.push_back(stepv);
    trace->grad_norm.push_back(gn);
    trace->seconds.push_back(
        std::chrono::duration<double>(clock::now() - tic).count());
    tic = clock::now();
  };
  record(f, 0.0, inf_norm(g));

  std::vector<double> best_x = x;
  double best_f = f;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> q(dim), dir(dim), x_new(dim), g_new(dim);

  for (int it = 0; it < opt.max_iters; ++it) {
    if (opt.f_tol > 0.0 && f <= opt.f_tol) {
      if (trace) trace->stop_reason = "misfit below tolerance";
      break;
    }
    const double gnorm = inf_norm(g);
    if (gnorm <= opt.grad_tol) {
      if (trace) trace->stop_reason = "gradient below tolerance";
      break;
    }

    // two-loop recursion for dir = -H*g
    q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = int(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], q);
      for (std::size_t j = 0; j < dim; ++j) q[j] -= alpha[i] * y_hist[i][j];
    }
    // initial Hessian scale: standard s·y/y·y once history exists; before
    // that, size the first trial step at 5% of the iterate scale (or unit
    // length when starting from the origin) so it is meaningful regardless of
    // the problem's units
    double gamma;
    if (!s_hist.empty()) {
      gamma = dot(s_hist.back(), y_hist.back()) /
              std::max(dot(y_hist.back(), y_hist.back()), 1e-300);
    } else {
      const double xs = inf_norm(x);
      gamma = (xs > 0.0 ? 0.05 * xs : 1.0) /
              std::max(xs > 0.0 ? gnorm : std::sqrt(dot(g, g)), 1e-300);
    }
    for (std::size_t j = 0; j < dim; ++j) q[j] *= gamma;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], q);
      for (std::size_t j = 0; j < dim; ++j)
        q[j] += (alpha[i] - beta) * s_hist[i][j];
    }
    for (std::size_t j = 0; j < dim; ++j) dir[j] = -q[j];

    double slope = dot(g, dir);
    if (!(slope < 0.0)) {  // fall back to steepest descent
      for (std::size_t j = 0; j < dim; ++j) dir[j] = -g[j];
      slope = dot(g, dir);
      if (!(slope < 0.0)) {
        if (trace) trace->stop_reason = "zero gradient";
        break;
      }
    }

    // Armijo backtracking on the projected step
    double step = 1.0;
    bool accepted = false;
    double f_new = f;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      for (std::size_t j = 0; j < dim; ++j) x_new[j] = x[j] + step * dir[j];
      project(x_new);
      f_new = objective(x_new, g_new);
      // slope of the projected path is bounded by the unprojected slope, so
      // the plain Armijo test remains a valid sufficient-decrease check
      if (std::isfinite(f_new) && f_new <= f + opt.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (trace) {
        trace->line_search_failed = true;
        trace->stop_reason = "line search failed";
      }
      break;
    }

    // one quadratic-interpolation refinement: fit the 1D parabola through
    // (0, f, slope) and (step, f_new); for quadratic objectives this lands on
    // the exact line minimum, which restores finite BFGS termination
    {
      const double k = (f_new - f - slope * step) / (step * step);
      if (k > 0.0) {
        const double alpha = -slope / (2.0 * k);
        if (alpha > 0.0 && alpha <= 2.0 * step &&
            std::abs(alpha - step) > 1e-12 * step) {
          std::vector<double> x_ref(dim), g_ref(dim);
          for (std::size_t j = 0; j < dim; ++j) x_ref[j] = x[j] + alpha * dir[j];
          project(x_ref);
          const double f_ref = objective(x_ref, g_ref);
          if (std::isfinite(f_ref) && f_ref < f_new) {
            x_new.swap(x_ref);
            g_new.swap(g_ref);
            f_new = f_ref;
            step = alpha;
          }
        }
      }
    }

    // curvature update with the actual (projected) displacement
    std::vector<double> s_vec(dim), y_vec(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      s_vec[j] = x_new[j] - x[j];
      y_vec[j] = g_new[j] - g[j];
    }
    const double sy = dot(s_vec, y_vec);
    if (sy > 1e-12 * std::sqrt(dot(s_vec, s_vec)) * std::sqrt(dot(y_vec, y_vec))) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if (int(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    record(f, step, inf_norm(g));
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }

    // relative-decrease stop over a trailing window
    if (trace && int(trace->misfit.size()) > opt.stop_window) {
      const double then =
          trace->misfit[trace->misfit.size() - 1 - opt.stop_window];
      if (then > 0.0 && (then - f) / then < opt.stop_tol) {
        trace->stop_reason = "relative decrease below tolerance";
        break;
      }
    }
  }
  if (trace && trace->stop_reason.empty())
    trace->stop_reason = "max iterations";
  return best_x;
}

/// Iterative FWI baseline: minimize the RF misfit over the SOS map with
/// projected L-BFGS. The inversion variable is slowness-squared m = 1/c²
/// (chain rule dL/dm = dL/dc · (−c³/2)); speed bounds become box bounds on m
/// and are enforced by projection after every trial step. The returned map is
/// the best-misfit iterate.
inline std::pair<SosMap, FwiTrace> fwi_reconstruct(const RfCube& obs,
                                                   const RingArray& array,
                                                   const Wavelet& wavelet,
                                                   const AcquisitionConfig& cfg,
                                                   const FwiConfig& fwi,
                                                   const Grid2D& grid) {
  fwi.validate();
  cfg.validate();
  const double m_lo = 1.0 / (fwi.c_max * fwi.c_max);
  const double m_hi = 1.0 / (fwi.c_min * fwi.c_min);

  std::vector<double> m0(grid.size(),
                         1.0 / (fwi.init_speed * fwi.init_speed));
  SosMap work(grid, fwi.init_speed);

  auto objective = [&](const std::vector<double>& m,
                       std::vector<double>& grad_out) {
    for (std::size_t i = 0; i < m.size(); ++i)
      work.values[i] = 1.0 / std::sqrt(m[i]);
    auto [value, grad_c] = misfit_vjp(work, obs, array, wavelet, cfg);
    grad_out.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double c = work.values[i];
      grad_out[i] = grad_c[i] * (-0.5 * c * c * c);
    }
    return value;
  };
  auto project = [&](std::vector<double>& m) {
    for (double& v : m) v = std::clamp(v, m_lo, m_hi);
  };

  LbfgsOptions opt;
  opt.max_iters = fwi.max_iters;
  opt.memory = fwi.lbfgs_memory;
  opt.max_backtracks = fwi.max_backtracks;
  opt.armijo_c = fwi.armijo_c;
  opt.stop_tol = fwi.stop_tol;
  opt.stop_window = fwi.stop_window;
  // misfit floor at the numerical-noise level of the data energy (in misfit
  // units: energy x dt/n_rx): an init map that already explains the data
  // stops after one evaluation
  double obs_energy = 0.0;
  for (double v : obs.data) obs_energy += v * v;
  opt.f_tol = 1.0e-11 * obs_energy * obs.dt_out / std::max(obs.n_rx, 1);

  FwiTrace trace;
  std::vector<double> m_best =
      lbfgs_minimize(objective, std::move(m0), project, opt, &trace);

  SosMap result(grid, fwi.init_speed);
  for (std::size_t i = 0; i < m_best.size(); ++i)
    result.values[i] = 1.0 / std::sqrt(m_best[i]);
  return {std::move(result), std::move(trace)};
}

}  // namespace ucts

#endif  // UCTS_FWI_HPP
