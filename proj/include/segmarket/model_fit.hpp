#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "segmarket/errors.hpp"
#include "segmarket/levenberg_marquardt.hpp"

namespace segmarket {

using FitPoints = std::vector<std::pair<double, double>>;

struct FitDiagnostics {
  std::size_t starts = 0;
  std::size_t converged_starts = 0;
  std::size_t best_start = 0;
  int iterations = 0;
  double cost = 0.0;
  std::string reason;

  nlohmann::ordered_json to_json() const {
    return {{"starts", starts},         {"converged_starts", converged_starts}, {"best_start", best_start},
            {"iterations", iterations}, {"final_cost", cost},                   {"stop_reason", reason}};
  }
};

struct FitOptions {
  std::size_t starts = 32;
  lm::Options lm;
  std::uint64_t seed = 0x5eed;
  unsigned threads = 1;
};

inline double r_squared(const std::vector<double>& y, const std::vector<double>& fitted) {
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - fitted[i]) * (y[i] - fitted[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

// ---------------------------------------------------------------- power law

// vmt = alpha * nu^beta
struct PowerFit {
  double alpha = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;
  std::vector<double> residuals;

  double operator()(double nu) const { return alpha * std::pow(nu, beta); }
};

// Least squares in log space; r^2 reported on the original scale.
inline PowerFit fit_power(const FitPoints& points) {
  std::vector<double> lx, ly, x, y;
  for (auto [nu, v] : points)
    if (nu > 0.0 && v > 0.0 && std::isfinite(nu) && std::isfinite(v)) {
      x.push_back(nu);
      y.push_back(v);
      lx.push_back(std::log(nu));
      ly.push_back(std::log(v));
    }
  if (x.size() < 3) throw ArgumentError("power fit needs at least 3 points with positive coordinates");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0.0) throw ArgumentError("power fit needs at least two distinct nu values");
  PowerFit f;
  f.beta = sxy / sxx;
  f.alpha = std::exp(my - f.beta * mx);
  std::vector<double> fitted;
  for (std::size_t i = 0; i < x.size(); ++i) {
    fitted.push_back(f(x[i]));
    f.residuals.push_back(y[i] - fitted.back());
  }
  f.r_squared = segmarket::r_squared(y, fitted);
  return f;
}

// ------------------------------------------------------------- alpha(delta)

// alpha(delta) = a1 / (exp(a2 * delta) + a3) + a4
struct AlphaDeltaFit {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0;
  double r_squared = 0.0;
  double domain_max = 0.0;  // denominator is positive on [0, domain_max]
  std::vector<double> residuals;
  FitDiagnostics diagnostics;

  double operator()(double delta) const { return a1 / (std::exp(a2 * delta) + a3) + a4; }
};

namespace detail {

// Scaled alpha model on x in [0, 1]: params (A1, A2, t, A4) with
// A3 = exp(t) - min(1, exp(A2)), which keeps the denominator >= exp(t).
struct AlphaModel {
  const std::vector<double>& x;
  const std::vector<double>& y;

  static double shift(double A2) { return std::min(1.0, std::exp(A2)); }

  bool operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    const double A1 = p(0), A2 = p(1), t = p(2), A4 = p(3);
    if (std::abs(A2) > 700 || t > 700) return false;
    const double et = std::exp(t);
    const double A3 = et - shift(A2);
    const double dA3 = A2 < 0 ? -std::exp(A2) : 0.0;
    const auto n = static_cast<Eigen::Index>(x.size());
    r.resize(n);
    if (J) J->resize(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = std::exp(A2 * x[i]);
      const double D = e + A3;
      r(i) = A1 / D + A4 - y[i];
      if (J) {
        (*J)(i, 0) = 1.0 / D;
        (*J)(i, 1) = -A1 / (D * D) * (x[i] * e + dA3);
        (*J)(i, 2) = -A1 / (D * D) * et;
        (*J)(i, 3) = 1.0;
      }
    }
    return true;
  }
};

}  // namespace detail

inline AlphaDeltaFit fit_alpha_delta(const FitPoints& points, const FitOptions& opt = {}) {
  if (points.size() < 5) throw ArgumentError("alpha(delta) fit needs at least 5 points");
  double dmax = 0.0, ymax = 0.0;
  for (auto [d, a] : points) {
    if (!std::isfinite(d) || !std::isfinite(a) || d < 0.0) throw ArgumentError("alpha(delta) points must be finite with delta >= 0");
    dmax = std::max(dmax, d);
    ymax = std::max(ymax, std::abs(a));
  }
  if (dmax <= 0.0) throw ArgumentError("alpha(delta) fit needs a positive delta");
  if (ymax == 0.0) ymax = 1.0;
  std::vector<double> x, y;
  for (auto [d, a] : points) {
    x.push_back(d / dmax);
    y.push_back(a / ymax);
  }
  const detail::AlphaModel model{x, y};

  // Linear coefficients of each start come from least squares given (A2, t).
  auto starts = lm::latin_hypercube(opt.starts, {{-12.0, 12.0}, {std::log(0.01), std::log(10.0)}}, opt.seed);
  std::vector<Eigen::VectorXd> full;
  for (const auto& s : starts) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(x.size()), 2);
    Eigen::VectorXd Y(static_cast<Eigen::Index>(x.size()));
    const double A3 = std::exp(s(1)) - detail::AlphaModel::shift(s(0));
    for (std::size_t i = 0; i < x.size(); ++i) {
      X(static_cast<Eigen::Index>(i), 0) = 1.0 / (std::exp(s(0) * x[i]) + A3);
      X(static_cast<Eigen::Index>(i), 1) = 1.0;
      Y(static_cast<Eigen::Index>(i)) = y[i];
    }
    const Eigen::VectorXd c = X.completeOrthogonalDecomposition().solve(Y);
    Eigen::VectorXd p(4);
    p << c(0), s(0), s(1), c(1);
    full.push_back(p);
  }
  const auto ms = lm::multi_start(model, full, opt.lm, opt.threads);
  FitDiagnostics diag{ms.starts, ms.converged, ms.best_start, ms.best.iterations, ms.best.cost, ms.best.reason};
  if (ms.converged == 0) throw FitFailure("alpha(delta) fit: no start converged", diag.to_json().dump());

  const auto& p = ms.best.params;
  AlphaDeltaFit f;
  f.a1 = p(0) * ymax;
  f.a2 = p(1) / dmax;
  f.a3 = std::exp(p(2)) - detail::AlphaModel::shift(p(1));
  f.a4 = p(3) * ymax;
  f.domain_max = dmax;
  f.diagnostics = diag;
  std::vector<double> obs, fitted;
  for (auto [d, a] : points) {
    obs.push_back(a);
    fitted.push_back(f(d));
    f.residuals.push_back(a - fitted.back());
  }
  f.r_squared = r_squared(obs, fitted);
  return f;
}

// -------------------------------------------------------------- beta(delta)

// beta(delta) = 1/(b1*delta + 1)^m - b2/(b3*delta + 1)^n + b2, m > n > 0.
// The first term is the falling part, the other two the rising part.
struct BetaDeltaFit {
  double b1 = 0.0, b2 = 0.0, b3 = 0.0, m = 0.0, n = 0.0;
  double r_squared = 0.0;
  std::vector<double> residuals;
  FitDiagnostics diagnostics;

  double falling(double delta) const { return std::pow(b1 * delta + 1.0, -m); }
  double rising(double delta) const { return b2 * (1.0 - std::pow(b3 * delta + 1.0, -n)); }
  double operator()(double delta) const { return falling(delta) + rising(delta); }
};

namespace detail {

// Variable projection over b2. Scaled params on x in [0, 1]:
// (ln B1, ln B3, ln n, ln(m - n)).
struct BetaModel {
  const std::vector<double>& x;
  const std::vector<double>& y;

  struct Eval {
    Eigen::VectorXd u, v;
    Eigen::MatrixXd du, dv;  // columns: d/dp0..dp3
    double b2 = 0.0;
  };

  bool eval(const Eigen::VectorXd& p, Eval& e, bool derivs) const {
    if (p.cwiseAbs().maxCoeff() > 50) return false;
    const double B1 = std::exp(p(0)), B3 = std::exp(p(1)), n = std::exp(p(2)), gap = std::exp(p(3));
    const double m = n + gap;
    const auto N = static_cast<Eigen::Index>(x.size());
    e.u.resize(N);
    e.v.resize(N);
    if (derivs) {
      e.du = Eigen::MatrixXd::Zero(N, 4);
      e.dv = Eigen::MatrixXd::Zero(N, 4);
    }
    for (Eigen::Index i = 0; i < N; ++i) {
      const double xi = x[static_cast<std::size_t>(i)];
      const double l1 = std::log1p(B1 * xi), l3 = std::log1p(B3 * xi);
      const double u = std::exp(-m * l1), w = std::exp(-n * l3);
      e.u(i) = u;
      e.v(i) = 1.0 - w;
      if (derivs) {
        e.du(i, 0) = -u * m * B1 * xi / (1.0 + B1 * xi);
        e.du(i, 2) = -u * l1 * n;
        e.du(i, 3) = -u * l1 * gap;
        e.dv(i, 1) = w * n * B3 * xi / (1.0 + B3 * xi);
        e.dv(i, 2) = w * l3 * n;
      }
    }
    const double vv = e.v.squaredNorm();
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), N);
    e.b2 = vv > 0 ? e.v.dot(yv - e.u) / vv : 0.0;
    return std::isfinite(e.b2);
  }

  bool operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    Eval e;
    if (!eval(p, e, J != nullptr)) return false;
    const auto N = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), N);
    r = e.u + e.b2 * e.v - yv;
    if (J) {
      J->resize(N, 4);
      const double vv = e.v.squaredNorm();
      for (Eigen::Index k = 0; k < 4; ++k) {
        double db2 = 0.0;
        if (vv > 0)
          db2 = (e.dv.col(k).dot(yv - e.u) - e.v.dot(e.du.col(k)) - 2.0 * e.b2 * e.v.dot(e.dv.col(k))) / vv;
        J->col(k) = e.du.col(k) + e.b2 * e.dv.col(k) + db2 * e.v;
      }
    }
    return true;
  }
};

}  // namespace detail

inline BetaDeltaFit fit_beta_delta(const FitPoints& points, const FitOptions& opt = {}) {
  if (points.size() < 7) throw ArgumentError("beta(delta) fit needs at least 7 points");
  bool has_zero = false;
  double dmax = 0.0;
  for (auto [d, b] : points) {
    if (!std::isfinite(d) || !std::isfinite(b) || d < 0.0) throw ArgumentError("beta(delta) points must be finite with delta >= 0");
    has_zero |= d == 0.0;
    dmax = std::max(dmax, d);
  }
  if (!has_zero) throw ArgumentError("beta(delta) fit needs a point at delta = 0");
  if (dmax <= 0.0) throw ArgumentError("beta(delta) fit needs a positive delta");
  std::vector<double> x, y;
  for (auto [d, b] : points) {
    x.push_back(d / dmax);
    y.push_back(b);
  }
  const detail::BetaModel model{x, y};
  const auto starts = lm::latin_hypercube(
      opt.starts, {{std::log(0.1), std::log(1e4)}, {std::log(0.01), std::log(1e3)}, {std::log(0.05), std::log(10.0)},
                   {std::log(0.01), std::log(10.0)}},
      opt.seed);
  const auto ms = lm::multi_start(model, starts, opt.lm, opt.threads);
  FitDiagnostics diag{ms.starts, ms.converged, ms.best_start, ms.best.iterations, ms.best.cost, ms.best.reason};
  if (ms.converged == 0) throw FitFailure("beta(delta) fit: no start converged", diag.to_json().dump());

  const auto& p = ms.best.params;
  detail::BetaModel::Eval e;
  model.eval(p, e, false);
  BetaDeltaFit f;
  f.b1 = std::exp(p(0)) / dmax;
  f.b3 = std::exp(p(1)) / dmax;
  f.n = std::exp(p(2));
  f.m = f.n + std::exp(p(3));
  f.b2 = e.b2;
  f.diagnostics = diag;
  std::vector<double> obs, fitted;
  for (auto [d, b] : points) {
    obs.push_back(b);
    fitted.push_back(f(d));
    f.residuals.push_back(b - fitted.back());
  }
  f.r_squared = r_squared(obs, fitted);
  return f;
}

// ------------------------------------------------------------ loss(sigma)

// loss(sigma) = a*s^4 - 2a*s^3 + c*s^2 + (a - c)*s, which vanishes at 0 and 1
// and is symmetric about 1/2.
struct QuarticFit {
  double a = 0.0, c = 0.0;
  double r_squared = 0.0;
  std::vector<double> residuals;

  static double basis_a(double s) { return s * s * s * s - 2 * s * s * s + s; }
  static double basis_c(double s) { return s * s - s; }
  double operator()(double s) const { return a * basis_a(s) + c * basis_c(s); }
};

inline QuarticFit fit_quartic(const FitPoints& points) {
  if (points.size() < 3) throw ArgumentError("quartic fit needs at least 3 points");
  double s11 = 0, s12 = 0, s22 = 0, t1 = 0, t2 = 0;
  for (auto [s, l] : points) {
    if (!std::isfinite(s) || !std::isfinite(l)) throw ArgumentError("quartic fit points must be finite");
    const double g1 = QuarticFit::basis_a(s), g2 = QuarticFit::basis_c(s);
    s11 += g1 * g1;
    s12 += g1 * g2;
    s22 += g2 * g2;
    t1 += g1 * l;
    t2 += g2 * l;
  }
  const double det = s11 * s22 - s12 * s12;
  if (!(det > 1e-12 * s11 * s22) || s11 == 0.0 || s22 == 0.0)
    throw ArgumentError("quartic fit design is rank deficient; need two distinct sigma values in (0, 1) not mirrored about 1/2");
  QuarticFit f;
  f.a = (s22 * t1 - s12 * t2) / det;
  f.c = (s11 * t2 - s12 * t1) / det;
  std::vector<double> obs, fitted;
  for (auto [s, l] : points) {
    obs.push_back(l);
    fitted.push_back(f(s));
    f.residuals.push_back(l - fitted.back());
  }
  f.r_squared = r_squared(obs, fitted);
  return f;
}

// ------------------------------------------------------------ loss surface

struct MarketFits {
  AlphaDeltaFit alpha;
  BetaDeltaFit beta;
};

// loss(nu, delta) = alpha2(delta)*nu^beta2(delta) - alpha1(delta)*nu^beta1(delta)
class LossSurface {
 public:
  using Curve = std::function<double(double)>;

  LossSurface(Curve alpha_mono, Curve beta_mono, Curve alpha_duo, Curve beta_duo, double delta_lo, double delta_hi)
      : alpha_mono_(std::move(alpha_mono)),
        beta_mono_(std::move(beta_mono)),
        alpha_duo_(std::move(alpha_duo)),
        beta_duo_(std::move(beta_duo)),
        lo_(delta_lo),
        hi_(delta_hi) {
    if (!(lo_ < hi_)) throw ArgumentError("loss surface needs a non-empty delta range");
  }

  double operator()(double nu, double delta) const {
    const double slack = 1e-9 * std::max(1.0, hi_ - lo_);
    if (!(delta >= lo_ - slack && delta <= hi_ + slack))
      throw DomainError("delta " + std::to_string(delta) + " outside the fitted range");
    if (nu == 0.0) return 0.0;
    return alpha_duo_(delta) * std::pow(nu, beta_duo_(delta)) - alpha_mono_(delta) * std::pow(nu, beta_mono_(delta));
  }

  double delta_lo() const { return lo_; }
  double delta_hi() const { return hi_; }

 private:
  Curve alpha_mono_, beta_mono_, alpha_duo_, beta_duo_;
  double lo_, hi_;
};

// The common delta range is where both markets have power fits.
inline LossSurface loss_surface(const std::map<double, PowerFit>& power_mono, const std::map<double, PowerFit>& power_duo,
                                const MarketFits& mono, const MarketFits& duo) {
  if (power_mono.empty()) throw ArgumentError("missing power fits for the monopoly market");
  if (power_duo.empty()) throw ArgumentError("missing power fits for the duopoly market");
  const double lo = std::max(power_mono.begin()->first, power_duo.begin()->first);
  const double hi = std::min(power_mono.rbegin()->first, power_duo.rbegin()->first);
  return LossSurface([a = mono.alpha](double d) { return a(d); }, [b = mono.beta](double d) { return b(d); },
                     [a = duo.alpha](double d) { return a(d); }, [b = duo.beta](double d) { return b(d); }, lo, hi);
}

struct FrontierPoint {
  double nu = 0.0;
  double delta_star = 0.0;
  double loss_at_star = 0.0;
};

struct FrontierOptions {
  double grid_step = 0.25;      // seconds
  double derivative_step = 1e-3;  // seconds, central differences
};

inline double loss_slope(const LossSurface& s, double nu, double delta, double h) {
  return (s(nu, delta + h) - s(nu, delta - h)) / (2.0 * h);
}

// Interior maximum of delta -> loss(nu, delta): derivative sign changes from
// + to - on a fine grid, refined by bisection. Empty when the global maximum
// over the range sits on the boundary.
inline std::optional<FrontierPoint> worst_tightness(const LossSurface& s, double nu, std::pair<double, double> range,
                                                    const FrontierOptions& opt = {}) {
  const auto [lo, hi] = range;
  if (!(lo < hi)) throw ArgumentError("empty delta range");
  const double h = opt.derivative_step;
  const double a = lo + h, b = hi - h;
  const auto steps = static_cast<std::size_t>(std::ceil((b - a) / opt.grid_step));
  std::optional<FrontierPoint> best;
  double prev_x = a, prev_d = loss_slope(s, nu, a, h);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double x = k == steps ? b : a + static_cast<double>(k) * (b - a) / static_cast<double>(steps);
    const double d = loss_slope(s, nu, x, h);
    if (prev_d > 0.0 && d <= 0.0) {
      double l = prev_x, r = x;
      for (int it = 0; it < 200 && r - l > 1e-10 * std::max(1.0, std::abs(r)); ++it) {
        const double mid = 0.5 * (l + r);
        (loss_slope(s, nu, mid, h) > 0.0 ? l : r) = mid;
      }
      const double root = 0.5 * (l + r);
      const double v = s(nu, root);
      if (!best || v > best->loss_at_star) best = FrontierPoint{nu, root, v};
    }
    prev_x = x;
    prev_d = d;
  }
  if (best && (s(nu, lo) >= best->loss_at_star || s(nu, hi) >= best->loss_at_star)) return std::nullopt;
  return best;
}

// ----------------------------------------------------------------- reports

inline nlohmann::ordered_json residuals_json(const std::vector<double>& r) {
  auto j = nlohmann::ordered_json::array();
  for (double v : r) j.push_back(v);
  return j;
}

inline nlohmann::ordered_json to_json(const PowerFit& f) {
  return {{"family", "power"},
          {"coefficients", {{"alpha", f.alpha}, {"beta", f.beta}}},
          {"r_squared", f.r_squared},
          {"residuals", residuals_json(f.residuals)}};
}

inline nlohmann::ordered_json to_json(const AlphaDeltaFit& f) {
  return {{"family", "alpha_delta"},
          {"coefficients", {{"a1", f.a1}, {"a2", f.a2}, {"a3", f.a3}, {"a4", f.a4}}},
          {"r_squared", f.r_squared},
          {"residuals", residuals_json(f.residuals)},
          {"diagnostics", f.diagnostics.to_json()}};
}

inline nlohmann::ordered_json to_json(const BetaDeltaFit& f) {
  return {{"family", "beta_delta"},
          {"coefficients", {{"b1", f.b1}, {"b2", f.b2}, {"b3", f.b3}, {"m", f.m}, {"n", f.n}}},
          {"r_squared", f.r_squared},
          {"residuals", residuals_json(f.residuals)},
          {"diagnostics", f.diagnostics.to_json()}};
}

inline nlohmann::ordered_json to_json(const QuarticFit& f) {
  return {{"family", "quartic"},
          {"coefficients", {{"a", f.a}, {"c", f.c}}},
          {"r_squared", f.r_squared},
          {"residuals", residuals_json(f.residuals)}};
}

inline AlphaDeltaFit alpha_from_json(const nlohmann::json& j) {
  const auto& c = j.at("coefficients");
  AlphaDeltaFit f;
  f.a1 = c.at("a1").get<double>();
  f.a2 = c.at("a2").get<double>();
  f.a3 = c.at("a3").get<double>();
  f.a4 = c.at("a4").get<double>();
  f.r_squared = j.at("r_squared").get<double>();
  return f;
}

inline BetaDeltaFit beta_from_json(const nlohmann::json& j) {
  const auto& c = j.at("coefficients");
  BetaDeltaFit f;
  f.b1 = c.at("b1").get<double>();
  f.b2 = c.at("b2").get<double>();
  f.b3 = c.at("b3").get<double>();
  f.m = c.at("m").get<double>();
  f.n = c.at("n").get<double>();
  f.r_squared = j.at("r_squared").get<double>();
  return f;
}

}  // namespace segmarket
