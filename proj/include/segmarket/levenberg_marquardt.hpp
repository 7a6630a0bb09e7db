#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "segmarket/parallel.hpp"
#include "segmarket/rng.hpp"

namespace segmarket::lm {

struct Options {
  int max_iterations = 500;
  double step_tolerance = 1e-10;  // relative
  double initial_lambda = 1e-3;
};

struct Result {
  Eigen::VectorXd params;
  double cost = 0.0;  // half the residual sum of squares
  int iterations = 0;
  bool converged = false;
  std::string reason;
};

// Minimizes 0.5*|r(x)|^2. `model(x, r, J)` fills residuals and, when J is
// non-null, the Jacobian. Returns false from the model for an invalid x.
template <class Model>
Result minimize(Model&& model, Eigen::VectorXd x, const Options& opt = {}) {
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  Result res;
  if (!model(x, r, &J) || !r.allFinite() || !J.allFinite()) {
    res.params = x;
    res.cost = std::numeric_limits<double>::infinity();
    res.reason = "invalid start";
    return res;
  }
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.initial_lambda;
  Eigen::VectorXd r_try;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    if (cost == 0.0 || g.lpNorm<Eigen::Infinity>() <= 1e-300) {
      res.converged = true;
      res.reason = "zero gradient";
      break;
    }
    Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-12 * std::max(1.0, JtJ.diagonal().maxCoeff()));
    bool accepted = false;
    bool small_step = false;
    while (lambda < 1e20) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * diag;
      const Eigen::VectorXd step = A.ldlt().solve(-g);
      small_step = step.norm() <= opt.step_tolerance * (x.norm() + opt.step_tolerance);
      const Eigen::VectorXd candidate = x + step;
      if (step.allFinite() && model(candidate, r_try, nullptr) && r_try.allFinite()) {
        const double c = 0.5 * r_try.squaredNorm();
        if (c <= cost) {
          x = candidate;
          cost = c;
          lambda = std::max(lambda / 3.0, 1e-15);
          accepted = true;
          break;
        }
      }
      if (small_step) break;
      lambda *= 4.0;
    }
    if (small_step) {
      res.converged = true;
      res.reason = "relative step below tolerance";
      if (accepted) ++res.iterations;
      break;
    }
    if (!accepted) {
      res.converged = true;
      res.reason = "no descent direction";
      break;
    }
    model(x, r, &J);
  }
  if (!res.converged) res.reason = "iteration limit";
  res.params = x;
  res.cost = cost;
  return res;
}

// Stratified start points: each dimension's range is cut into n strata and
// every stratum is used exactly once.
inline std::vector<Eigen::VectorXd> latin_hypercube(std::size_t n, const std::vector<std::pair<double, double>>& box,
                                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> out(n, Eigen::VectorXd(static_cast<Eigen::Index>(box.size())));
  for (std::size_t d = 0; d < box.size(); ++d) {
    const auto perm = rng.permutation(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
      out[i](static_cast<Eigen::Index>(d)) = box[d].first + u * (box[d].second - box[d].first);
    }
  }
  return out;
}

struct MultiStartResult {
  Result best;
  std::size_t best_start = 0;
  std::size_t starts = 0;
  std::size_t converged = 0;
};

// Runs every start (possibly in parallel) and keeps the converged run with the
// lowest cost; ties go to the lowest start index.
template <class Model>
MultiStartResult multi_start(const Model& model, const std::vector<Eigen::VectorXd>& starts, const Options& opt,
                             unsigned threads) {
  std::vector<Result> runs(starts.size());
  parallel_for(starts.size(), threads, [&](std::size_t i) { runs[i] = minimize(model, starts[i], opt); });
  MultiStartResult out;
  out.starts = starts.size();
  bool found = false;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].converged || !std::isfinite(runs[i].cost)) continue;
    ++out.converged;
    if (!found || runs[i].cost < out.best.cost) {
      out.best = runs[i];
      out.best_start = i;
      found = true;
    }
  }
  // nothing converged: report the cheapest run for diagnostics
  if (!found && !runs.empty()) {
    out.best = runs[0];
    for (std::size_t i = 1; i < runs.size(); ++i)
      if (runs[i].cost < out.best.cost) {
        out.best = runs[i];
        out.best_start = i;
      }
  }
  return out;
}

}  // namespace segmarket::lm
