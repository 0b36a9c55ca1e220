#pragma once

// Central finite-difference oracles shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "eqtariff/rnn.hpp"
#include "eqtariff/tariff_optimizer.hpp"

namespace gradcheck {

using namespace eqtariff;

struct Outcome {
  double max_rel = 0.0;      // over checked coordinates
  std::size_t checked = 0;
  std::size_t skipped = 0;   // coordinates straddling an activation kink
};

/// Compares `analytic` with central differences of f. Relative error per
/// coordinate uses max(|a|, |fd|, floor, noise) where floor = 1e-3 * scale
/// (scale defaults to max|analytic|)
/// and noise = 100 eps |f| / h is the rounding level of the difference quotient.
/// A kink inside [-h, h] shows as one-sided slopes that disagree by more than
/// `kink_tol` at both h and h/10 (curvature alone shrinks the gap tenfold). A
/// kink further out shows as the central difference moving between h and
/// h/10 by more than 1e-6 plus rounding. Either way the step shrinks tenfold
/// (twice at most) before the coordinate is skipped.
inline Outcome compare(const std::function<double(std::size_t, double)>& f, const std::vector<double>& analytic,
                       const std::vector<double>& steps, double kink_tol = 1e-3, double scale = 0.0) {
  Outcome out;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(1e-3 * scale, 1e-12);
  const double f0 = f(0, 0.0);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    bool smooth = false;
    double fd = 0.0, used_h = steps[i];
    for (int level = 0; level < 3 && !smooth; ++level) {
      const double h = steps[i] * std::pow(0.1, level);
      const double fp = f(i, h), fm = f(i, -h);
      const double fp10 = f(i, 0.1 * h), fm10 = f(i, -0.1 * h);
      const double gap = (fp - 2.0 * f0 + fm) / h;
      const double gap10 = (fp10 - 2.0 * f0 + fm10) / (0.1 * h);
      const double slope = std::max({std::abs(fp - f0) / h, std::abs(f0 - fm) / h, floor});
      if (std::abs(gap) > kink_tol * slope && std::abs(gap10) > 0.5 * std::abs(gap)) continue;
      fd = (fp - fm) / (2.0 * h);
      used_h = h;
      const double finer = (fp10 - fm10) / (0.2 * h);
      const double round = 100.0 * std::numeric_limits<double>::epsilon() * std::abs(f0) / h;
      smooth = std::abs(fd - finer) <= 1e-6 * std::max({std::abs(fd), std::abs(finer), floor}) + round;
    }
    if (!smooth) {
      ++out.skipped;
      continue;
    }
    const double noise = 100.0 * std::numeric_limits<double>::epsilon() * std::abs(f0) / used_h;
    const double rel = std::abs(fd - analytic[i]) / std::max({std::abs(fd), std::abs(analytic[i]), floor, noise});
    out.max_rel = std::max(out.max_rel, rel);
    ++out.checked;
  }
  return out;
}

/// Hidden pre-activations recomputed from the parameter blocks, plus the
/// normalized outputs they produce.
struct Unrolled {
  std::vector<double> y;
  double kink_margin = 1e300;  // min |pre-activation| over ReLU/SELU units
};

inline Unrolled unroll(const RnnModel& m, std::span<const double> price) {
  Unrolled out;
  const std::size_t L = m.n_layers();
  std::vector<std::vector<double>> h(L), prev(L);
  for (std::size_t l = 0; l < L; ++l) prev[l].assign(m.width(l), 0.0);
  for (std::size_t t = 0; t < price.size(); ++t) {
    const double z = (price[t] - m.norm.p_mean(t)) / m.norm.p_std(t);
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t w = m.width(l);
      const std::size_t wi = l == 0 ? 1 : m.width(l - 1);
      h[l].assign(w, 0.0);
      for (std::size_t j = 0; j < w; ++j) {
        double pre = m.bias(l)[j];
        for (std::size_t i = 0; i < wi; ++i) pre += (l == 0 ? z : h[l - 1][i]) * m.w_in(l)[i * w + j];
        for (std::size_t i = 0; i < w; ++i) pre += prev[l][i] * m.w_rec(l)[i * w + j];
        if (m.activations()[l] != Activation::Identity) out.kink_margin = std::min(out.kink_margin, std::abs(pre));
        h[l][j] = activation(m.activations()[l], pre);
      }
    }
    double o = m.b_out();
    for (std::size_t i = 0; i < m.width(L - 1); ++i) o += h[L - 1][i] * m.w_out()[i];
    if (m.output_activation() != Activation::Identity) out.kink_margin = std::min(out.kink_margin, std::abs(o));
    out.y.push_back(activation(m.output_activation(), o));
    prev = h;
  }
  return out;
}

/// Smooth point: every ReLU/SELU pre-activation at least this far from 0.
inline constexpr double kSmoothMargin = 1e-4;

inline bool smooth_point(const RnnModel& m, std::span<const double> price) {
  return unroll(m, price).kink_margin >= kSmoothMargin;
}

/// param_gradient against differences of sample_loss (step 1e-5, normalized units).
inline Outcome check_param_gradient(const RnnModel& model, const PriceProfile& price, const DemandProfile& dd) {
  const auto g = param_gradient(model, price, dd);
  RnnModel work = model;
  auto f = [&](std::size_t i, double h) {
    if (h == 0.0) return sample_loss(model, price, dd);
    auto p = work.params();
    const double saved = p[i];
    p[i] = saved + h;
    const double v = sample_loss(work, price, dd);
    p[i] = saved;
    return v;
  };
  return compare(f, g, std::vector<double>(g.size(), 1e-5));
}

/// Every entry of input_jacobian against differences of forward (physical
/// units). Negligible entries are judged against the whole matrix's scale.
inline Outcome check_input_jacobian(const RnnModel& model, const PriceProfile& price) {
  const auto J = model.input_jacobian(price.values());
  const double j_scale = J.cwiseAbs().maxCoeff();
  const std::size_t T = price.size();
  Outcome total;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> row(T);
    for (std::size_t s = 0; s < T; ++s) row[s] = J(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s));
    std::vector<double> work(price.vec());
    auto f = [&](std::size_t s, double h) {
      if (h == 0.0) return model.forward(price.values())[t];
      const double saved = work[s];
      work[s] = saved + h;
      const double v = model.forward(std::span<const double>(work))[t];
      work[s] = saved;
      return v;
    };
    std::vector<double> steps(T);
    for (std::size_t s = 0; s < T; ++s) steps[s] = 1e-6 * std::max(1.0, model.norm.p_std(s) * 100.0);
    const auto o = compare(f, row, steps, 1e-3, j_scale);
    total.max_rel = std::max(total.max_rel, o.max_rel);
    total.checked += o.checked;
    total.skipped += o.skipped;
  }
  return total;
}

/// barrier_gradient (given mode) against differences of barrier_value.
inline Outcome check_barrier_gradient(const TariffProblem& problem, const Eigen::VectorXd& x, double mu,
                                      GradientMode mode = GradientMode::FullJacobian) {
  const auto pt = problem.evaluate(x, true);
  const Eigen::VectorXd g = problem.barrier_gradient(pt, mu, mode);
  std::vector<double> analytic(g.data(), g.data() + g.size());
  Eigen::VectorXd work = x;
  auto f = [&](std::size_t i, double h) {
    const auto idx = static_cast<Eigen::Index>(i);
    const double saved = work[idx];
    work[idx] = saved + h;
    const double v = problem.barrier_value(problem.evaluate(work, false), mu);
    work[idx] = saved;
    return v;
  };
  // Barrier values run to 1e3; steps much below 1e-5 relative are rounding-dominated.
  std::vector<double> steps(analytic.size());
  for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = 1e-5 * std::max(1e-2, std::abs(x[static_cast<Eigen::Index>(i)]));
  return compare(f, analytic, steps);
}

}  // namespace gradcheck
