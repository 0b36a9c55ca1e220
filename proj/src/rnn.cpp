#include "eqtariff/rnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

namespace eqtariff {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

double activation(Activation tag, double x) {
  switch (tag) {
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Selu:
      return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x);
    case Activation::Identity:
      return x;
  }
  return x;
}

double activation_prime(Activation tag, double x) {
  switch (tag) {
    case Activation::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::Selu:
      return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
    case Activation::Identity:
      return 1.0;
  }
  return 1.0;
}

std::string to_string(Activation tag) {
  switch (tag) {
    case Activation::Relu:
      return "relu";
    case Activation::Selu:
      return "selu";
    case Activation::Identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "selu") return Activation::Selu;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

RnnModel::RnnModel(std::vector<std::size_t> widths, std::vector<Activation> activations,
                   Activation output_activation)
    : widths_(std::move(widths)),
      activations_(std::move(activations)),
      output_activation_(output_activation) {
  if (widths_.empty()) throw ShapeError("rnn: need at least one hidden layer");
  if (widths_.size() != activations_.size()) {
    throw ShapeError("rnn: one activation per hidden layer required");
  }
  std::size_t offset = 0;
  std::size_t fan_in = 1;  // scalar price per step
  for (std::size_t l = 0; l < widths_.size(); ++l) {
    const std::size_t w = widths_[l];
    if (w == 0) throw ShapeError("rnn: zero-width layer");
    layout_.w_in.push_back(offset);
    offset += fan_in * w;
    layout_.w_rec.push_back(offset);
    offset += w * w;
    layout_.bias.push_back(offset);
    offset += w;
    fan_in = w;
  }
  layout_.w_out = offset;
  offset += widths_.back();
  layout_.b_out = offset;
  offset += 1;
  params_.assign(offset, 0.0);
}

namespace {
std::size_t fan_in_of(const std::vector<std::size_t>& widths, std::size_t l) {
  return l == 0 ? 1 : widths[l - 1];
}
}  // namespace

std::span<double> RnnModel::w_in(std::size_t l) {
  return {params_.data() + layout_.w_in.at(l), fan_in_of(widths_, l) * widths_[l]};
}
std::span<double> RnnModel::w_rec(std::size_t l) {
  return {params_.data() + layout_.w_rec.at(l), widths_[l] * widths_[l]};
}
std::span<double> RnnModel::bias(std::size_t l) {
  return {params_.data() + layout_.bias.at(l), widths_[l]};
}
std::span<double> RnnModel::w_out() { return {params_.data() + layout_.w_out, widths_.back()}; }
double& RnnModel::b_out() { return params_[layout_.b_out]; }

std::span<const double> RnnModel::w_in(std::size_t l) const {
  return {params_.data() + layout_.w_in.at(l), fan_in_of(widths_, l) * widths_[l]};
}
std::span<const double> RnnModel::w_rec(std::size_t l) const {
  return {params_.data() + layout_.w_rec.at(l), widths_[l] * widths_[l]};
}
std::span<const double> RnnModel::bias(std::size_t l) const {
  return {params_.data() + layout_.bias.at(l), widths_[l]};
}
std::span<const double> RnnModel::w_out() const {
  return {params_.data() + layout_.w_out, widths_.back()};
}
double RnnModel::b_out() const { return params_[layout_.b_out]; }

void RnnModel::init_uniform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](std::span<double> block, std::size_t fan_in) {
    const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : block) v = u(rng);
  };
  for (std::size_t l = 0; l < n_layers(); ++l) {
    fill(w_in(l), fan_in_of(widths_, l));
    fill(w_rec(l), widths_[l]);
    fill(bias(l), widths_[l]);
  }
  fill(w_out(), widths_.back());
  b_out() = 0.0;
}

namespace {

/// Activations of one forward pass, kept for backpropagation.
struct Trace {
  std::vector<std::vector<double>> pre;  // [l][t * width + j]
  std::vector<std::vector<double>> h;    // [l][t * width + j]
  std::vector<double> out_pre;           // [t]
  std::vector<double> y;                 // [t]
};

void run_forward(const RnnModel& m, std::span<const double> z, Trace& tr) {
  const std::size_t horizon = z.size();
  const std::size_t n_layers = m.n_layers();
  tr.pre.resize(n_layers);
  tr.h.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    tr.pre[l].assign(horizon * m.width(l), 0.0);
    tr.h[l].assign(horizon * m.width(l), 0.0);
  }
  tr.out_pre.assign(horizon, 0.0);
  tr.y.assign(horizon, 0.0);

  const auto& acts = m.activations();
  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::size_t w = m.width(l);
      const auto win = m.w_in(l);
      const auto wrec = m.w_rec(l);
      const auto b = m.bias(l);
      double* pre = tr.pre[l].data() + t * w;
      std::copy(b.begin(), b.end(), pre);
      if (l == 0) {
        for (std::size_t j = 0; j < w; ++j) pre[j] += z[t] * win[j];
      } else {
        const std::size_t wi = m.width(l - 1);
        const double* x = tr.h[l - 1].data() + t * wi;
        for (std::size_t i = 0; i < wi; ++i) {
          const double xi = x[i];
          const double* row = win.data() + i * w;
          for (std::size_t j = 0; j < w; ++j) pre[j] += xi * row[j];
        }
      }
      if (t > 0) {
        const double* hp = tr.h[l].data() + (t - 1) * w;
        for (std::size_t i = 0; i < w; ++i) {
          const double hi = hp[i];
          const double* row = wrec.data() + i * w;
          for (std::size_t j = 0; j < w; ++j) pre[j] += hi * row[j];
        }
      }
      double* h = tr.h[l].data() + t * w;
      for (std::size_t j = 0; j < w; ++j) h[j] = activation(acts[l], pre[j]);
    }
    const std::size_t wl = m.widths().back();
    const double* hl = tr.h.back().data() + t * wl;
    const auto wout = m.w_out();
    double a = m.b_out();
    for (std::size_t i = 0; i < wl; ++i) a += hl[i] * wout[i];
    tr.out_pre[t] = a;
    tr.y[t] = activation(m.output_activation(), a);
  }
}

/// Adds d loss / d params to `grad` given d loss / d y (same length as z).
void run_backward(const RnnModel& m, std::span<const double> z, const Trace& tr,
                  std::span<const double> dy, std::span<double> grad) {
  const std::size_t horizon = z.size();
  const std::size_t n_layers = m.n_layers();
  const auto& layout = m.layout();
  const auto& acts = m.activations();
  // carry[l]: d loss / d h_t^l arriving from step t+1 through W_rec.
  std::vector<std::vector<double>> carry(n_layers);
  std::vector<std::vector<double>> dh(n_layers);
  std::vector<std::vector<double>> delta(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    carry[l].assign(m.width(l), 0.0);
    dh[l].assign(m.width(l), 0.0);
    delta[l].assign(m.width(l), 0.0);
  }
  const auto wout = m.w_out();
  const std::size_t wl = m.widths().back();

  for (std::size_t step = horizon; step-- > 0;) {
    const double dout = dy[step] * activation_prime(m.output_activation(), tr.out_pre[step]);
    const double* hl = tr.h.back().data() + step * wl;
    for (std::size_t i = 0; i < wl; ++i) grad[layout.w_out + i] += dout * hl[i];
    grad[layout.b_out] += dout;

    for (std::size_t i = 0; i < wl; ++i) dh[n_layers - 1][i] = dout * wout[i];

    for (std::size_t l = n_layers; l-- > 0;) {
      const std::size_t w = m.width(l);
      auto& d = delta[l];
      const double* pre = tr.pre[l].data() + step * w;
      for (std::size_t j = 0; j < w; ++j) {
        d[j] = (dh[l][j] + carry[l][j]) * activation_prime(acts[l], pre[j]);
        grad[layout.bias[l] + j] += d[j];
      }
      // Input weights and the gradient flowing to the layer below.
      const auto win = m.w_in(l);
      if (l == 0) {
        for (std::size_t j = 0; j < w; ++j) grad[layout.w_in[0] + j] += z[step] * d[j];
      } else {
        const std::size_t wi = m.width(l - 1);
        const double* x = tr.h[l - 1].data() + step * wi;
        auto& below = dh[l - 1];
        for (std::size_t i = 0; i < wi; ++i) {
          const double* row = win.data() + i * w;
          double* g = grad.data() + layout.w_in[l] + i * w;
          double acc = 0.0;
          for (std::size_t j = 0; j < w; ++j) {
            g[j] += x[i] * d[j];
            acc += row[j] * d[j];
          }
          below[i] = acc;
        }
      }
      // Recurrent weights and the carry into step - 1.
      const auto wrec = m.w_rec(l);
      if (step > 0) {
        const double* hp = tr.h[l].data() + (step - 1) * w;
        for (std::size_t i = 0; i < w; ++i) {
          const double* row = wrec.data() + i * w;
          double* g = grad.data() + layout.w_rec[l] + i * w;
          double acc = 0.0;
          for (std::size_t j = 0; j < w; ++j) {
            g[j] += hp[i] * d[j];
            acc += row[j] * d[j];
          }
          carry[l][i] = acc;
        }
      }
    }
  }
}

std::vector<double> normalize_price(const NormStats& s, std::span<const double> p) {
  s.check(p.size());
  std::vector<double> z(p.size());
  for (std::size_t t = 0; t < p.size(); ++t) z[t] = (p[t] - s.p_mean(t)) / s.p_std(t);
  return z;
}

std::vector<double> normalize_dd(const NormStats& s, std::span<const double> d) {
  std::vector<double> z(d.size());
  for (std::size_t t = 0; t < d.size(); ++t) z[t] = (d[t] - s.d_mean(t)) / s.d_std(t);
  return z;
}

void denormalize_dd(const NormStats& s, std::vector<double>& y) {
  for (std::size_t t = 0; t < y.size(); ++t) y[t] = s.d_mean(t) + s.d_std(t) * y[t];
}

/// Chain factors of the normalization: J_phys(t, s) = d_std(t) * J_norm(t, s) / p_std(s).
void denormalize_jacobian(const NormStats& s, Eigen::MatrixXd& jac) {
  for (Eigen::Index t = 0; t < jac.rows(); ++t) {
    for (Eigen::Index k = 0; k <= t; ++k) {
      jac(t, k) *= s.d_std(static_cast<std::size_t>(t)) / s.p_std(static_cast<std::size_t>(k));
    }
  }
}

void require_params(const RnnModel& m) {
  if (m.n_params() == 0) throw StateError("rnn: model has no parameters");
}

}  // namespace

std::vector<double> RnnModel::forward_normalized(std::span<const double> z) const {
  require_params(*this);
  Trace tr;
  run_forward(*this, z, tr);
  return tr.y;
}

std::vector<double> RnnModel::forward(std::span<const double> price) const {
  if (price.empty()) throw ShapeError("rnn: empty price sequence");
  auto y = forward_normalized(normalize_price(norm, price));
  denormalize_dd(norm, y);
  return y;
}

DemandProfile RnnModel::forward(const PriceProfile& price) const {
  return DemandProfile::change(forward(price.values()));
}

void RnnModel::forward_mode(std::span<const double> z, std::vector<double>& y,
                            Eigen::MatrixXd* jac) const {
  require_params(*this);
  const std::size_t horizon = z.size();
  const std::size_t n = n_layers();
  // Hidden state and its tangents d h_t^l / d z_s, stored [i * T + s].
  std::vector<std::vector<double>> h(n), h_prev(n), tan(n), tan_prev(n);
  for (std::size_t l = 0; l < n; ++l) {
    h[l].assign(widths_[l], 0.0);
    h_prev[l].assign(widths_[l], 0.0);
    if (jac) {
      tan[l].assign(widths_[l] * horizon, 0.0);
      tan_prev[l].assign(widths_[l] * horizon, 0.0);
    }
  }
  std::vector<double> pre;
  y.assign(horizon, 0.0);
  if (jac) *jac = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(horizon),
                                        static_cast<Eigen::Index>(horizon));

  for (std::size_t t = 0; t < horizon; ++t) {
    for (std::size_t l = 0; l < n; ++l) {
      const std::size_t w = widths_[l];
      const auto win = w_in(l);
      const auto wrec = w_rec(l);
      const auto b = bias(l);
      pre.assign(b.begin(), b.end());
      const std::size_t wi = l == 0 ? 1 : widths_[l - 1];
      for (std::size_t i = 0; i < wi; ++i) {
        const double xi = l == 0 ? z[t] : h[l - 1][i];
        for (std::size_t j = 0; j < w; ++j) pre[j] += xi * win[i * w + j];
      }
      for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = 0; j < w; ++j) pre[j] += h_prev[l][i] * wrec[i * w + j];
      }
      if (jac) {
        auto& tl = tan[l];
        std::fill(tl.begin(), tl.end(), 0.0);
        // d pre_j / d z_s for s <= t.
        for (std::size_t j = 0; j < w; ++j) {
          double* out = tl.data() + j * horizon;
          if (l == 0) {
            out[t] += win[j];
          } else {
            for (std::size_t i = 0; i < wi; ++i) {
              const double wij = win[i * w + j];
              const double* src = tan[l - 1].data() + i * horizon;
              for (std::size_t s = 0; s <= t; ++s) out[s] += wij * src[s];
            }
          }
          for (std::size_t i = 0; i < w; ++i) {
            const double wij = wrec[i * w + j];
            const double* src = tan_prev[l].data() + i * horizon;
            for (std::size_t s = 0; s < t; ++s) out[s] += wij * src[s];
          }
          const double slope = activation_prime(activations_[l], pre[j]);
          for (std::size_t s = 0; s <= t; ++s) out[s] *= slope;
        }
      }
      for (std::size_t j = 0; j < w; ++j) h[l][j] = activation(activations_[l], pre[j]);
    }
    const auto wout = w_out();
    const std::size_t wl = widths_.back();
    double a = b_out();
    for (std::size_t i = 0; i < wl; ++i) a += h[n - 1][i] * wout[i];
    y[t] = activation(output_activation_, a);
    if (jac) {
      const double slope = activation_prime(output_activation_, a);
      for (std::size_t s = 0; s <= t; ++s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < wl; ++i) acc += wout[i] * tan[n - 1][i * horizon + s];
        (*jac)(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = slope * acc;
      }
    }
    std::swap(h, h_prev);
    if (jac) std::swap(tan, tan_prev);
    // h_prev now holds step t; h is scratch for the next step.
  }
}

Eigen::MatrixXd RnnModel::input_jacobian(std::span<const double> price) const {
  if (price.empty()) throw ShapeError("rnn: empty price sequence");
  std::vector<double> y;
  Eigen::MatrixXd jac;
  forward_mode(normalize_price(norm, price), y, &jac);
  denormalize_jacobian(norm, jac);
  return jac;
}

Response RnnModel::respond(std::span<const double> price, bool with_jacobian) const {
  if (price.empty()) throw ShapeError("rnn: empty price sequence");
  Response r;
  forward_mode(normalize_price(norm, price), r.dd, with_jacobian ? &r.jacobian : nullptr);
  denormalize_dd(norm, r.dd);
  if (with_jacobian) denormalize_jacobian(norm, r.jacobian);
  return r;
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

namespace {

double loss_and_grad(const RnnModel& m, std::span<const double> z, std::span<const double> target,
                     Trace& tr, std::vector<double>& dy, std::span<double> grad) {
  run_forward(m, z, tr);
  const double inv_t = 1.0 / static_cast<double>(z.size());
  double loss = 0.0;
  dy.resize(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) {
    const double e = tr.y[t] - target[t];
    loss += e * e;
    dy[t] = 2.0 * e * inv_t;
  }
  if (!grad.empty()) run_backward(m, z, tr, dy, grad);
  return loss * inv_t;
}

void check_sample(const PriceProfile& price, const DemandProfile& dd) {
  if (price.size() != dd.size() || price.size() == 0) {
    throw ShapeError("rnn: price and demand-change lengths differ");
  }
}

}  // namespace

double sample_loss(const RnnModel& model, const PriceProfile& price, const DemandProfile& dd) {
  check_sample(price, dd);
  require_params(model);
  const auto z = normalize_price(model.norm, price.values());
  const auto target = normalize_dd(model.norm, dd.values());
  Trace tr;
  std::vector<double> dy;
  return loss_and_grad(model, z, target, tr, dy, {});
}

std::vector<double> param_gradient(const RnnModel& model, const PriceProfile& price,
                                   const DemandProfile& dd) {
  check_sample(price, dd);
  require_params(model);
  const auto z = normalize_price(model.norm, price.values());
  const auto target = normalize_dd(model.norm, dd.values());
  std::vector<double> grad(model.n_params(), 0.0);
  Trace tr;
  std::vector<double> dy;
  loss_and_grad(model, z, target, tr, dy, grad);
  return grad;
}

std::vector<double> batch_gradient(const RnnModel& model, std::span<const PriceProfile> prices,
                                   std::span<const DemandProfile> dds) {
  if (prices.size() != dds.size() || prices.empty()) {
    throw ShapeError("rnn: batch needs matching, non-empty price and demand-change lists");
  }
  std::vector<double> grad(model.n_params(), 0.0);
  Trace tr;
  std::vector<double> dy;
  for (std::size_t k = 0; k < prices.size(); ++k) {
    check_sample(prices[k], dds[k]);
    const auto z = normalize_price(model.norm, prices[k].values());
    const auto target = normalize_dd(model.norm, dds[k].values());
    loss_and_grad(model, z, target, tr, dy, grad);
  }
  const double inv = 1.0 / static_cast<double>(prices.size());
  for (auto& g : grad) g *= inv;
  return grad;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (epochs < 0) throw ConfigError("train: epochs must be non-negative");
  if (hidden.empty() || hidden.size() != activations.size()) {
    throw ConfigError("train: need one activation per hidden layer");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be positive");
  if (patience < 1) throw ConfigError("train: patience must be at least 1");
}

namespace {

struct NormalizedSet {
  std::size_t horizon = 0;
  std::vector<double> z;       // [k * T + t]
  std::vector<double> target;  // [k * T + t]
  std::size_t size() const { return horizon == 0 ? 0 : z.size() / horizon; }
  std::span<const double> input(std::size_t k) const { return {z.data() + k * horizon, horizon}; }
  std::span<const double> label(std::size_t k) const {
    return {target.data() + k * horizon, horizon};
  }
};

NormalizedSet normalize_range(const GroupSamples& s, const NormStats& stats, std::size_t begin,
                              std::size_t end) {
  NormalizedSet out;
  out.horizon = s.prices.front().size();
  for (std::size_t k = begin; k < end; ++k) {
    check_sample(s.prices[k], s.dd[k]);
    const auto z = normalize_price(stats, s.prices[k].values());
    const auto y = normalize_dd(stats, s.dd[k].values());
    out.z.insert(out.z.end(), z.begin(), z.end());
    out.target.insert(out.target.end(), y.begin(), y.end());
  }
  return out;
}

double evaluate_mse(const RnnModel& m, const NormalizedSet& set, Trace& tr) {
  double total = 0.0;
  for (std::size_t k = 0; k < set.size(); ++k) {
    run_forward(m, set.input(k), tr);
    const auto label = set.label(k);
    for (std::size_t t = 0; t < set.horizon; ++t) {
      const double e = tr.y[t] - label[t];
      total += e * e;
    }
  }
  return total / static_cast<double>(set.z.size());
}

void fill_validation_metrics(const RnnModel& m, const NormalizedSet& val, TrainReport& report) {
  report.residuals.clear();
  if (val.size() == 0) return;
  Trace tr;
  const auto& s = m.norm;
  double sq = 0.0;
  double ape = 0.0;
  std::size_t ape_count = 0;
  double sq_norm = 0.0;
  for (std::size_t k = 0; k < val.size(); ++k) {
    run_forward(m, val.input(k), tr);
    const auto label = val.label(k);
    std::vector<double> res(val.horizon);
    for (std::size_t t = 0; t < val.horizon; ++t) {
      const double actual = s.d_mean(t) + s.d_std(t) * label[t];
      const double pred = s.d_mean(t) + s.d_std(t) * tr.y[t];
      // Entries this close to zero are excluded from MAPE.
      const double floor = 0.05 * s.d_std(t);
      res[t] = actual - pred;
      sq += res[t] * res[t];
      const double en = tr.y[t] - label[t];
      sq_norm += en * en;
      if (std::abs(actual) > floor) {
        ape += std::abs(res[t] / actual);
        ++ape_count;
      }
    }
    report.residuals.push_back(std::move(res));
  }
  const auto n = static_cast<double>(val.z.size());
  report.val_mse = sq_norm / n;
  report.val_rmse = std::sqrt(sq / n);
  report.val_mape = ape_count ? ape / static_cast<double>(ape_count) : 0.0;
}

}  // namespace

TrainedModel train(const GroupSamples& samples, const TrainConfig& config) {
  config.validate();
  if (samples.n_train == 0 || samples.prices.empty()) {
    throw StateError("train: group " + std::to_string(samples.group_id) + " has no training samples");
  }
  TrainedModel out;
  RnnModel& model = out.model;
  TrainReport& report = out.report;
  model = RnnModel(config.hidden, config.activations, config.output_activation);
  model.init_uniform(config.seed);
  model.norm = samples.norm_stats();

  const NormalizedSet train_set = normalize_range(samples, model.norm, 0, samples.n_train);
  const NormalizedSet val_set = normalize_range(samples, model.norm, samples.n_train, samples.size());
  const bool has_val = val_set.size() > 0;

  const std::size_t n_train = train_set.size();
  const std::size_t batch = config.batch_size == 0 ? n_train : std::min(config.batch_size, n_train);
  const std::size_t n_params = model.n_params();
  std::vector<double> grad(n_params), m1(n_params, 0.0), m2(n_params, 0.0);
  std::vector<double> best = std::vector<double>(model.params().begin(), model.params().end());
  Trace tr;
  std::vector<double> dy;
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  double best_val = has_val ? evaluate_mse(model, val_set, tr) : std::numeric_limits<double>::infinity();
  long long step = 0;
  int since_best = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n_train) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t stop = std::min(n_train, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t idx = order[k];
        epoch_loss += loss_and_grad(model, train_set.input(idx), train_set.label(idx), tr, dy, grad);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      auto params = model.params();
      for (std::size_t i = 0; i < n_params; ++i) {
        const double g = grad[i] * inv;
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g;
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g * g;
        params[i] -= config.learning_rate * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + config.adam_epsilon);
      }
    }
    epoch_loss /= static_cast<double>(n_train);
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError("train: group " + std::to_string(samples.group_id) +
                          " diverged at epoch " + std::to_string(epoch) +
                          "; try a lower learning rate");
    }
    report.train_loss.push_back(epoch_loss);
    report.epochs_run = epoch;
    if (has_val) {
      const double v = evaluate_mse(model, val_set, tr);
      if (!std::isfinite(v)) {
        throw TrainingError("train: group " + std::to_string(samples.group_id) +
                            " produced non-finite validation loss at epoch " +
                            std::to_string(epoch) + "; try a lower learning rate");
      }
      report.val_loss.push_back(v);
      if (v < best_val) {
        best_val = v;
        report.best_epoch = epoch;
        best.assign(model.params().begin(), model.params().end());
        since_best = 0;
      } else if (++since_best >= config.patience) {
        report.stopped_early = true;
        break;
      }
    } else {
      report.best_epoch = epoch;
    }
  }
  if (has_val) std::copy(best.begin(), best.end(), model.params().begin());
  fill_validation_metrics(model, val_set, report);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kFormat = "eqtariff-rnn";
constexpr int kVersion = 1;
}  // namespace

void save_model(const RnnModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["input_width"] = 1;
  j["widths"] = model.widths();
  std::vector<std::string> acts;
  for (auto a : model.activations()) acts.push_back(to_string(a));
  j["activations"] = acts;
  j["output_activation"] = to_string(model.output_activation());
  j["norm"] = {{"price_mean", model.norm.price_mean},
               {"price_std", model.norm.price_std},
               {"dd_mean", model.norm.dd_mean},
               {"dd_std", model.norm.dd_std}};
  j["params"] = std::vector<double>(model.params().begin(), model.params().end());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model checkpoint '" + path.string() + "'");
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

RnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read model checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format").get<std::string>() != kFormat) {
      throw ParseError(path.string() + ": not an eqtariff model checkpoint", 0, 0);
    }
    if (j.at("version").get<int>() != kVersion) {
      throw ParseError(path.string() + ": unsupported checkpoint version", 0, 0);
    }
    if (j.at("input_width").get<int>() != 1) {
      throw ParseError(path.string() + ": only scalar per-step inputs are supported", 0, 0);
    }
    std::vector<Activation> acts;
    for (const auto& a : j.at("activations")) acts.push_back(activation_from_string(a.get<std::string>()));
    RnnModel m(j.at("widths").get<std::vector<std::size_t>>(), acts,
               activation_from_string(j.at("output_activation").get<std::string>()));
    const auto& n = j.at("norm");
    m.norm.price_mean = n.at("price_mean").get<std::vector<double>>();
    m.norm.price_std = n.at("price_std").get<std::vector<double>>();
    m.norm.dd_mean = n.at("dd_mean").get<std::vector<double>>();
    m.norm.dd_std = n.at("dd_std").get<std::vector<double>>();
    try {
      m.norm.check(m.norm.price_mean.empty() ? m.norm.dd_mean.size() : m.norm.price_mean.size());
    } catch (const ShapeError& e) {
      throw ParseError(path.string() + ": " + e.what(), 0, 0);
    }
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != m.n_params()) {
      throw ParseError(path.string() + ": parameter count does not match layer shapes", 0, 0);
    }
    std::copy(params.begin(), params.end(), m.params().begin());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": malformed checkpoint (" + e.what() + ")", 0, 0);
  }
}

}  // namespace eqtariff
