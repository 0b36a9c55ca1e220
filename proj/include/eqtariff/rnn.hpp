#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "eqtariff/domain.hpp"
#include "eqtariff/response_model.hpp"
#include "eqtariff/synth.hpp"

namespace eqtariff {

enum class Activation { Relu, Selu, Identity };

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double activation(Activation tag, double x);
/// Derivative. ReLU uses 0 at the kink; SELU uses the left branch at x = 0.
double activation_prime(Activation tag, double x);

std::string to_string(Activation tag);
Activation activation_from_string(const std::string& name);

/// Elman-style stacked recurrent network mapping an hourly price sequence to
/// an hourly demand-change sequence:
///
///   h_t^1 = act_1(p_t W_in^1 + h_{t-1}^1 W_rec^1 + b^1)
///   h_t^l = act_l(h_t^{l-1} W_in^l + h_{t-1}^l W_rec^l + b^l)
///   y_t   = act_out(h_t^L w_out + b_out),   h_0^l = 0.
///
/// All parameters are shared over time and stored in one flat vector. The
/// network runs on z-scored inputs/outputs; `norm` maps to $/kWh and kWh.
class RnnModel final : public DemandResponseModel {
 public:
  RnnModel() = default;
  RnnModel(std::vector<std::size_t> widths, std::vector<Activation> activations,
           Activation output_activation = Activation::Identity);

  std::size_t n_layers() const noexcept { return widths_.size(); }
  std::size_t width(std::size_t l) const { return widths_.at(l); }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  const std::vector<Activation>& activations() const noexcept { return activations_; }
  Activation output_activation() const noexcept { return output_activation_; }
  std::size_t n_params() const noexcept { return params_.size(); }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  // Parameter blocks, row-major: w_in(l)[i * width(l) + j], w_rec(l)[i * width(l) + j].
  std::span<double> w_in(std::size_t l);
  std::span<double> w_rec(std::size_t l);
  std::span<double> bias(std::size_t l);
  std::span<double> w_out();
  double& b_out();
  std::span<const double> w_in(std::size_t l) const;
  std::span<const double> w_rec(std::size_t l) const;
  std::span<const double> bias(std::size_t l) const;
  std::span<const double> w_out() const;
  double b_out() const;

  /// Offsets of each block inside params(); the gradient uses the same layout.
  struct Layout {
    std::vector<std::size_t> w_in, w_rec, bias;
    std::size_t w_out = 0;
    std::size_t b_out = 0;
  };
  const Layout& layout() const noexcept { return layout_; }

  NormStats norm;

  /// Uniform(+-sqrt(1/fan_in)) weights from a seeded stream.
  void init_uniform(std::uint64_t seed);

  /// Network output in normalized units.
  std::vector<double> forward_normalized(std::span<const double> z) const;
  /// Demand change in kWh for a price profile.
  DemandProfile forward(const PriceProfile& price) const;
  /// Same as forward() on raw values; throws ShapeError on empty input.
  std::vector<double> forward(std::span<const double> price) const;

  /// T x T causal Jacobian d dd_t / d p_s in physical units.
  Eigen::MatrixXd input_jacobian(std::span<const double> price) const;

  Response respond(std::span<const double> price, bool with_jacobian) const override;

  friend bool operator==(const RnnModel& a, const RnnModel& b) {
    return a.widths_ == b.widths_ && a.activations_ == b.activations_ &&
           a.output_activation_ == b.output_activation_ && a.params_ == b.params_ &&
           a.norm == b.norm;
  }

 private:
  std::vector<std::size_t> widths_;
  std::vector<Activation> activations_;
  Activation output_activation_ = Activation::Identity;
  std::vector<double> params_;
  Layout layout_;

  void forward_mode(std::span<const double> z, std::vector<double>& y,
                    Eigen::MatrixXd* jac) const;
};

/// Squared-error loss of one sample in normalized units, averaged over hours.
double sample_loss(const RnnModel& model, const PriceProfile& price, const DemandProfile& dd);

/// Exact reverse-mode (BPTT) gradient of sample_loss with respect to params().
std::vector<double> param_gradient(const RnnModel& model, const PriceProfile& price,
                                   const DemandProfile& dd);

/// Mean of per-sample gradients.
std::vector<double> batch_gradient(const RnnModel& model, std::span<const PriceProfile> prices,
                                   std::span<const DemandProfile> dds);

struct TrainConfig {
  std::vector<std::size_t> hidden = {10, 10};
  std::vector<Activation> activations = {Activation::Relu, Activation::Selu};
  Activation output_activation = Activation::Identity;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int epochs = 1500;
  std::size_t batch_size = 8;  // 0 = full training split per step
  int patience = 200;
  std::uint64_t seed = 7;

  void validate() const;
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, normalized MSE
  std::vector<double> val_loss;    // per epoch, normalized MSE (empty without validation data)
  int epochs_run = 0;
  int best_epoch = 0;  // 0 = initial weights
  bool stopped_early = false;
  double val_mse = 0.0;   // normalized, at the returned weights
  double val_rmse = 0.0;  // kWh
  double val_mape = 0.0;  // fraction, over entries with |actual| above a floor
  /// Validation residuals (actual - predicted, kWh), [sample][hour].
  std::vector<std::vector<double>> residuals;
};

struct TrainedModel {
  RnnModel model;
  TrainReport report;
};

/// Adam on the mean squared error of the group's training split, with
/// early stopping on validation MSE (best weights are returned).
TrainedModel train(const GroupSamples& samples, const TrainConfig& config);

/// Structured-text checkpoint; save -> load reproduces the model bit for bit.
void save_model(const RnnModel& model, const std::filesystem::path& path);
RnnModel load_model(const std::filesystem::path& path);

}  // namespace eqtariff
