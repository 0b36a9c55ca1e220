#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace eqtariff {

/// Predicted demand change and its price Jacobian J(t, s) = d dd_t / d p_s.
struct Response {
  std::vector<double> dd;
  Eigen::MatrixXd jacobian;  // empty unless requested
};

/// Price-to-demand-change map used inside tariff optimization. Implementations
/// must be pure functions of the price so they can be shared across threads.
class DemandResponseModel {
 public:
  virtual ~DemandResponseModel() = default;
  virtual Response respond(std::span<const double> price, bool with_jacobian) const = 0;

  std::vector<double> predict(std::span<const double> price) const {
    return respond(price, false).dd;
  }
  Eigen::MatrixXd jacobian(std::span<const double> price) const {
    return respond(price, true).jacobian;
  }
};

/// Demand that does not react to price.
class InelasticResponse final : public DemandResponseModel {
 public:
  Response respond(std::span<const double> price, bool with_jacobian) const override {
    Response r;
    r.dd.assign(price.size(), 0.0);
    if (with_jacobian) {
      const auto n = static_cast<Eigen::Index>(price.size());
      r.jacobian = Eigen::MatrixXd::Zero(n, n);
    }
    return r;
  }
};

/// dd = A (p - p_ref) + offset. Handy for tests and sanity runs.
class AffineResponse final : public DemandResponseModel {
 public:
  AffineResponse(Eigen::MatrixXd slope, Eigen::VectorXd reference, Eigen::VectorXd offset)
      : slope_(std::move(slope)), reference_(std::move(reference)), offset_(std::move(offset)) {}

  Response respond(std::span<const double> price, bool with_jacobian) const override {
    const Eigen::Map<const Eigen::VectorXd> p(price.data(), static_cast<Eigen::Index>(price.size()));
    const Eigen::VectorXd dd = slope_ * (p - reference_) + offset_;
    Response r;
    r.dd.assign(dd.data(), dd.data() + dd.size());
    if (with_jacobian) r.jacobian = slope_;
    return r;
  }

 private:
  Eigen::MatrixXd slope_;
  Eigen::VectorXd reference_;
  Eigen::VectorXd offset_;
};

}  // namespace eqtariff
