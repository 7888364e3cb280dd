#include <Eigen/Dense>
#include <cmath>

#include "mcpst/validation.hpp"

namespace mcpst::validation {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Tensor heat_oracle(const Tensor& laplacian, const Tensor& u0, double kappa, double capacity,
                   double t_final) {
  const std::size_t n = laplacian.dim(0);
  if (laplacian.rank() != 2 || laplacian.dim(1) != n || u0.dim(0) != n) {
    throw ShapeError("heat_oracle: Laplacian " + shape_str(laplacian.shape()) + " vs state " +
                     shape_str(u0.shape()));
  }
  const std::size_t cols = u0.size() / n;
  const Eigen::Map<const RowMat> l(laplacian.data(), static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(n));
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(l)};
  const Eigen::VectorXd decay =
      (-(kappa / capacity) * t_final * es.eigenvalues().array()).exp().matrix();
  const Eigen::MatrixXd& psi = es.eigenvectors();
  const Eigen::Map<const RowMat> u(u0.data(), static_cast<Eigen::Index>(n),
                                   static_cast<Eigen::Index>(cols));
  const Eigen::MatrixXd out = psi * decay.asDiagonal() * (psi.transpose() * u);
  Tensor result(u0.shape());
  Eigen::Map<RowMat>(result.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols)) =
      out;
  return result;
}

std::vector<double> kuramoto_oracle(const Tensor& adjacency, std::span<const double> phi0,
                                    std::span<const double> nu, std::span<const double> gamma,
                                    double t_final, std::size_t rk4_steps) {
  const std::size_t n = phi0.size();
  if (adjacency.rank() != 2 || adjacency.dim(0) != n || adjacency.dim(1) != n || nu.size() != n ||
      gamma.size() != n || rk4_steps == 0) {
    throw ShapeError("kuramoto_oracle: inconsistent sizes");
  }
  auto rhs = [&](const std::vector<double>& p, std::vector<double>& d) {
    for (std::size_t k = 0; k < n; ++k) {
      double pull = 0.0;
      for (std::size_t j = 0; j < n; ++j) pull += adjacency[k * n + j] * std::sin(p[j] - p[k]);
      d[k] = nu[k] + gamma[k] * pull;
    }
  };
  const double h = t_final / static_cast<double>(rk4_steps);
  std::vector<double> phi(phi0.begin(), phi0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (std::size_t s = 0; s < rk4_steps; ++s) {
    rhs(phi, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phi[i] + 0.5 * h * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phi[i] + 0.5 * h * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phi[i] + h * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) {
      phi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return phi;
}

std::vector<double> kuramoto_oracle(const Tensor& adjacency, std::span<const double> phi0,
                                    std::span<const double> nu, double gamma, double t_final,
                                    std::size_t rk4_steps) {
  const std::vector<double> g(phi0.size(), gamma);
  return kuramoto_oracle(adjacency, phi0, nu, g, t_final, rk4_steps);
}

}  // namespace mcpst::validation
