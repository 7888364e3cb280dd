#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mcpst/tensor.hpp"

namespace mcpst::validation {

/// u(t) = Psi exp(-(kappa / C) Lambda t) Psi^T u0 for a symmetric Laplacian.
/// u0 may hold several columns (N x D).
Tensor heat_oracle(const Tensor& laplacian, const Tensor& u0, double kappa, double capacity,
                   double t_final);

/// Classical RK4 on dphi_k/dt = nu_k + gamma_k sum_j A_kj sin(phi_j - phi_k).
/// Returns unwrapped phases.
std::vector<double> kuramoto_oracle(const Tensor& adjacency, std::span<const double> phi0,
                                    std::span<const double> nu, std::span<const double> gamma,
                                    double t_final, std::size_t rk4_steps);
std::vector<double> kuramoto_oracle(const Tensor& adjacency, std::span<const double> phi0,
                                    std::span<const double> nu, double gamma, double t_final,
                                    std::size_t rk4_steps);

struct CheckRow {
  std::string check;
  std::string claim;
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
  bool skipped = false;
  double runtime_ms = 0.0;
};

struct ValidationReport {
  std::vector<CheckRow> rows;

  bool all_pass() const;
  void write_csv(const std::filesystem::path& path) const;
  void print_table(std::ostream& os) const;
};

inline constexpr double kOrderRatioLo = 0.40;
inline constexpr double kOrderRatioHi = 0.65;

/// Error against the heat oracle at K and 2K Euler steps over a fixed time;
/// passes when err(2K) / err(K) lies in [0.40, 0.65].
std::vector<CheckRow> check_diffusion_order(std::uint64_t seed, std::size_t n_nodes = 10,
                                            std::size_t k_steps = 8);
std::vector<CheckRow> check_sync_order(std::uint64_t seed, std::size_t n_nodes = 10,
                                       std::size_t k_steps = 10);

/// Projection error onto the first k eigenvectors against M / lambda_{k+1}
/// for smooth random signals on random connected graphs.
std::vector<CheckRow> check_spectral_truncation(std::uint64_t seed, std::size_t n_nodes = 12,
                                                std::size_t k = 4, std::size_t trials = 100);

/// Attention weights on the simplex and the three-way JS divergence in
/// [0, ln 3] across random inputs to randomly initialised models.
std::vector<CheckRow> check_consensus(std::uint64_t seed, std::size_t draws = 1000);

ValidationReport run_all(std::uint64_t seed);

}  // namespace mcpst::validation
