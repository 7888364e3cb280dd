#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mcpst/tensor.hpp"

namespace mcpst::graph {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  double weight = 1.0;
};

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Weighted sensor network with a dense adjacency matrix.
///
/// Duplicate edges have their weights summed. An asymmetric adjacency is
/// replaced by (A + A^T)/2 unless `keep_directed` is set.
class TrafficNetwork {
 public:
  static TrafficNetwork from_edges(std::size_t n_nodes, std::span<const Edge> edges,
                                   bool keep_directed = false);
  static TrafficNetwork from_adjacency(Tensor adjacency, bool keep_directed = false);

  std::size_t n_nodes() const noexcept { return n_; }
  const Tensor& adjacency() const noexcept { return adjacency_; }
  bool directed() const noexcept { return directed_; }
  /// Row sums of the adjacency.
  const std::vector<double>& degrees() const noexcept { return degrees_; }
  double max_degree() const;

 private:
  TrafficNetwork(Tensor adjacency, bool keep_directed);

  std::size_t n_ = 0;
  Tensor adjacency_;
  bool directed_ = false;
  std::vector<double> degrees_;
};

struct LaplacianPair {
  Tensor combinatorial;
  /// Absent for directed networks.
  std::optional<Tensor> normalized;
};

LaplacianPair laplacians(const TrafficNetwork& net);

/// D^{-1/2} A D^{-1/2}.
Tensor normalized_adjacency(const TrafficNetwork& net);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Tensor vectors;              // n x n, column i pairs with values[i]
};

/// Full decomposition of a symmetric matrix by Householder tridiagonalisation
/// and implicit-shift QL. Columns are sign-normalised (first entry with
/// |x| > 1e-10 positive); columns sharing an eigenvalue are ordered
/// lexicographically. Throws GraphError on a non-symmetric input.
EigenDecomposition symmetric_eigen(const Tensor& m);

struct SpectralBasis {
  std::vector<double> eigenvalues;
  Tensor eigenvectors;
  std::size_t k_retained = 0;
  double gap = 0.0;

  /// First k_retained eigenvector columns as an n x k matrix.
  Tensor retained() const;
};

SpectralBasis eigendecompose(const LaplacianPair& lap, std::size_t k);

}  // namespace mcpst::graph
