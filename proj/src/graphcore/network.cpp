#include "mcpst/graphcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mcpst::graph {

TrafficNetwork TrafficNetwork::from_edges(std::size_t n_nodes, std::span<const Edge> edges,
                                          bool keep_directed) {
  if (n_nodes == 0) throw GraphError("network needs at least one node");
  Tensor a({n_nodes, n_nodes});
  for (const Edge& e : edges) {
    if (e.src >= n_nodes || e.dst >= n_nodes) {
      throw GraphError("edge (" + std::to_string(e.src) + ", " + std::to_string(e.dst) +
                       ") references a node outside [0, " + std::to_string(n_nodes) + ")");
    }
    if (e.src == e.dst) throw GraphError("self-loop on node " + std::to_string(e.src));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw GraphError("edge weight must be positive and finite");
    }
    mat(a, e.src, e.dst) += e.weight;
  }
  return TrafficNetwork(std::move(a), keep_directed);
}

TrafficNetwork TrafficNetwork::from_adjacency(Tensor adjacency, bool keep_directed) {
  return TrafficNetwork(std::move(adjacency), keep_directed);
}

TrafficNetwork::TrafficNetwork(Tensor adjacency, bool keep_directed) {
  if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1) || adjacency.dim(0) == 0) {
    throw GraphError("adjacency must be a non-empty square matrix, got " +
                     shape_str(adjacency.shape()));
  }
  n_ = adjacency.dim(0);
  for (std::size_t i = 0; i < n_; ++i) {
    if (mat(adjacency, i, i) != 0.0) throw GraphError("self-loop on node " + std::to_string(i));
    for (std::size_t j = 0; j < n_; ++j) {
      const double w = mat(adjacency, i, j);
      if (!(w >= 0.0) || !std::isfinite(w)) throw GraphError("adjacency entries must be >= 0");
    }
  }
  bool symmetric = true;
  for (std::size_t i = 0; i < n_ && symmetric; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) {
      if (mat(adjacency, i, j) != mat(adjacency, j, i)) {
        symmetric = false;
        break;
      }
    }
  }
  if (!symmetric && !keep_directed) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        const double avg = 0.5 * (mat(adjacency, i, j) + mat(adjacency, j, i));
        mat(adjacency, i, j) = avg;
        mat(adjacency, j, i) = avg;
      }
    }
    symmetric = true;
  }
  directed_ = !symmetric;
  adjacency_ = std::move(adjacency);
  degrees_.assign(n_, 0.0);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) degrees_[i] += mat(adjacency_, i, j);
    if (degrees_[i] <= 0.0) throw GraphError("node " + std::to_string(i) + " is isolated");
  }
}

double TrafficNetwork::max_degree() const {
  return *std::max_element(degrees_.begin(), degrees_.end());
}

LaplacianPair laplacians(const TrafficNetwork& net) {
  const std::size_t n = net.n_nodes();
  const Tensor& a = net.adjacency();
  const auto& deg = net.degrees();
  LaplacianPair lp;
  lp.combinatorial = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mat(lp.combinatorial, i, j) = -mat(a, i, j);
    mat(lp.combinatorial, i, i) = deg[i];
  }
  if (!net.directed()) {
    Tensor norm({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        mat(norm, i, j) = -mat(a, i, j) / (std::sqrt(deg[i]) * std::sqrt(deg[j]));
      }
      mat(norm, i, i) = 1.0;
    }
    lp.normalized = std::move(norm);
  }
  return lp;
}

Tensor normalized_adjacency(const TrafficNetwork& net) {
  const std::size_t n = net.n_nodes();
  const auto& deg = net.degrees();
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      mat(out, i, j) = mat(net.adjacency(), i, j) / (std::sqrt(deg[i]) * std::sqrt(deg[j]));
    }
  }
  return out;
}

Tensor SpectralBasis::retained() const {
  const std::size_t n = eigenvectors.dim(0);
  Tensor out({n, k_retained});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k_retained; ++c) mat(out, i, c) = mat(eigenvectors, i, c);
  }
  return out;
}

SpectralBasis eigendecompose(const LaplacianPair& lap, std::size_t k) {
  if (!lap.normalized) {
    throw GraphError("spectral basis requires an undirected network (normalized Laplacian)");
  }
  const std::size_t n = lap.normalized->dim(0);
  if (k < 1 || k > n) {
    throw GraphError("retained eigenvector count " + std::to_string(k) + " outside [1, " +
                     std::to_string(n) + "]");
  }
  EigenDecomposition ed = symmetric_eigen(*lap.normalized);
  SpectralBasis sb;
  sb.gap = n >= 2 ? ed.values[1] - ed.values[0] : 0.0;
  sb.eigenvalues = std::move(ed.values);
  sb.eigenvectors = std::move(ed.vectors);
  sb.k_retained = k;
  return sb;
}

}  // namespace mcpst::graph
