// Symmetric eigensolver: Householder reduction to tridiagonal form followed by
// the implicit-shift QL iteration (the classic tred2/tql2 pair).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mcpst/graphcore.hpp"

namespace mcpst::graph {

namespace {

using Matrix = std::vector<std::vector<double>>;

void tridiagonalize(Matrix& v, std::vector<double>& d, std::vector<double>& e) {
  const int n = static_cast<int>(v.size());
  for (int j = 0; j < n; ++j) d[j] = v[n - 1][j];

  for (int i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (int k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (int j = 0; j < i; ++j) {
        d[j] = v[i - 1][j];
        v[i][j] = 0.0;
        v[j][i] = 0.0;
      }
    } else {
      for (int k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (int j = 0; j < i; ++j) e[j] = 0.0;

      for (int j = 0; j < i; ++j) {
        f = d[j];
        v[j][i] = f;
        g = e[j] + v[j][j] * f;
        for (int k = j + 1; k <= i - 1; ++k) {
          g += v[k][j] * d[k];
          e[k] += v[k][j] * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (int j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (int j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (int k = j; k <= i - 1; ++k) v[k][j] -= (f * e[k] + g * d[k]);
        d[j] = v[i - 1][j];
        v[i][j] = 0.0;
      }
    }
    d[i] = h;
  }

  // Accumulate the Householder reflections.
  for (int i = 0; i < n - 1; ++i) {
    v[n - 1][i] = v[i][i];
    v[i][i] = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (int k = 0; k <= i; ++k) d[k] = v[k][i + 1] / h;
      for (int j = 0; j <= i; ++j) {
        double g = 0.0;
        for (int k = 0; k <= i; ++k) g += v[k][i + 1] * v[k][j];
        for (int k = 0; k <= i; ++k) v[k][j] -= g * d[k];
      }
    }
    for (int k = 0; k <= i; ++k) v[k][i + 1] = 0.0;
  }
  for (int j = 0; j < n; ++j) {
    d[j] = v[n - 1][j];
    v[n - 1][j] = 0.0;
  }
  v[n - 1][n - 1] = 1.0;
  e[0] = 0.0;
}

void implicit_ql(Matrix& v, std::vector<double>& d, std::vector<double>& e) {
  const int n = static_cast<int>(v.size());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  constexpr double kTol = 1e-12;
  const long max_sweeps = 64L * n;
  long sweeps = 0;
  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::ldexp(1.0, -52);

  for (int l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    const double thresh = std::min(kTol, eps * tst1);
    int m = l;
    while (m < n) {
      if (std::abs(e[m]) <= thresh) break;
      ++m;
    }
    if (m > l) {
      do {
        if (++sweeps > max_sweeps) {
          throw GraphError("eigensolver did not converge within " + std::to_string(max_sweeps) +
                           " sweeps");
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (int i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (int i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (int k = 0; k < n; ++k) {
            h = v[k][i + 1];
            v[k][i + 1] = s * v[k][i] + c * h;
            v[k][i] = c * v[k][i] - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > thresh);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

}  // namespace

EigenDecomposition symmetric_eigen(const Tensor& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1) || m.dim(0) == 0) {
    throw GraphError("symmetric_eigen needs a non-empty square matrix");
  }
  const std::size_t n = m.dim(0);
  double scale = 0.0;
  for (double x : m.values()) scale = std::max(scale, std::abs(x));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(mat(m, i, j) - mat(m, j, i)) > 1e-12 * std::max(1.0, scale)) {
        throw GraphError("matrix is not symmetric");
      }
    }
  }

  Matrix v(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) v[i][j] = mat(m, i, j);
  }
  std::vector<double> d(n), e(n);
  if (n > 1) {
    tridiagonalize(v, d, e);
    implicit_ql(v, d, e);
  } else {
    d[0] = v[0][0];
    v[0][0] = 1.0;
  }

  // Sign convention: first entry with |x| > 1e-10 is positive.
  std::vector<std::vector<double>> cols(n, std::vector<double>(n));
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t r = 0; r < n; ++r) cols[c][r] = v[r][c];
    for (double x : cols[c]) {
      if (std::abs(x) > 1e-10) {
        if (x < 0) {
          for (double& y : cols[c]) y = -y;
        }
        break;
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  // Columns whose eigenvalues agree to within 1e-9 form a degenerate group
  // and are ordered lexicographically by their entries.
  const double tie = 1e-9;
  std::size_t start = 0;
  while (start < n) {
    std::size_t stop = start + 1;
    while (stop < n && d[order[stop]] - d[order[stop - 1]] <= tie) ++stop;
    if (stop - start > 1) {
      std::sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                order.begin() + static_cast<std::ptrdiff_t>(stop),
                [&](std::size_t a, std::size_t b) { return cols[a] < cols[b]; });
    }
    start = stop;
  }

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Tensor({n, n});
  for (std::size_t c = 0; c < n; ++c) {
    out.values[c] = d[order[c]];
    for (std::size_t r = 0; r < n; ++r) mat(out.vectors, r, c) = cols[order[c]][r];
  }
  return out;
}

}  // namespace mcpst::graph
