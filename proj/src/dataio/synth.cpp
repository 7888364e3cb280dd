#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mcpst/config.hpp"
#include "mcpst/dataio.hpp"

namespace mcpst::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("synth key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

const char* topology_name(Topology t) {
  switch (t) {
    case Topology::grid: return "grid";
    case Topology::ring: return "ring";
    case Topology::random_geometric: return "random-geometric";
  }
  return "ring";
}

// Joins every component to the one holding node 0 through its closest pair.
void connect_components(std::vector<graph::Edge>& edges, const std::vector<std::pair<double, double>>& pos,
                        double radius) {
  const std::size_t n = pos.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    return std::hypot(pos[i].first - pos[j].first, pos[i].second - pos[j].second);
  };
  for (;;) {
    std::vector<int> reach(n, 0);
    std::vector<std::size_t> stack{0};
    reach[0] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const auto& e : edges) {
        const std::size_t v = e.src == u ? e.dst : (e.dst == u ? e.src : n);
        if (v < n && !reach[v]) {
          reach[v] = 1;
          stack.push_back(v);
        }
      }
    }
    double best = 1e300;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (!reach[j] && dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (best == 1e300) return;
    edges.push_back({bi, bj, std::exp(-(best / radius) * (best / radius))});
  }
}

std::vector<graph::Edge> make_edges(const SynthSpec& spec, Rng& rng) {
  const std::size_t n = spec.n_nodes;
  std::vector<graph::Edge> edges;
  switch (spec.topology) {
    case Topology::ring:
      for (std::size_t i = 0; i < n; ++i) {
        if (n == 2 && i == 1) break;
        edges.push_back({i, (i + 1) % n, 1.0});
      }
      break;
    case Topology::grid: {
      const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
      for (std::size_t i = 0; i < n; ++i) {
        if ((i + 1) % cols != 0 && i + 1 < n) edges.push_back({i, i + 1, 1.0});
        if (i + cols < n) edges.push_back({i, i + cols, 1.0});
      }
      break;
    }
    case Topology::random_geometric: {
      std::vector<std::pair<double, double>> pos(n);
      for (auto& p : pos) p = {rng.uniform(), rng.uniform()};
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          const double d = std::hypot(pos[i].first - pos[j].first, pos[i].second - pos[j].second);
          if (d < spec.radius) edges.push_back({i, j, std::exp(-(d / spec.radius) * (d / spec.radius))});
        }
      }
      connect_components(edges, pos, spec.radius);
      break;
    }
  }
  const std::size_t m = edges.size();
  for (std::size_t k = 0; k < m; ++k) edges.push_back({edges[k].dst, edges[k].src, edges[k].weight});
  return edges;
}

}  // namespace

SynthSpec SynthSpec::parse(std::string_view text) {
  SynthSpec s;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "topology") {
      if (value == "grid") s.topology = Topology::grid;
      else if (value == "ring") s.topology = Topology::ring;
      else if (value == "random-geometric" || value == "random_geometric") s.topology = Topology::random_geometric;
      else throw std::invalid_argument("unknown topology '" + value + "'");
      continue;
    }
    const double v = to_double(key, value);
    if (key == "n_nodes") {
      if (v < 2 || v != std::floor(v)) throw std::invalid_argument("n_nodes must be an integer >= 2");
      s.n_nodes = static_cast<std::size_t>(v);
    } else if (key == "days") s.days = v;
    else if (key == "interval_minutes" || key == "interval") s.interval_minutes = v;
    else if (key == "base_level") s.base_level = v;
    else if (key == "amplitude") s.amplitude = v;
    else if (key == "coupling") s.coupling = v;
    else if (key == "freq_spread") s.freq_spread = v;
    else if (key == "diffusivity") s.diffusivity = v;
    else if (key == "noise_sigma") s.noise_sigma = v;
    else if (key == "pulses_per_day") s.pulses_per_day = v;
    else if (key == "pulse_magnitude") s.pulse_magnitude = v;
    else if (key == "pulse_decay") s.pulse_decay = v;
    else if (key == "radius") s.radius = v;
    else throw std::invalid_argument("unknown synth key '" + key + "'");
  }
  if (!(s.days > 0) || !(s.interval_minutes > 0) || s.noise_sigma < 0 || s.pulses_per_day < 0 ||
      !(s.pulse_decay > 0) || s.diffusivity < 0 || !(s.radius > 0)) {
    throw std::invalid_argument("synth spec has out-of-range values");
  }
  return s;
}

SynthSpec SynthSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synth spec '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string SynthSpec::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_nodes = " << n_nodes << "\ntopology = " << topology_name(topology) << "\ndays = " << days
     << "\ninterval_minutes = " << interval_minutes << "\nbase_level = " << base_level
     << "\namplitude = " << amplitude << "\ncoupling = " << coupling
     << "\nfreq_spread = " << freq_spread << "\ndiffusivity = " << diffusivity
     << "\nnoise_sigma = " << noise_sigma << "\npulses_per_day = " << pulses_per_day
     << "\npulse_magnitude = " << pulse_magnitude << "\npulse_decay = " << pulse_decay
     << "\nradius = " << radius << '\n';
  return os.str();
}

SynthCity synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.n_nodes < 2) throw std::invalid_argument("synthetic city needs at least 2 nodes");
  Rng topo_rng(Rng::derive(seed, 1));
  Rng phase_rng(Rng::derive(seed, 2));
  Rng pulse_rng(Rng::derive(seed, 3));
  Rng noise_rng(Rng::derive(seed, 4));

  graph::TrafficNetwork net =
      graph::TrafficNetwork::from_edges(spec.n_nodes, make_edges(spec, topo_rng));
  const std::size_t n = spec.n_nodes;
  const auto steps =
      static_cast<std::size_t>(std::llround(spec.days * 1440.0 / spec.interval_minutes));
  const Tensor& a = net.adjacency();

  // Kuramoto daily phases.
  const double w0 = kTwoPi / 1440.0;
  std::vector<double> freq(n), phi(n);
  for (std::size_t i = 0; i < n; ++i) {
    freq[i] = w0 * (1.0 + spec.freq_spread * phase_rng.normal());
    phi[i] = -0.5 * std::numbers::pi + phase_rng.uniform(-0.5, 0.5);
  }
  auto rhs = [&](const std::vector<double>& p) {
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      double pull = 0.0;
      for (std::size_t j = 0; j < n; ++j) pull += mat(a, i, j) * std::sin(p[j] - p[i]);
      d[i] = freq[i] + w0 * spec.coupling * pull;
    }
    return d;
  };
  Tensor values({steps, n});
  const double h = spec.interval_minutes;
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      mat(values, t, i) = spec.base_level + spec.amplitude * std::sin(phi[i]);
    }
    std::vector<double> tmp(n);
    const auto k1 = rhs(phi);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phi[i] + 0.5 * h * k1[i];
    const auto k2 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phi[i] + 0.5 * h * k2[i];
    const auto k3 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phi[i] + h * k3[i];
    const auto k4 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) phi[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }

  // Diffused congestion pulses through the heat kernel of the combinatorial Laplacian.
  const auto pulses = static_cast<std::size_t>(std::floor(spec.pulses_per_day * spec.days));
  if (pulses > 0 && spec.pulse_magnitude != 0.0) {
    const graph::EigenDecomposition eig = graph::symmetric_eigen(graph::laplacians(net).combinatorial);
    const double horizon_minutes = 6.0 * spec.pulse_decay;
    const double total_minutes = static_cast<double>(steps) * h;
    for (std::size_t p = 0; p < pulses; ++p) {
      const double t0 = pulse_rng.uniform(0.0, total_minutes);
      const std::size_t k = pulse_rng.index(n);
      const double m = spec.pulse_magnitude * pulse_rng.uniform(0.5, 1.5);
      const auto first = static_cast<std::size_t>(std::ceil(t0 / h));
      for (std::size_t t = first; t < steps; ++t) {
        const double age = static_cast<double>(t) * h - t0;
        if (age > horizon_minutes) break;
        const double envelope = m * std::exp(-age / spec.pulse_decay);
        for (std::size_t i = 0; i < n; ++i) {
          double heat = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            heat += mat(eig.vectors, i, c) * mat(eig.vectors, k, c) *
                    std::exp(-spec.diffusivity * eig.values[c] * age / 60.0);
          }
          mat(values, t, i) -= envelope * heat;
        }
      }
    }
  }

  if (spec.noise_sigma > 0.0) {
    for (double& v : values.values()) v += spec.noise_sigma * noise_rng.normal();
  }

  TrafficSeries series;
  series.values = std::move(values);
  series.interval_minutes = spec.interval_minutes;
  series.start_minutes = parse_timestamp("2024-01-01 00:00");
  return {std::move(net), std::move(series)};
}

}  // namespace mcpst::data
