#include "grftopo/field_sampler.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "fft.hpp"

namespace grftopo {

namespace {

using Complex = std::complex<double>;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int m : shape) n *= static_cast<std::size_t>(m);
  return n;
}

// Signed frequency of DFT index j on an axis of m points; Nyquist -> m/2.
int signed_frequency(int j, int m) { return 2 * j <= m ? j : j - m; }
bool is_nyquist(int j, int m) { return 2 * j == m; }

bool in_half_space(const GridIndex& k, int n) {
  for (int d = 0; d < n; ++d) {
    if (k[d] > 0) return true;
    if (k[d] < 0) return false;
  }
  return false;
}

void add_term(SpectralRepresentation& rep, const GridIndex& k, Complex c,
              const std::vector<double>& period) {
  const int n = static_cast<int>(period.size());
  bool zero = true;
  for (int d = 0; d < n; ++d) zero = zero && k[d] == 0;
  if (zero) {
    rep.constant += c.real();
    return;
  }
  if (!in_half_space(k, n)) return;
  SpectralTerm t;
  t.k = k;
  for (int d = 0; d < n; ++d) {
    t.xi[d] = kTwoPi * k[d] / period[d];
    rep.max_k[d] = std::max(rep.max_k[d], std::abs(k[d]));
  }
  t.c = c;
  rep.terms.push_back(t);
}

// Half-spectrum of a dense coefficient array (f = sum_j c_j exp(i xi_j x)).
// Nyquist coefficients are split over the +-m/2 aliases.
SpectralRepresentation build_spectrum(const std::vector<Complex>& dense,
                                      const std::vector<int>& shape,
                                      const std::vector<double>& period) {
  const int n = static_cast<int>(shape.size());
  SpectralRepresentation rep;
  GridIndex j{};
  for (std::size_t flat = 0; flat < dense.size(); ++flat) {
    std::size_t rem = flat;
    for (int d = n - 1; d >= 0; --d) {
      j[d] = static_cast<int>(rem % shape[d]);
      rem /= shape[d];
    }
    const Complex c = dense[flat];
    if (c == Complex(0.0, 0.0)) continue;
    int nyq_axes = 0;
    GridIndex k{};
    for (int d = 0; d < n; ++d) {
      k[d] = signed_frequency(j[d], shape[d]);
      nyq_axes += is_nyquist(j[d], shape[d]);
    }
    if (nyq_axes == 0) {
      add_term(rep, k, c, period);
      continue;
    }
    const Complex share = c / static_cast<double>(1 << nyq_axes);
    for (int mask = 0; mask < (1 << n); ++mask) {
      GridIndex kk = k;
      bool valid = true;
      for (int d = 0; d < n; ++d) {
        const bool flip = (mask >> d) & 1;
        if (!is_nyquist(j[d], shape[d])) {
          valid = valid && !flip;
        } else if (flip) {
          kk[d] = -kk[d];
        }
      }
      if (valid) add_term(rep, kk, share, period);
    }
  }
  return rep;
}

std::vector<Complex> forward_coefficients(const GridField& field) {
  std::vector<Complex> buf(field.values().begin(), field.values().end());
  detail::fft_inplace(buf, field.shape(), detail::FftDirection::forward);
  const double inv = 1.0 / static_cast<double>(buf.size());
  for (auto& c : buf) c *= inv;
  return buf;
}

}  // namespace

GridField::GridField(std::vector<int> shape, std::vector<double> period,
                     std::vector<double> values, std::optional<SpectralRepresentation> spectrum,
                     Provenance provenance)
    : shape_(std::move(shape)),
      period_(std::move(period)),
      values_(std::move(values)),
      spectrum_(std::move(spectrum)),
      provenance_(std::move(provenance)) {
  const int n = static_cast<int>(shape_.size());
  if (n < 1 || n > kMaxGridDim) throw std::invalid_argument("grid dimension must be 1..3");
  if (static_cast<int>(period_.size()) != n)
    throw std::invalid_argument("period and shape dimensions differ");
  for (int d = 0; d < n; ++d) {
    if (shape_[d] < 2) throw std::invalid_argument("grid axes need at least 2 points");
    if (!(period_[d] > 0.0)) throw std::invalid_argument("grid period must be positive");
  }
  if (values_.size() != product(shape_)) throw std::invalid_argument("value array size mismatch");
  strides_.assign(n, 1);
  for (int d = n - 2; d >= 0; --d) strides_[d] = strides_[d + 1] * shape_[d + 1];
}

GridIndex GridField::coords(std::size_t index) const {
  GridIndex c{};
  for (int d = 0; d < dimension(); ++d) c[d] = static_cast<int>((index / strides_[d]) % shape_[d]);
  return c;
}

std::size_t GridField::index(const GridIndex& c) const {
  std::size_t idx = 0;
  for (int d = 0; d < dimension(); ++d) {
    const int m = shape_[d];
    idx += static_cast<std::size_t>(((c[d] % m) + m) % m) * strides_[d];
  }
  return idx;
}

std::size_t GridField::shifted(std::size_t index, int axis, int step) const {
  const int m = shape_[axis];
  const int c = static_cast<int>((index / strides_[axis]) % m);
  const int moved = ((c + step) % m + m) % m;
  return index + (static_cast<std::ptrdiff_t>(moved) - c) * static_cast<std::ptrdiff_t>(strides_[axis]);
}

Eigen::VectorXd GridField::position(std::size_t index) const {
  const GridIndex c = coords(index);
  Eigen::VectorXd x(dimension());
  for (int d = 0; d < dimension(); ++d) x(d) = c[d] * spacing(d);
  return x;
}

GridField GridField::negated() const {
  std::vector<double> v(values_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -values_[i];
  std::optional<SpectralRepresentation> spec = spectrum_;
  if (spec) {
    spec->constant = -spec->constant;
    for (auto& t : spec->terms) t.c = -t.c;
  }
  return GridField(shape_, period_, std::move(v), std::move(spec), provenance_);
}

GridField field_from_values(std::vector<int> shape, std::vector<double> period,
                            std::vector<double> values) {
  GridField raw(shape, period, values);
  SpectralRepresentation rep = build_spectrum(forward_coefficients(raw), shape, period);
  return GridField(std::move(shape), std::move(period), std::move(values), std::move(rep));
}

SpectralWeights compute_spectral_weights(const SpectralModel& model, std::vector<double> period,
                                         std::vector<int> shape) {
  const int n = static_cast<int>(shape.size());
  if (n != model.dimension || static_cast<int>(period.size()) != n)
    throw std::invalid_argument("grid and model dimensions differ");
  if (n > kMaxGridDim) throw std::invalid_argument("torus sampler supports n <= 3");
  const double corr = model.decay_radius(0.01);
  for (double L : period)
    if (!(L >= 10.0 * corr))
      throw std::invalid_argument("torus side must be at least 10 correlation lengths");
  const double r_trunc = model.decay_radius(1e-12);

  GridIndex images{};
  for (int d = 0; d < n; ++d)
    images[d] = static_cast<int>(std::ceil((r_trunc + 0.5 * period[d]) / period[d]));

  const std::size_t total = product(shape);
  std::vector<Complex> buf(total);
  std::vector<double> x(n);
  std::vector<double> shiftx(n);
  GridIndex j{};
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int d = n - 1; d >= 0; --d) {
      j[d] = static_cast<int>(rem % shape[d]);
      rem /= shape[d];
    }
    for (int d = 0; d < n; ++d) {
      const double h = period[d] / shape[d];
      x[d] = (2 * j[d] < shape[d] ? j[d] : j[d] - shape[d]) * h;
    }
    // Periodization sum over lattice images.
    double acc = 0.0;
    GridIndex img{};
    for (int d = 0; d < n; ++d) img[d] = -images[d];
    for (;;) {
      for (int d = 0; d < n; ++d) shiftx[d] = x[d] + img[d] * period[d];
      acc += model.covariance(shiftx);
      int d = n - 1;
      while (d >= 0 && img[d] == images[d]) {
        img[d] = -images[d];
        --d;
      }
      if (d < 0) break;
      ++img[d];
    }
    buf[flat] = acc;
  }
  detail::fft_inplace(buf, shape, detail::FftDirection::forward);

  SpectralWeights w;
  w.weights.resize(total);
  const double inv = 1.0 / static_cast<double>(total);
  GridIndex neg{};
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    for (int d = n - 1; d >= 0; --d) {
      j[d] = static_cast<int>(rem % shape[d]);
      rem /= shape[d];
    }
    std::size_t mirror = 0;
    bool nyquist = false;
    for (int d = 0; d < n; ++d) {
      neg[d] = (shape[d] - j[d]) % shape[d];
      mirror = mirror * shape[d] + neg[d];
      nyquist = nyquist || is_nyquist(j[d], shape[d]);
    }
    double v = 0.5 * (buf[flat].real() + buf[mirror].real()) * inv;
    if (v < 0.0) {
      w.clipped_mass -= v;
      v = 0.0;
    }
    if (nyquist) {
      w.nyquist_mass += v;
      v = 0.0;
    }
    // Modes this small carry no mass at double precision; dropping them
    // keeps the trigonometric polynomial sparse.
    if (v < 1e-17) v = 0.0;
    if (v > 0.0) ++w.retained;
    w.weights[flat] = v;
  }
  const double lost = w.clipped_mass + w.nyquist_mass;
  if (lost > 1e-4)
    throw std::runtime_error("spectral weights lose too much mass (grid too coarse or L too small)");
  if (lost > 1e-8) spdlog::warn("spectral weight clipping removed mass {:.3g}", lost);
  w.shape = std::move(shape);
  w.period = std::move(period);
  return w;
}

GridField sample_torus(const SpectralWeights& weights, std::uint64_t seed, Provenance provenance) {
  const std::size_t total = weights.weights.size();
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Complex> buf(total);
  for (auto& z : buf) z = normal(rng);
  detail::fft_inplace(buf, weights.shape, detail::FftDirection::forward);
  const double inv_total = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < total; ++i)
    buf[i] *= weights.weights[i] > 0.0 ? std::sqrt(weights.weights[i] * inv_total) : 0.0;
  SpectralRepresentation rep = build_spectrum(buf, weights.shape, weights.period);
  detail::fft_inplace(buf, weights.shape, detail::FftDirection::backward);
  std::vector<double> values(total);
  for (std::size_t i = 0; i < total; ++i) values[i] = buf[i].real();
  provenance.seed = seed;
  return GridField(weights.shape, weights.period, std::move(values), std::move(rep),
                   std::move(provenance));
}

GridField sample_torus(const SpectralModel& model, std::vector<double> period,
                       std::vector<int> shape, std::uint64_t seed) {
  const SpectralWeights w = compute_spectral_weights(model, std::move(period), std::move(shape));
  Provenance p;
  p.model = model.descriptor();
  p.master_seed = seed;
  return sample_torus(w, seed, std::move(p));
}

std::vector<double> sample_random_features(const SpectralModel& model,
                                           std::span<const Eigen::VectorXd> points,
                                           int m_features, std::uint64_t seed) {
  if (m_features < 1) throw std::invalid_argument("need at least one random feature");
  const int n = model.dimension;
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::vector<double> values(points.size(), 0.0);
  std::vector<double> xi(n);
  for (int j = 0; j < m_features; ++j) {
    model.sample_frequency(rng, xi);
    const double phi = phase(rng);
    for (std::size_t p = 0; p < points.size(); ++p) {
      double dot = phi;
      for (int d = 0; d < n; ++d) dot += xi[d] * points[p](d);
      values[p] += std::cos(dot);
    }
  }
  const double scale = std::sqrt(2.0 / m_features);
  for (double& v : values) v *= scale;
  return values;
}

SpectralValue eval_spectral(const GridField& field, const Eigen::VectorXd& x) {
  if (!field.spectrum()) throw std::logic_error("field has no spectral representation");
  const auto& rep = *field.spectrum();
  const int n = field.dimension();

  // Per-axis phase tables exp(i 2 pi k x_d / L_d), k in [-K_d, K_d].
  std::array<std::vector<Complex>, kMaxGridDim> phase;
  for (int d = 0; d < n; ++d) {
    const int kmax = rep.max_k[d];
    phase[d].resize(2 * kmax + 1);
    const double base = kTwoPi * x(d) / field.period()[d];
    for (int k = -kmax; k <= kmax; ++k) phase[d][k + kmax] = std::polar(1.0, base * k);
  }

  double value = 0.0;
  std::array<double, kMaxGridDim> grad{};
  std::array<double, kMaxGridDim * kMaxGridDim> hess{};
  for (const auto& t : rep.terms) {
    Complex e = phase[0][t.k[0] + rep.max_k[0]];
    for (int d = 1; d < n; ++d) e *= phase[d][t.k[d] + rep.max_k[d]];
    const Complex z = t.c * e;
    value += z.real();
    for (int a = 0; a < n; ++a) {
      grad[a] -= t.xi[a] * z.imag();
      for (int b = a; b < n; ++b) hess[a * kMaxGridDim + b] -= t.xi[a] * t.xi[b] * z.real();
    }
  }
  SpectralValue out;
  out.value = rep.constant + 2.0 * value;
  out.gradient.resize(n);
  out.hessian.resize(n, n);
  for (int a = 0; a < n; ++a) {
    out.gradient(a) = 2.0 * grad[a];
    for (int b = a; b < n; ++b) out.hessian(a, b) = out.hessian(b, a) = 2.0 * hess[a * kMaxGridDim + b];
  }
  return out;
}

std::vector<std::vector<double>> grid_gradient(const GridField& field) {
  const int n = field.dimension();
  const auto& shape = field.shape();
  const std::vector<Complex> coeff = forward_coefficients(field);
  std::vector<std::vector<double>> out(n);
  std::vector<Complex> buf(coeff.size());
  for (int axis = 0; axis < n; ++axis) {
    std::size_t stride = 1;
    for (int d = n - 1; d > axis; --d) stride *= shape[d];
    const int m = shape[axis];
    const double scale = kTwoPi / field.period()[axis];
    for (std::size_t flat = 0; flat < coeff.size(); ++flat) {
      const int j = static_cast<int>((flat / stride) % m);
      // The split Nyquist pair has zero derivative on the grid.
      buf[flat] = is_nyquist(j, m) ? Complex(0.0, 0.0)
                                   : Complex(0.0, scale * signed_frequency(j, m)) * coeff[flat];
    }
    detail::fft_inplace(buf, shape, detail::FftDirection::backward);
    out[axis].resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) out[axis][i] = buf[i].real();
  }
  return out;
}

std::vector<std::vector<double>> refined_gradient(const GridField& field, int factor) {
  if (!field.spectrum()) throw std::logic_error("field has no spectral representation");
  if (factor < 1) throw std::invalid_argument("refinement factor must be positive");
  const auto& rep = *field.spectrum();
  const int n = field.dimension();
  std::vector<int> shape(field.shape());
  for (int& m : shape) m *= factor;
  const std::size_t total = product(shape);
  auto slot = [&](const GridIndex& k, int sign) {
    std::size_t flat = 0;
    for (int d = 0; d < n; ++d) flat = flat * shape[d] + ((sign * k[d]) % shape[d] + shape[d]) % shape[d];
    return flat;
  };
  std::vector<std::vector<double>> out(n);
  std::vector<Complex> buf(total);
  for (int axis = 0; axis < n; ++axis) {
    std::fill(buf.begin(), buf.end(), Complex(0.0, 0.0));
    for (const auto& t : rep.terms) {
      const Complex dc = Complex(0.0, t.xi[axis]) * t.c;
      buf[slot(t.k, 1)] += dc;
      buf[slot(t.k, -1)] += std::conj(dc);
    }
    detail::fft_inplace(buf, shape, detail::FftDirection::backward);
    out[axis].resize(total);
    for (std::size_t i = 0; i < total; ++i) out[axis][i] = buf[i].real();
  }
  return out;
}

}  // namespace grftopo
