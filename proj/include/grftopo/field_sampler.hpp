#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "grftopo/covariance_models.hpp"

namespace grftopo {

inline constexpr int kMaxGridDim = 3;
using GridIndex = std::array<int, kMaxGridDim>;

/// One Fourier mode exp(i xi . x) with xi_d = 2 pi k_d / L_d.
struct SpectralTerm {
  GridIndex k{};
  std::array<double, kMaxGridDim> xi{};
  std::complex<double> c;
};

/// Exact finite Fourier series of a periodic field, stored as a half
/// spectrum: f(x) = constant + 2 Re sum_terms c exp(i xi . x).
struct SpectralRepresentation {
  double constant = 0.0;
  std::vector<SpectralTerm> terms;
  GridIndex max_k{};  // largest |k_d| over terms, per axis
};

struct Provenance {
  nlohmann::json model = nlohmann::json::object();
  std::uint64_t master_seed = 0;
  std::uint64_t replicate = 0;
  std::uint64_t seed = 0;
};

/// Scalar samples on a periodic grid, vertex i at x_d = i_d * h_d.
/// Values are stored row-major (last axis fastest). Immutable once built.
class GridField {
 public:
  GridField(std::vector<int> shape, std::vector<double> period, std::vector<double> values,
            std::optional<SpectralRepresentation> spectrum = std::nullopt,
            Provenance provenance = {});

  int dimension() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& period() const { return period_; }
  double spacing(int axis) const { return period_[axis] / shape_[axis]; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::optional<SpectralRepresentation>& spectrum() const { return spectrum_; }
  const Provenance& provenance() const { return provenance_; }

  GridIndex coords(std::size_t index) const;
  std::size_t index(const GridIndex& c) const;
  /// Index of the vertex `step` units along `axis`, with wrap-around.
  std::size_t shifted(std::size_t index, int axis, int step) const;
  Eigen::VectorXd position(std::size_t index) const;

  /// The field -f, with its spectrum negated as well.
  GridField negated() const;

 private:
  std::vector<int> shape_;
  std::vector<double> period_;
  std::vector<double> values_;
  std::vector<std::size_t> strides_;
  std::optional<SpectralRepresentation> spectrum_;
  Provenance provenance_;
};

/// Exact trigonometric interpolant of an arbitrary periodic grid array.
/// Nyquist modes are split evenly between +m/2 and -m/2 so the
/// interpolant is real everywhere.
GridField field_from_values(std::vector<int> shape, std::vector<double> period,
                            std::vector<double> values);

/// Grid spectral weights of the periodized covariance for one (model, L,
/// shape) triple. Reusable across replicates.
struct SpectralWeights {
  std::vector<int> shape;
  std::vector<double> period;
  std::vector<double> weights;  // dense, DFT layout
  double clipped_mass = 0.0;    // negative weights set to zero
  double nyquist_mass = 0.0;    // weight on Nyquist planes, removed
  std::size_t retained = 0;
};

/// Throws std::invalid_argument when some L_d < 10 x the decay length
/// (|k| < 0.01), and std::runtime_error when clipped + Nyquist mass
/// exceeds 1e-4. Warns above 1e-8.
SpectralWeights compute_spectral_weights(const SpectralModel& model, std::vector<double> period,
                                         std::vector<int> shape);

GridField sample_torus(const SpectralWeights& weights, std::uint64_t seed,
                       Provenance provenance = {});
GridField sample_torus(const SpectralModel& model, std::vector<double> period,
                       std::vector<int> shape, std::uint64_t seed);

/// f(x) = sqrt(2/m) sum_j cos(<xi_j, x> + phi_j) with xi_j from the spectral
/// measure and phi_j uniform on [0, 2 pi).
std::vector<double> sample_random_features(const SpectralModel& model,
                                           std::span<const Eigen::VectorXd> points,
                                           int m_features, std::uint64_t seed);

struct SpectralValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/// Exact value, gradient and Hessian of the trigonometric polynomial at an
/// arbitrary (periodic) point. Throws std::logic_error without a spectrum.
SpectralValue eval_spectral(const GridField& field, const Eigen::VectorXd& x);

/// Exact partial derivatives at every vertex: result[d][i] = d_d f(x_i).
std::vector<std::vector<double>> grid_gradient(const GridField& field);

/// Exact partial derivatives on the grid refined `factor` times along each
/// axis (shape m_d * factor, same period), from the spectral representation.
std::vector<std::vector<double>> refined_gradient(const GridField& field, int factor);

// Binary container: magic "GRFTOPO1", u64 header length, JSON header with
// provenance, then little-endian doubles: values (row-major), followed by
// one record (k_1..k_n, Re c, Im c) per spectral term.
void save_field(const GridField& field, const std::filesystem::path& path);
GridField load_field(const std::filesystem::path& path);

}  // namespace grftopo
