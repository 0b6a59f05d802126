#ifndef GAMMALAB_GRID_HPP
#define GAMMALAB_GRID_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "gammalab/linalg.hpp"

namespace gammalab {

class CoefficientField;

// Uniform lattice on a box. Nodes sit at lo + index * spacing with integer
// indices in [0, res) per axis, so the lo-side boundary is a node layer and
// the hi-side boundary is the first ghost layer. Summing one cell volume per
// node integrates constants exactly.
struct Grid {
  int dim = 0;
  std::array<int, kMaxDim> res{};
  Coord lo{};
  Coord hi{};
  Coord spacing{};

  static Grid make(int dim, const Coord& lo, const Coord& hi, const std::array<int, kMaxDim>& res);

  std::size_t node_count() const;
  double cell_volume() const;
  double max_spacing() const;

  Coord node(const std::array<int, kMaxDim>& idx) const;
  std::size_t linear_index(const std::array<int, kMaxDim>& idx) const;
  void decode(std::size_t linear, std::array<int, kMaxDim>& idx) const;
  std::array<std::size_t, kMaxDim> strides() const;

  bool operator==(const Grid& other) const;
};

enum class BoundaryMode { zero_dirichlet, free_extend };

// Grid-sampled real function. In zero_dirichlet mode ghost reads outside the
// lattice return 0; in free_extend mode they copy the nearest stored value.
struct ScalarField {
  Grid grid;
  BoundaryMode mode = BoundaryMode::free_extend;
  std::vector<double> values;

  ScalarField() = default;
  ScalarField(const Grid& g, BoundaryMode m, double fill = 0.0);

  static ScalarField from_function(const Grid& g, BoundaryMode m,
                                   const std::function<double(const Coord&)>& f);

  double& at(std::size_t linear) { return values[linear]; }
  double at(std::size_t linear) const { return values[linear]; }

  // Zeroes every stored node lying on the boundary of the box (any index 0);
  // together with the ghost convention this realizes the discrete
  // zero-boundary space.
  void project_zero_boundary();
  bool is_interior_node(std::size_t linear) const;
};

// Grid-sampled R^m-valued function, node-major layout (comps per node
// contiguous).
struct VecField {
  Grid grid;
  int comps = 0;
  std::vector<double> values;

  VecField() = default;
  VecField(const Grid& g, int m);

  double& at(std::size_t node, int j) { return values[node * static_cast<std::size_t>(comps) + static_cast<std::size_t>(j)]; }
  double at(std::size_t node, int j) const { return values[node * static_cast<std::size_t>(comps) + static_cast<std::size_t>(j)]; }
};

ScalarField operator-(const ScalarField& x, const ScalarField& y);
ScalarField operator+(const ScalarField& x, const ScalarField& y);
VecField operator-(const VecField& x, const VecField& y);

void axpy(double a, const ScalarField& x, ScalarField& y);  // y += a*x
void scale(ScalarField& x, double a);

// Forward-difference Euclidean gradient, one component per axis. The
// neighbour beyond the lattice is the ghost value of the field's mode.
VecField gradient(const ScalarField& u);

// Anisotropic gradient C(x) Du(x), m components.
VecField x_gradient(const ScalarField& u, const CoefficientField& c);

// Discrete gradient of the affine combination phi + v where phi uses its own
// ghost convention and v uses zero ghosts. This is the gradient the Dirichlet
// solver minimizes with boundary data phi.
VecField x_gradient_affine(const ScalarField& phi, const ScalarField& v, const CoefficientField& c);

// Node quadrature norm (sum of |v|^p times the cell volume)^(1/p); requires
// p > 1. For vector fields |.| is the per-node Euclidean length.
double lp_norm(const ScalarField& v, double p);
double lp_norm(const VecField& v, double p);

// L^2 pairing: sum of u*w times the cell volume. Grids must match.
double inner(const ScalarField& u, const ScalarField& w);

// Flat binary layout: u64 dim, u64 res[dim], f64 lo[dim], f64 hi[dim], then
// row-major (first axis slowest) f64 node values, all little-endian. Vector
// fields append comps values per node; the component count is recovered from
// the payload size.
void write_binary(const ScalarField& f, std::ostream& out);
ScalarField read_binary_scalar(std::istream& in);
void write_binary(const VecField& f, std::ostream& out);
VecField read_binary_vec(std::istream& in);

void write_csv(const ScalarField& f, std::ostream& out);
void write_csv(const VecField& f, std::ostream& out);

}  // namespace gammalab

#endif
