#include "gammalab/grid.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "gammalab/anisotropy.hpp"

namespace gammalab {

Grid Grid::make(int dim, const Coord& lo, const Coord& hi, const std::array<int, kMaxDim>& res) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("grid: dim must be 1..3");
  Grid g;
  g.dim = dim;
  g.lo = lo;
  g.hi = hi;
  g.res = res;
  for (int k = dim; k < kMaxDim; ++k) {
    g.res[static_cast<std::size_t>(k)] = 1;
    g.lo[static_cast<std::size_t>(k)] = 0.0;
    g.hi[static_cast<std::size_t>(k)] = 0.0;
    g.spacing[static_cast<std::size_t>(k)] = 1.0;
  }
  for (int k = 0; k < dim; ++k) {
    if (res[static_cast<std::size_t>(k)] < 4) throw std::invalid_argument("grid: res must be >= 4 per axis");
    const double len = hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)];
    if (!(len > 0.0)) throw std::invalid_argument("grid: hi must exceed lo");
    g.spacing[static_cast<std::size_t>(k)] = len / res[static_cast<std::size_t>(k)];
  }
  return g;
}

std::size_t Grid::node_count() const {
  std::size_t n = 1;
  for (int k = 0; k < dim; ++k) n *= static_cast<std::size_t>(res[static_cast<std::size_t>(k)]);
  return n;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int k = 0; k < dim; ++k) v *= spacing[static_cast<std::size_t>(k)];
  return v;
}

double Grid::max_spacing() const {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s = std::max(s, spacing[static_cast<std::size_t>(k)]);
  return s;
}

Coord Grid::node(const std::array<int, kMaxDim>& idx) const {
  Coord x{};
  for (int k = 0; k < dim; ++k)
    x[static_cast<std::size_t>(k)] = lo[static_cast<std::size_t>(k)] + idx[static_cast<std::size_t>(k)] * spacing[static_cast<std::size_t>(k)];
  return x;
}

std::size_t Grid::linear_index(const std::array<int, kMaxDim>& idx) const {
  std::size_t lin = 0;
  for (int k = 0; k < dim; ++k) lin = lin * static_cast<std::size_t>(res[static_cast<std::size_t>(k)]) + static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]);
  return lin;
}

void Grid::decode(std::size_t linear, std::array<int, kMaxDim>& idx) const {
  for (int k = dim - 1; k >= 0; --k) {
    const auto r = static_cast<std::size_t>(res[static_cast<std::size_t>(k)]);
    idx[static_cast<std::size_t>(k)] = static_cast<int>(linear % r);
    linear /= r;
  }
  for (int k = dim; k < kMaxDim; ++k) idx[static_cast<std::size_t>(k)] = 0;
}

std::array<std::size_t, kMaxDim> Grid::strides() const {
  std::array<std::size_t, kMaxDim> s{};
  std::size_t acc = 1;
  for (int k = dim - 1; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = acc;
    acc *= static_cast<std::size_t>(res[static_cast<std::size_t>(k)]);
  }
  return s;
}

bool Grid::operator==(const Grid& other) const {
  if (dim != other.dim) return false;
  for (int k = 0; k < dim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (res[ks] != other.res[ks] || lo[ks] != other.lo[ks] || hi[ks] != other.hi[ks]) return false;
  }
  return true;
}

ScalarField::ScalarField(const Grid& g, BoundaryMode m, double fill)
    : grid(g), mode(m), values(g.node_count(), fill) {}

ScalarField ScalarField::from_function(const Grid& g, BoundaryMode m,
                                       const std::function<double(const Coord&)>& f) {
  ScalarField u(g, m);
  std::array<int, kMaxDim> idx{};
  for (std::size_t t = 0; t < u.values.size(); ++t) {
    g.decode(t, idx);
    u.values[t] = f(g.node(idx));
  }
  return u;
}

void ScalarField::project_zero_boundary() {
  std::array<int, kMaxDim> idx{};
  for (std::size_t t = 0; t < values.size(); ++t) {
    grid.decode(t, idx);
    for (int k = 0; k < grid.dim; ++k)
      if (idx[static_cast<std::size_t>(k)] == 0) {
        values[t] = 0.0;
        break;
      }
  }
}

bool ScalarField::is_interior_node(std::size_t linear) const {
  std::array<int, kMaxDim> idx{};
  grid.decode(linear, idx);
  for (int k = 0; k < grid.dim; ++k)
    if (idx[static_cast<std::size_t>(k)] == 0) return false;
  return true;
}

VecField::VecField(const Grid& g, int m)
    : grid(g), comps(m), values(g.node_count() * static_cast<std::size_t>(m), 0.0) {}

ScalarField operator-(const ScalarField& x, const ScalarField& y) {
  if (!(x.grid == y.grid)) throw std::invalid_argument("field subtraction: grid mismatch");
  ScalarField r = x;
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= y.values[i];
  return r;
}

ScalarField operator+(const ScalarField& x, const ScalarField& y) {
  if (!(x.grid == y.grid)) throw std::invalid_argument("field addition: grid mismatch");
  ScalarField r = x;
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] += y.values[i];
  return r;
}

VecField operator-(const VecField& x, const VecField& y) {
  if (!(x.grid == y.grid) || x.comps != y.comps)
    throw std::invalid_argument("vec field subtraction: shape mismatch");
  VecField r = x;
  for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= y.values[i];
  return r;
}

void axpy(double a, const ScalarField& x, ScalarField& y) {
  for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] += a * x.values[i];
}

void scale(ScalarField& x, double a) {
  for (double& v : x.values) v *= a;
}

namespace {

// Forward difference along each axis at one node; ghost handling per mode.
inline void forward_diffs(const ScalarField& u, const std::array<int, kMaxDim>& idx,
                          std::size_t lin, const std::array<std::size_t, kMaxDim>& stride,
                          double* du) {
  const Grid& g = u.grid;
  for (int k = 0; k < g.dim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const double here = u.values[lin];
    double next;
    if (idx[ks] + 1 < g.res[ks]) {
      next = u.values[lin + stride[ks]];
    } else {
      next = (u.mode == BoundaryMode::zero_dirichlet) ? 0.0 : here;
    }
    du[ks] = (next - here) / g.spacing[ks];
  }
}

}  // namespace

VecField gradient(const ScalarField& u) {
  const Grid& g = u.grid;
  VecField out(g, g.dim);
  const auto stride = g.strides();
  std::array<int, kMaxDim> idx{};
  double du[kMaxDim];
  for (std::size_t t = 0; t < u.values.size(); ++t) {
    g.decode(t, idx);
    forward_diffs(u, idx, t, stride, du);
    for (int k = 0; k < g.dim; ++k) out.at(t, k) = du[k];
  }
  return out;
}

VecField x_gradient(const ScalarField& u, const CoefficientField& c) {
  const Grid& g = u.grid;
  if (g.dim != c.dim_n()) throw std::invalid_argument("x_gradient: grid dim != field dim_n");
  VecField out(g, c.dim_m());
  const auto stride = g.strides();
  std::array<int, kMaxDim> idx{};
  double du[kMaxDim], xu[kMaxDim];
  for (std::size_t t = 0; t < u.values.size(); ++t) {
    g.decode(t, idx);
    forward_diffs(u, idx, t, stride, du);
    const Mat m = c.eval_unchecked(g.node(idx));
    matvec(m, du, xu);
    for (int j = 0; j < c.dim_m(); ++j) out.at(t, j) = xu[j];
  }
  return out;
}

VecField x_gradient_affine(const ScalarField& phi, const ScalarField& v,
                           const CoefficientField& c) {
  if (!(phi.grid == v.grid)) throw std::invalid_argument("x_gradient_affine: grid mismatch");
  VecField a = x_gradient(phi, c);
  const VecField b = x_gradient(v, c);
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] += b.values[i];
  return a;
}

namespace {

void require_p(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("lp_norm: requires finite p > 1");
}

}  // namespace

double lp_norm(const ScalarField& v, double p) {
  require_p(p);
  double s = 0.0;
  for (const double x : v.values) s += std::pow(std::abs(x), p);
  return std::pow(s * v.grid.cell_volume(), 1.0 / p);
}

double lp_norm(const VecField& v, double p) {
  require_p(p);
  const auto m = static_cast<std::size_t>(v.comps);
  double s = 0.0;
  for (std::size_t t = 0; t < v.grid.node_count(); ++t) {
    double q = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = v.values[t * m + j];
      q += x * x;
    }
    s += std::pow(q, 0.5 * p);
  }
  return std::pow(s * v.grid.cell_volume(), 1.0 / p);
}

double inner(const ScalarField& u, const ScalarField& w) {
  if (!(u.grid == w.grid)) throw std::invalid_argument("inner: grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.values.size(); ++i) s += u.values[i] * w.values[i];
  return s * u.grid.cell_volume();
}

namespace {

static_assert(std::endian::native == std::endian::little, "serialization assumes little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), 8); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

double get_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_header(const Grid& g, std::ostream& out) {
  put_u64(out, static_cast<std::uint64_t>(g.dim));
  for (int k = 0; k < g.dim; ++k) put_u64(out, static_cast<std::uint64_t>(g.res[static_cast<std::size_t>(k)]));
  for (int k = 0; k < g.dim; ++k) put_f64(out, g.lo[static_cast<std::size_t>(k)]);
  for (int k = 0; k < g.dim; ++k) put_f64(out, g.hi[static_cast<std::size_t>(k)]);
}

Grid read_header(std::istream& in) {
  const int dim = static_cast<int>(get_u64(in));
  if (dim < 1 || dim > kMaxDim) throw std::runtime_error("field deserialize: bad dimension");
  std::array<int, kMaxDim> res{1, 1, 1};
  Coord lo{}, hi{};
  for (int k = 0; k < dim; ++k) res[static_cast<std::size_t>(k)] = static_cast<int>(get_u64(in));
  for (int k = 0; k < dim; ++k) lo[static_cast<std::size_t>(k)] = get_f64(in);
  for (int k = 0; k < dim; ++k) hi[static_cast<std::size_t>(k)] = get_f64(in);
  return Grid::make(dim, lo, hi, res);
}

}  // namespace

void write_binary(const ScalarField& f, std::ostream& out) {
  write_header(f.grid, out);
  for (const double v : f.values) put_f64(out, v);
}

ScalarField read_binary_scalar(std::istream& in) {
  const Grid g = read_header(in);
  ScalarField f(g, BoundaryMode::free_extend);
  for (double& v : f.values) v = get_f64(in);
  if (!in) throw std::runtime_error("field deserialize: truncated payload");
  return f;
}

void write_binary(const VecField& f, std::ostream& out) {
  write_header(f.grid, out);
  for (const double v : f.values) put_f64(out, v);
}

VecField read_binary_vec(std::istream& in) {
  const Grid g = read_header(in);
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(start);
  const std::size_t payload = static_cast<std::size_t>(end - start) / 8;
  const std::size_t nodes = g.node_count();
  if (payload == 0 || payload % nodes != 0) throw std::runtime_error("vec field deserialize: bad payload size");
  VecField f(g, static_cast<int>(payload / nodes));
  for (double& v : f.values) v = get_f64(in);
  if (!in) throw std::runtime_error("vec field deserialize: truncated payload");
  return f;
}

namespace {

void write_node_csv(const Grid& g, std::ostream& out, int comps,
                    const std::function<double(std::size_t, int)>& get) {
  for (int k = 0; k < g.dim; ++k) out << "x" << (k + 1) << ",";
  for (int j = 0; j < comps; ++j) out << (j ? "," : "") << "v" << (j + 1);
  out << "\n";
  std::array<int, kMaxDim> idx{};
  char buf[32];
  for (std::size_t t = 0; t < g.node_count(); ++t) {
    g.decode(t, idx);
    const Coord x = g.node(idx);
    for (int k = 0; k < g.dim; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", x[static_cast<std::size_t>(k)]);
      out << buf << ",";
    }
    for (int j = 0; j < comps; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", get(t, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

}  // namespace

void write_csv(const ScalarField& f, std::ostream& out) {
  write_node_csv(f.grid, out, 1, [&](std::size_t t, int) { return f.values[t]; });
}

void write_csv(const VecField& f, std::ostream& out) {
  write_node_csv(f.grid, out, f.comps, [&](std::size_t t, int j) { return f.at(t, j); });
}

}  // namespace gammalab
