#include "gammalab/mollify.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "gammalab/errors.hpp"

namespace gammalab {

namespace {

double bump_profile(double r) {
  if (r >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - r * r));
}

double norm2(const Coord& x, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
  return std::sqrt(s);
}

// Discrete mass of the unnormalized kernel on a uniform lattice with the
// given spacing, summed over the support.
double discrete_mass(const Mollifier& j, double dx) {
  const int reach = static_cast<int>(std::floor(j.radius / dx)) + 1;
  double mass = 0.0;
  std::array<int, kMaxDim> k{};
  const int lo = -reach, hi = reach;
  auto term = [&](const std::array<int, kMaxDim>& kk) {
    Coord x{};
    for (int d = 0; d < j.dim; ++d) x[static_cast<std::size_t>(d)] = kk[static_cast<std::size_t>(d)] * dx;
    const double r = norm2(x, j.dim) / j.radius;
    return std::pow(j.radius, -j.dim) * j.profile(r);
  };
  if (j.dim == 1) {
    for (k[0] = lo; k[0] <= hi; ++k[0]) mass += term(k);
  } else if (j.dim == 2) {
    for (k[0] = lo; k[0] <= hi; ++k[0])
      for (k[1] = lo; k[1] <= hi; ++k[1]) mass += term(k);
  } else {
    for (k[0] = lo; k[0] <= hi; ++k[0])
      for (k[1] = lo; k[1] <= hi; ++k[1])
        for (k[2] = lo; k[2] <= hi; ++k[2]) mass += term(k);
  }
  return mass * std::pow(dx, j.dim);
}

constexpr int kReferenceRes = 64;

}  // namespace

double Mollifier::value(const Coord& x) const {
  const double r = norm2(x, dim) / radius;
  return normalization * std::pow(radius, -dim) * profile(r);
}

Mollifier bump_kernel(int n) {
  if (n < 1 || n > kMaxDim) throw std::invalid_argument("bump_kernel: n must be 1..3");
  Mollifier j;
  j.dim = n;
  j.radius = 1.0;
  j.profile = bump_profile;
  j.normalization = 1.0;
  // Reference normalization: unit discrete mass at spacing 2R/res.
  const double dx = 2.0 * j.radius / kReferenceRes;
  j.normalization = 1.0 / discrete_mass(j, dx);
  return j;
}

Mollifier scaled_kernel(const Mollifier& j, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("scaled_kernel: sigma must be positive");
  Mollifier s = j;
  s.radius = j.radius * sigma;
  const double dx = 2.0 * s.radius / kReferenceRes;
  s.normalization = 1.0 / discrete_mass(Mollifier{s.dim, s.radius, s.profile, 1.0}, dx);
  return s;
}

double max_gradient_magnitude(const Mollifier& j, int samples) {
  // Spherical symmetry: |DJ| = |d/dr J(r e)|, sampled radially.
  double best = 0.0;
  const double dr = j.radius / samples;
  for (int i = 1; i < samples; ++i) {
    const double r0 = i * dr;
    Coord a{}, b{};
    a[0] = r0 - 0.5 * dr;
    b[0] = r0 + 0.5 * dr;
    best = std::max(best, std::abs(j.value(b) - j.value(a)) / dr);
  }
  return best;
}

namespace {

struct KernelTable {
  std::vector<double> w;  // renormalized weights, sum exactly 1
  std::array<int, kMaxDim> reach{};
};

KernelTable sample_kernel(const Mollifier& j, const Grid& grid) {
  if (j.dim != grid.dim) throw std::invalid_argument("convolve: kernel/grid dimension mismatch");
  if (j.radius < 3.0 * grid.max_spacing()) {
    std::ostringstream msg;
    msg << "convolve: kernel radius " << j.radius << " under-resolved; need radius >= "
        << 3.0 * grid.max_spacing() << " (3x max spacing)";
    throw resolution_error(msg.str());
  }
  KernelTable t;
  for (int k = 0; k < grid.dim; ++k)
    t.reach[static_cast<std::size_t>(k)] = static_cast<int>(std::floor(j.radius / grid.spacing[static_cast<std::size_t>(k)]));
  std::array<int, kMaxDim> ext{1, 1, 1};
  for (int k = 0; k < grid.dim; ++k) ext[static_cast<std::size_t>(k)] = 2 * t.reach[static_cast<std::size_t>(k)] + 1;
  t.w.assign(static_cast<std::size_t>(ext[0]) * static_cast<std::size_t>(ext[1]) * static_cast<std::size_t>(ext[2]), 0.0);
  double mass = 0.0;
  std::size_t idx = 0;
  for (int a = -t.reach[0]; a <= t.reach[0]; ++a)
    for (int b = (grid.dim > 1 ? -t.reach[1] : 0); b <= (grid.dim > 1 ? t.reach[1] : 0); ++b)
      for (int c = (grid.dim > 2 ? -t.reach[2] : 0); c <= (grid.dim > 2 ? t.reach[2] : 0); ++c) {
        Coord x{};
        x[0] = a * grid.spacing[0];
        if (grid.dim > 1) x[1] = b * grid.spacing[1];
        if (grid.dim > 2) x[2] = c * grid.spacing[2];
        const double v = j.value(x);
        t.w[idx++] = v;
        mass += v;
      }
  // Renormalize on the working lattice so the discrete mass is exactly 1.
  for (double& v : t.w) v /= mass;
  return t;
}

}  // namespace

ScalarField convolve(const ScalarField& u, const Mollifier& j) {
  const Grid& g = u.grid;
  const KernelTable t = sample_kernel(j, g);
  ScalarField out(g, u.mode);
  const auto stride = g.strides();
  std::array<int, kMaxDim> idx{};
  const int r0 = t.reach[0];
  const int r1 = (g.dim > 1) ? t.reach[1] : 0;
  const int r2 = (g.dim > 2) ? t.reach[2] : 0;
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    g.decode(n, idx);
    double acc = 0.0;
    std::size_t wi = 0;
    for (int a = -r0; a <= r0; ++a) {
      const int i0 = idx[0] - a;
      const bool ok0 = (i0 >= 0 && i0 < g.res[0]);
      for (int b = -r1; b <= r1; ++b) {
        const int i1 = idx[1] - b;
        const bool ok1 = (g.dim < 2) || (i1 >= 0 && i1 < g.res[1]);
        for (int c = -r2; c <= r2; ++c, ++wi) {
          if (!ok0 || !ok1) continue;
          const int i2 = idx[2] - c;
          if (g.dim > 2 && (i2 < 0 || i2 >= g.res[2])) continue;
          const std::size_t src = static_cast<std::size_t>(i0) * stride[0] +
                                  (g.dim > 1 ? static_cast<std::size_t>(i1) * stride[1] : 0) +
                                  (g.dim > 2 ? static_cast<std::size_t>(i2) * stride[2] : 0);
          acc += t.w[wi] * u.values[src];
        }
      }
    }
    out.values[n] = acc;
  }
  return out;
}

ScalarField meyers_serrin_step(const ScalarField& u, const MovingFamily& family, int h,
                               const Grid& grid) {
  const double s = sigma(family, h, grid);
  const Mollifier j = scaled_kernel(bump_kernel(grid.dim), s);
  return convolve(u, j);
}

double smooth_ramp(double t) {
  auto g = [](double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; };
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return g(t) / (g(t) + g(1.0 - t));
}

double boundary_distance(const Coord& x, const Grid& grid) {
  double d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.dim; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    d = std::min(d, x[ks] - grid.lo[ks]);
    d = std::min(d, grid.hi[ks] - x[ks]);
  }
  return d;
}

ScalarField affine_approx_step(const ScalarField& u, const ScalarField& phi,
                               const MovingFamily& family, int h, double cutoff_margin) {
  if (!(u.grid == phi.grid)) throw std::invalid_argument("affine_approx_step: grid mismatch");
  const Grid& g = u.grid;
  const double s = sigma(family, h, g);
  if (cutoff_margin < s + 2.0 * g.max_spacing()) {
    std::ostringstream msg;
    msg << "affine_approx_step: cutoff margin " << cutoff_margin << " too small; need >= "
        << s + 2.0 * g.max_spacing() << " (sigma(h) + 2x max spacing)";
    throw resolution_error(msg.str());
  }
  ScalarField w(g, BoundaryMode::zero_dirichlet);
  std::array<int, kMaxDim> idx{};
  for (std::size_t t = 0; t < g.node_count(); ++t) {
    g.decode(t, idx);
    const Coord x = g.node(idx);
    const double psi = smooth_ramp((boundary_distance(x, g) - cutoff_margin) / cutoff_margin);
    w.values[t] = psi * (u.values[t] - phi.values[t]);
  }
  const Mollifier j = scaled_kernel(bump_kernel(g.dim), s);
  return convolve(w, j);
}

double commutator_norm(const ScalarField& u, const MovingFamily& family, int h, double p) {
  const ScalarField v = meyers_serrin_step(u, family, h, u.grid);
  const VecField xh = x_gradient(v, family.at(h));
  const VecField x = x_gradient(v, family.limit);
  return lp_norm(xh - x, p);
}

}  // namespace gammalab
