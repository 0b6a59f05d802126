#include "gammalab/functionals.hpp"

#include <cmath>
#include <random>

#include "gammalab/errors.hpp"

namespace gammalab {

const QuadraticIntegrand& Integrand::quadratic() const {
  if (!is_quadratic()) throw std::invalid_argument("integrand: quadratic form required");
  return std::get<QuadraticIntegrand>(kind);
}

const GeneralIntegrand& Integrand::general() const {
  if (is_quadratic()) throw std::invalid_argument("integrand: general form required");
  return std::get<GeneralIntegrand>(kind);
}

Integrand identity_quadratic(int m) {
  Integrand f;
  f.p = 2.0;
  f.kind = QuadraticIntegrand{[m](const Coord&) { return Mat::identity(m); }, 1.0, 1.0};
  return f;
}

namespace {

double quad_form(const Mat& a, const double* eta, int m) {
  double tmp[kMaxDim];
  matvec(a, eta, tmp);
  double s = 0.0;
  for (int j = 0; j < m; ++j) s += tmp[j] * eta[j];
  return s;
}

}  // namespace

void validate_integrand(const Integrand& f, const CoefficientField& c, const Grid& grid,
                        int samples) {
  std::mt19937_64 rng(0x5eedull);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, grid.node_count() - 1);
  const int m = c.dim_m();
  const int n = c.dim_n();
  std::array<int, kMaxDim> idx{};
  for (int s = 0; s < samples; ++s) {
    const std::size_t node = pick(rng);
    grid.decode(node, idx);
    const Coord x = grid.node(idx);
    double xi[kMaxDim], cxi[kMaxDim];
    for (int k = 0; k < n; ++k) xi[k] = unit(rng);
    const Mat cx = c.eval_unchecked(x);
    matvec(cx, xi, cxi);
    double csq = 0.0;
    for (int j = 0; j < m; ++j) csq += cxi[j] * cxi[j];
    if (f.is_quadratic()) {
      const auto& q = f.quadratic();
      const Mat ax = q.a(x);
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
          if (std::abs(ax(i, j) - ax(j, i)) > 1e-12)
            throw config_error("integrand: A(x) not symmetric at sampled node");
      const double v = quad_form(ax, cxi, m);
      if (v < q.lambda * csq - 1e-10 || v > q.big_lambda * csq + 1e-10)
        throw config_error("integrand: ellipticity sandwich violated at sampled node");
    } else {
      const auto& gf = f.general();
      const double v = gf.f(x, cxi, m);
      const double pw = std::pow(csq, 0.5 * f.p);
      const double aval = gf.a.values.empty() ? 0.0 : gf.a.values[node % gf.a.values.size()];
      if (v < gf.d1 * pw - 1e-10 || v > std::abs(aval) + gf.d2 * pw + 1e-10)
        throw config_error("integrand: growth sandwich violated at sampled node");
    }
  }
}

namespace {

template <typename EtaFn>
double quadrature_over_nodes(const Integrand& f, const Grid& grid, int m, EtaFn&& eta_at) {
  std::array<int, kMaxDim> idx{};
  double acc = 0.0;
  if (f.is_quadratic()) {
    const auto& q = f.quadratic();
    for (std::size_t t = 0; t < grid.node_count(); ++t) {
      grid.decode(t, idx);
      const Coord x = grid.node(idx);
      double eta[kMaxDim];
      eta_at(t, eta);
      acc += quad_form(q.a(x), eta, m);
    }
  } else {
    const auto& gf = f.general();
    for (std::size_t t = 0; t < grid.node_count(); ++t) {
      grid.decode(t, idx);
      const Coord x = grid.node(idx);
      double eta[kMaxDim];
      eta_at(t, eta);
      acc += gf.f(x, eta, m);
    }
  }
  return acc * grid.cell_volume();
}

}  // namespace

double evaluate(const Integrand& f, const ScalarField& u, const CoefficientField& c) {
  const VecField xu = x_gradient(u, c);
  const int m = c.dim_m();
  return quadrature_over_nodes(f, u.grid, m, [&](std::size_t t, double* eta) {
    for (int j = 0; j < m; ++j) eta[j] = xu.at(t, j);
  });
}

double evaluate_affine(const Integrand& f, const ScalarField& phi, const ScalarField& v,
                       const CoefficientField& c) {
  const VecField xu = x_gradient_affine(phi, v, c);
  const int m = c.dim_m();
  return quadrature_over_nodes(f, phi.grid, m, [&](std::size_t t, double* eta) {
    for (int j = 0; j < m; ++j) eta[j] = xu.at(t, j);
  });
}

bool growth_check(const Integrand& f, const ScalarField& u, const CoefficientField& c) {
  const double value = evaluate(f, u, c);
  const double xnorm_p = std::pow(lp_norm(x_gradient(u, c), f.p), f.p);
  double d1, d2, a_int = 0.0;
  if (f.is_quadratic()) {
    d1 = f.quadratic().lambda;
    d2 = f.quadratic().big_lambda;
  } else {
    d1 = f.general().d1;
    d2 = f.general().d2;
    for (const double av : f.general().a.values) a_int += av;
    a_int *= f.general().a.grid.cell_volume();
  }
  constexpr double kSlack = 1e-10;
  return d1 * xnorm_p <= value + kSlack && value <= a_int + d2 * xnorm_p + kSlack;
}

namespace {

void combined_eta(const VecField& xu, const VecField& cphi, std::size_t t, int m, double* eta) {
  for (int j = 0; j < m; ++j) eta[j] = xu.at(t, j) + cphi.at(t, j);
}

VecField apply_c(const VecField& phi, const CoefficientField& c, const Grid& grid) {
  if (phi.comps != c.dim_n()) throw std::invalid_argument("perturbation field: needs n components");
  VecField out(grid, c.dim_m());
  std::array<int, kMaxDim> idx{};
  double in[kMaxDim], tmp[kMaxDim];
  for (std::size_t t = 0; t < grid.node_count(); ++t) {
    grid.decode(t, idx);
    const Mat cx = c.eval_unchecked(grid.node(idx));
    for (int j = 0; j < phi.comps; ++j) in[j] = phi.at(t, j);
    matvec(cx, in, tmp);
    for (int j = 0; j < c.dim_m(); ++j) out.at(t, j) = tmp[j];
  }
  return out;
}

}  // namespace

double perturbed_energy(const Integrand& f, const ScalarField& u, const VecField& phi,
                        const CoefficientField& c) {
  const auto& q = f.quadratic();
  const VecField xu = x_gradient(u, c);
  const VecField cphi = apply_c(phi, c, u.grid);
  const int m = c.dim_m();
  std::array<int, kMaxDim> idx{};
  double acc = 0.0;
  for (std::size_t t = 0; t < u.grid.node_count(); ++t) {
    u.grid.decode(t, idx);
    double eta[kMaxDim];
    combined_eta(xu, cphi, t, m, eta);
    acc += quad_form(q.a(u.grid.node(idx)), eta, m);
  }
  return acc * u.grid.cell_volume();
}

double momentum(const Integrand& f, const ScalarField& u, const VecField& phi,
                const CoefficientField& c) {
  const VecField xu = x_gradient(u, c);
  const VecField cphi = apply_c(phi, c, u.grid);
  const auto& q = f.quadratic();
  const int m = c.dim_m();
  std::array<int, kMaxDim> idx{};
  double acc = 0.0;
  double eta[kMaxDim], axu[kMaxDim];
  for (std::size_t t = 0; t < u.grid.node_count(); ++t) {
    u.grid.decode(t, idx);
    for (int j = 0; j < m; ++j) eta[j] = xu.at(t, j);
    matvec(q.a(u.grid.node(idx)), eta, axu);
    for (int j = 0; j < m; ++j) acc += axu[j] * cphi.at(t, j);
  }
  return acc * u.grid.cell_volume();
}

double momentum_affine(const Integrand& f, const ScalarField& bdry, const ScalarField& v,
                       const VecField& phi, const CoefficientField& c) {
  const VecField xu = x_gradient_affine(bdry, v, c);
  const VecField cphi = apply_c(phi, c, v.grid);
  const auto& q = f.quadratic();
  const int m = c.dim_m();
  std::array<int, kMaxDim> idx{};
  double acc = 0.0;
  double eta[kMaxDim], axu[kMaxDim];
  for (std::size_t t = 0; t < v.grid.node_count(); ++t) {
    v.grid.decode(t, idx);
    for (int j = 0; j < m; ++j) eta[j] = xu.at(t, j);
    matvec(q.a(v.grid.node(idx)), eta, axu);
    for (int j = 0; j < m; ++j) acc += axu[j] * cphi.at(t, j);
  }
  return acc * v.grid.cell_volume();
}

double perturbation_value(const Perturbation& g, const ScalarField& u) {
  const double mass = std::pow(lp_norm(u, g.p), g.p);
  return (g.mu / g.p) * mass - inner(g.g, u);
}

EpsilonDelta epsilon_delta_constants(const Perturbation& g, double epsilon) {
  // Young: |g u| <= eps |u|^p + C(eps) |g|^q with C(eps) = (eps p)^(-q/p) / q.
  const double p = g.p;
  const double q = p / (p - 1.0);
  const double gq = std::pow(lp_norm(g.g, q), q);
  EpsilonDelta out;
  out.epsilon = epsilon;
  out.delta1 = std::pow(epsilon * p, -q / p) / q * gq;
  out.delta2 = out.delta1;
  out.delta3 = g.mu / p + epsilon;
  return out;
}

}  // namespace gammalab
