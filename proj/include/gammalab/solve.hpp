#ifndef GAMMALAB_SOLVE_HPP
#define GAMMALAB_SOLVE_HPP

#include <optional>
#include <utility>

#include "gammalab/functionals.hpp"

namespace gammalab {

// Discrete Dirichlet problem mu u + L u = g over the affine space phi + V0,
// where V0 is the zero-boundary lattice subspace and L is the adjoint of the
// forward-difference chain weighted by the quadratic integrand.
struct DirichletProblem {
  CoefficientField field;  // some C^h or the limit C
  Integrand a;             // quadratic for linear solves
  double mu = 0.0;
  ScalarField g;    // source
  ScalarField phi;  // boundary datum, free mode
  double p = 2.0;
  // Required when mu = 0: a positive discrete Rayleigh lower bound
  // establishing coercivity before conjugate gradients run.
  std::optional<double> rayleigh_certificate;
};

struct SolveReport {
  ScalarField solution;      // phi + v, free mode
  ScalarField correction;    // v, zero_dirichlet mode
  int iterations = 0;
  double residual = 0.0;     // relative
  double energy = 0.0;
};

// v -> mu v + L v on the zero-boundary space, matrix-free; the output is
// projected back to V0 so that inner(apply(v), w) equals the bilinear form
// mu int v w + quadrature<A X v, X w> for every w in V0.
ScalarField apply_operator(const DirichletProblem& prob, const ScalarField& v);

// Conjugate gradients on the reduced system; relative residual <= tol on
// success, else iteration_error. max_iter = 0 selects 10x the unknown count.
SolveReport solve_dirichlet(const DirichletProblem& prob, double tol = 1e-10, int max_iter = 0);

struct RayleighOptions {
  double eig_tol = 1e-8;       // relative eigenvalue change, p = 2
  double descent_tol = 1e-6;   // relative quotient change, p != 2
  int max_outer = 2000;
  double cg_tol = 1e-10;
  int cg_max_iter = 0;
};

// Smallest discrete Rayleigh quotient ||X u||_p^p / ||u||_p^p over the
// zero-boundary space. For p = 2 this is the smallest eigenvalue of the
// reduced operator, by inverse power iteration with a deterministic sine
// start. For p != 2 it is the value reached by normalized projected gradient
// descent with backtracking, an upper bound on the infimum.
double rayleigh_quotient(const CoefficientField& c, const Grid& grid, double p,
                         const RayleighOptions& opts = {});

// Minimizer of  evaluate(A, u) + (mu/2)||u||^2 - <g, u> + G(u)  over phi + V0
// (the problem's own mass and source enter with the 1/2-weighted convention;
// the perturbation G enters as written). Returns the report and the attained
// minimum of evaluate + G plus the problem's own terms.
std::pair<SolveReport, double> minimize_total(const DirichletProblem& prob, const Perturbation& g,
                                              double tol = 1e-10, int max_iter = 0);

// ||u||_p^p <= (2/R) ||X u||_p^p + 1e-10.
bool poincare_check(const ScalarField& u, const CoefficientField& c, double p, double r);

// Affine variant: ||u||_p^p <= (2^(2p-1)/R)(||X u||_p^p + ||X phi||_p^p)
// + 2^(p-1) ||phi||_p^p + 1e-10.
bool poincare_affine_check(const ScalarField& u, const ScalarField& phi,
                           const CoefficientField& c, double p, double r);

}  // namespace gammalab

#endif
