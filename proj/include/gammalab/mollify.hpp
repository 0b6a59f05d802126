#ifndef GAMMALAB_MOLLIFY_HPP
#define GAMMALAB_MOLLIFY_HPP

#include <functional>

#include "gammalab/anisotropy.hpp"
#include "gammalab/grid.hpp"

namespace gammalab {

// Spherically symmetric mollifier: value(x) = normalization * radius^{-dim} *
// profile(|x|/radius), supported in the closed ball of the given radius.
// The normalization makes the discrete mass 1 on a reference resolution;
// convolve renormalizes exactly on the working grid so constants are
// preserved discretely.
struct Mollifier {
  int dim = 0;
  double radius = 1.0;
  std::function<double(double)> profile;  // radial, argument in [0, 1]
  double normalization = 1.0;

  double value(const Coord& x) const;
};

// The bump profile r -> exp(-1/(1-r^2)) for r < 1, else 0, radius 1,
// normalized on a res-64 reference grid.
Mollifier bump_kernel(int n);

// radius sigma, values sigma^{-n} J(x/sigma), renormalized discretely.
Mollifier scaled_kernel(const Mollifier& j, double sigma);

// Maximum kernel gradient magnitude, sampled radially. For the scaled kernel
// this grows like (measured constant) / sigma^{n+1}.
double max_gradient_magnitude(const Mollifier& j, int samples = 4096);

// Discrete convolution with zero extension outside the box; the kernel is
// sampled on the node-offset lattice and renormalized to unit mass there.
// Requires radius >= 3 * max spacing, else resolution_error.
ScalarField convolve(const ScalarField& u, const Mollifier& j);

// One step of the smooth recovery sequence: J_{sigma(h)} * u.
ScalarField meyers_serrin_step(const ScalarField& u, const MovingFamily& family, int h,
                               const Grid& grid);

// Compactly supported approximation of u - phi: J_{sigma(h)} * (psi * (u - phi))
// with psi a fixed smooth cutoff equal to 1 at distance > 2*cutoff_margin from
// the boundary and 0 at distance < cutoff_margin. Requires
// cutoff_margin >= sigma(h) + 2 * max spacing.
ScalarField affine_approx_step(const ScalarField& u, const ScalarField& phi,
                               const MovingFamily& family, int h, double cutoff_margin);

// || X^h (J_h * u) - X (J_h * u) ||_{L^p}.
double commutator_norm(const ScalarField& u, const MovingFamily& family, int h, double p);

// The fixed smooth ramp used for cutoffs: 0 for t <= 0, 1 for t >= 1.
double smooth_ramp(double t);

// Distance from x to the boundary of the box.
double boundary_distance(const Coord& x, const Grid& grid);

}  // namespace gammalab

#endif
