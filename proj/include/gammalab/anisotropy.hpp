#ifndef GAMMALAB_ANISOTROPY_HPP
#define GAMMALAB_ANISOTROPY_HPP

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gammalab/grid.hpp"
#include "gammalab/linalg.hpp"

namespace gammalab {

// A family X = (X_1, ..., X_m) of vector fields on a box, encoded by its
// m x n coefficient matrix x -> C(x). Evaluation is pure; instances are
// immutable after construction and safe to share across threads.
class CoefficientField {
public:
  CoefficientField() = default;
  CoefficientField(int dim_n, int dim_m, Coord box_lo, Coord box_hi,
                   std::function<Mat(const Coord&)> eval,
                   std::optional<double> lipschitz_hint = std::nullopt);

  int dim_n() const { return dim_n_; }
  int dim_m() const { return dim_m_; }
  const Coord& box_lo() const { return box_lo_; }
  const Coord& box_hi() const { return box_hi_; }
  std::optional<double> lipschitz_hint() const { return lipschitz_hint_; }

  // C(x); throws std::domain_error outside the closed box.
  Mat eval(const Coord& x) const;

  // Unchecked evaluation, for grid sweeps whose nodes are inside by
  // construction.
  Mat eval_unchecked(const Coord& x) const { return eval_(x); }

  bool contains(const Coord& x) const;

private:
  int dim_n_ = 0;
  int dim_m_ = 0;
  Coord box_lo_{};
  Coord box_hi_{};
  std::function<Mat(const Coord&)> eval_;
  std::optional<double> lipschitz_hint_;
};

enum class ClassTag { S1, S2 };

// A limit anisotropy together with its approximating sequence h -> C^h.
struct MovingFamily {
  std::string name;
  CoefficientField limit;
  std::function<CoefficientField(int)> generator;
  std::set<ClassTag> class_tags;
  std::function<double(int)> sigma_override;  // empty unless declared

  CoefficientField at(int h) const;
};

// Built-in families. Every builtin accepts an optional box override through
// `box_lo`/`box_hi`; `euclidean` and `constant_matrix` read `dim` and
// `entries` respectively.
struct FamilyParams {
  std::optional<Coord> box_lo;
  std::optional<Coord> box_hi;
  int dim = 2;                               // euclidean only
  std::vector<std::vector<double>> entries;  // constant_matrix only
};

// Names: euclidean, grushin, heisenberg, heisenberg_lift, grushin_lift,
// degenerate_2d, s1_not_s2, constant_matrix. Unknown names throw config_error.
MovingFamily builtin_family(const std::string& name, const FamilyParams& params = {});

std::vector<std::string> builtin_family_names();

// max over grid nodes of the largest singular value of C^h(x) - C(x).
double sup_opnorm_diff(const MovingFamily& family, int h, const Grid& grid);

// The mollification modulus: the override when declared, else
// (sup opnorm diff)^(1/(n+2)) nudged so that sigma^(n+2) >= sup holds exactly,
// with fallback 1/h when the sup vanishes.
double sigma(const MovingFamily& family, int h, const Grid& grid);

struct ClassifyResult {
  bool s1_shape = false;
  double s2_lip_bound = 0.0;
};

// s1_shape: for every probed h the leading rows of C^h equal the nonzero rows
// of the limit and the remaining limit rows vanish (entrywise 1e-12).
// s2_lip_bound: max over probed h of the adjacent-node finite-difference
// Lipschitz estimate, a lower bound on the true constant, reported for
// classification only.
ClassifyResult classify(const MovingFamily& family, const Grid& grid, const std::vector<int>& h_probe);

// Adjacent-node finite-difference Lipschitz estimate of a single coefficient
// field (max over entries and axes).
double lipschitz_estimate(const CoefficientField& field, const Grid& grid);

}  // namespace gammalab

#endif
