#include "gammalab/anisotropy.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "gammalab/errors.hpp"

namespace gammalab {

CoefficientField::CoefficientField(int dim_n, int dim_m, Coord box_lo, Coord box_hi,
                                   std::function<Mat(const Coord&)> eval,
                                   std::optional<double> lipschitz_hint)
    : dim_n_(dim_n),
      dim_m_(dim_m),
      box_lo_(box_lo),
      box_hi_(box_hi),
      eval_(std::move(eval)),
      lipschitz_hint_(lipschitz_hint) {
  if (dim_n < 1 || dim_n > kMaxDim) throw std::invalid_argument("coefficient field: dim_n must be 1..3");
  if (dim_m < 1 || dim_m > kMaxDim) throw std::invalid_argument("coefficient field: dim_m must be 1..3");
}

bool CoefficientField::contains(const Coord& x) const {
  for (int k = 0; k < dim_n_; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (x[ks] < box_lo_[ks] || x[ks] > box_hi_[ks]) return false;
  }
  return true;
}

Mat CoefficientField::eval(const Coord& x) const {
  if (!contains(x)) throw std::domain_error("coefficient field: point outside the closed box");
  return eval_(x);
}

CoefficientField MovingFamily::at(int h) const {
  if (h < 1) throw std::invalid_argument("moving family: h must be >= 1");
  return generator(h);
}

namespace {

Coord default_lo(int dim, double v) {
  Coord c{};
  for (int k = 0; k < dim; ++k) c[static_cast<std::size_t>(k)] = v;
  return c;
}

struct BoxSpec {
  Coord lo, hi;
};

BoxSpec resolve_box(const FamilyParams& p, int dim, double lo_default, double hi_default) {
  BoxSpec b{default_lo(dim, lo_default), default_lo(dim, hi_default)};
  if (p.box_lo) b.lo = *p.box_lo;
  if (p.box_hi) b.hi = *p.box_hi;
  return b;
}

// Piecewise profile of the S1-but-not-S2 example: slope h in a shrinking
// window around x2 = 0, clamped to +-1/h outside it.
double s1_not_s2_profile(int h, double x2) {
  const double hh = static_cast<double>(h);
  const double knee = 1.0 / (hh * hh);
  if (x2 < -knee) return -1.0 / hh;
  if (x2 > knee) return 1.0 / hh;
  return hh * x2;
}

}  // namespace

MovingFamily builtin_family(const std::string& name, const FamilyParams& params) {
  MovingFamily fam;
  fam.name = name;
  if (name == "euclidean") {
    const int n = params.dim;
    if (n < 1 || n > kMaxDim) throw config_error("euclidean family: dim must be 1..3");
    const BoxSpec b = resolve_box(params, n, 0.0, 1.0);
    auto eval = [n](const Coord&) { return Mat::identity(n); };
    fam.limit = CoefficientField(n, n, b.lo, b.hi, eval, 0.0);
    fam.generator = [f = fam.limit](int) { return f; };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else if (name == "grushin") {
    const BoxSpec b = resolve_box(params, 2, 0.0, 1.0);
    auto eval = [](const Coord& x) {
      Mat m = Mat::zero(2, 2);
      m(0, 0) = 1.0;
      m(1, 1) = x[0];
      return m;
    };
    fam.limit = CoefficientField(2, 2, b.lo, b.hi, eval, 1.0);
    fam.generator = [f = fam.limit](int) { return f; };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else if (name == "heisenberg") {
    const BoxSpec b = resolve_box(params, 3, 0.0, 1.0);
    auto eval = [](const Coord& x) {
      Mat m = Mat::zero(2, 3);
      m(0, 0) = 1.0;
      m(0, 2) = x[1];
      m(1, 1) = 1.0;
      m(1, 2) = -x[0];
      return m;
    };
    fam.limit = CoefficientField(3, 2, b.lo, b.hi, eval, 1.0);
    fam.generator = [f = fam.limit](int) { return f; };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else if (name == "heisenberg_lift") {
    const BoxSpec b = resolve_box(params, 3, 0.0, 1.0);
    auto limit_eval = [](const Coord& x) {
      Mat m = Mat::zero(3, 3);
      m(0, 0) = 1.0;
      m(0, 2) = x[1];
      m(1, 1) = 1.0;
      m(1, 2) = -x[0];
      return m;
    };
    fam.limit = CoefficientField(3, 3, b.lo, b.hi, limit_eval, 1.0);
    fam.generator = [b](int h) {
      auto eval = [h](const Coord& x) {
        Mat m = Mat::zero(3, 3);
        m(0, 0) = 1.0;
        m(0, 2) = x[1];
        m(1, 1) = 1.0;
        m(1, 2) = -x[0];
        m(2, 2) = 1.0 / h;
        return m;
      };
      return CoefficientField(3, 3, b.lo, b.hi, eval, 1.0);
    };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else if (name == "grushin_lift") {
    const BoxSpec b = resolve_box(params, 2, 0.0, 1.0);
    auto limit_eval = [](const Coord& x) {
      Mat m = Mat::zero(3, 2);
      m(0, 0) = 1.0;
      m(1, 1) = x[0];
      return m;
    };
    fam.limit = CoefficientField(2, 3, b.lo, b.hi, limit_eval, 1.0);
    fam.generator = [b](int h) {
      auto eval = [h](const Coord& x) {
        Mat m = Mat::zero(3, 2);
        m(0, 0) = 1.0;
        m(1, 1) = x[0];
        m(2, 1) = 1.0 / h;
        return m;
      };
      return CoefficientField(2, 3, b.lo, b.hi, eval, 1.0);
    };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else if (name == "degenerate_2d") {
    const BoxSpec b = resolve_box(params, 2, 0.0, 1.0);
    auto limit_eval = [](const Coord&) {
      Mat m = Mat::zero(2, 2);
      m(0, 0) = 1.0;
      return m;
    };
    fam.limit = CoefficientField(2, 2, b.lo, b.hi, limit_eval, 0.0);
    fam.generator = [b](int h) {
      auto eval = [h](const Coord&) {
        Mat m = Mat::zero(2, 2);
        m(0, 0) = 1.0;
        m(1, 1) = 1.0 / h;
        return m;
      };
      return CoefficientField(2, 2, b.lo, b.hi, eval, 0.0);
    };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else if (name == "s1_not_s2") {
    const BoxSpec b = resolve_box(params, 2, -1.0, 1.0);
    auto limit_eval = [](const Coord&) {
      Mat m = Mat::zero(2, 2);
      m(0, 0) = 1.0;
      return m;
    };
    fam.limit = CoefficientField(2, 2, b.lo, b.hi, limit_eval, 0.0);
    fam.generator = [b](int h) {
      auto eval = [h](const Coord& x) {
        Mat m = Mat::zero(2, 2);
        m(0, 0) = 1.0;
        m(1, 1) = s1_not_s2_profile(h, x[1]);
        return m;
      };
      return CoefficientField(2, 2, b.lo, b.hi, eval, static_cast<double>(h));
    };
    fam.class_tags = {ClassTag::S1};
  } else if (name == "constant_matrix") {
    if (params.entries.empty()) throw config_error("constant_matrix family: entries required");
    const int m = static_cast<int>(params.entries.size());
    const int n = static_cast<int>(params.entries.front().size());
    if (m < 1 || m > kMaxDim || n < 1 || n > kMaxDim)
      throw config_error("constant_matrix family: shape must be within 3x3");
    Mat cm = Mat::zero(m, n);
    for (int i = 0; i < m; ++i) {
      if (static_cast<int>(params.entries[static_cast<std::size_t>(i)].size()) != n)
        throw config_error("constant_matrix family: ragged entries");
      for (int j = 0; j < n; ++j) cm(i, j) = params.entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    const BoxSpec b = resolve_box(params, n, 0.0, 1.0);
    auto eval = [cm](const Coord&) { return cm; };
    fam.limit = CoefficientField(n, m, b.lo, b.hi, eval, 0.0);
    fam.generator = [f = fam.limit](int) { return f; };
    fam.class_tags = {ClassTag::S1, ClassTag::S2};
  } else {
    throw config_error("unknown family name: " + name);
  }
  return fam;
}

std::vector<std::string> builtin_family_names() {
  return {"euclidean",    "grushin",       "heisenberg", "heisenberg_lift",
          "grushin_lift", "degenerate_2d", "s1_not_s2",  "constant_matrix"};
}

double sup_opnorm_diff(const MovingFamily& family, int h, const Grid& grid) {
  const CoefficientField ch = family.at(h);
  double sup = 0.0;
  std::array<int, kMaxDim> idx{};
  for (std::size_t t = 0; t < grid.node_count(); ++t) {
    grid.decode(t, idx);
    const Coord x = grid.node(idx);
    const Mat d = ch.eval_unchecked(x) - family.limit.eval_unchecked(x);
    sup = std::max(sup, operator_norm(d));
  }
  return sup;
}

double sigma(const MovingFamily& family, int h, const Grid& grid) {
  if (h < 1) throw std::invalid_argument("sigma: h must be >= 1");
  if (family.sigma_override) return family.sigma_override(h);
  const double sup = sup_opnorm_diff(family, h, grid);
  if (sup == 0.0) return 1.0 / h;
  const int n = family.limit.dim_n();
  double s = std::pow(sup, 1.0 / (n + 2));
  // pow round-trip may land a few ulp short of the defining inequality.
  while (std::pow(s, n + 2) < sup) s *= 1.0 + 4e-16;
  return s;
}

double lipschitz_estimate(const CoefficientField& field, const Grid& grid) {
  const auto stride = grid.strides();
  std::array<int, kMaxDim> idx{};
  std::vector<Mat> row(grid.node_count());
  for (std::size_t t = 0; t < grid.node_count(); ++t) {
    grid.decode(t, idx);
    row[t] = field.eval_unchecked(grid.node(idx));
  }
  double lip = 0.0;
  const int entries = field.dim_m() * field.dim_n();
  for (std::size_t t = 0; t < grid.node_count(); ++t) {
    grid.decode(t, idx);
    for (int k = 0; k < grid.dim; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      if (idx[ks] + 1 >= grid.res[ks]) continue;
      const Mat& a = row[t];
      const Mat& b = row[t + stride[ks]];
      for (int e = 0; e < entries; ++e)
        lip = std::max(lip, std::abs(b.a[static_cast<std::size_t>(e)] - a.a[static_cast<std::size_t>(e)]) / grid.spacing[ks]);
    }
  }
  return lip;
}

ClassifyResult classify(const MovingFamily& family, const Grid& grid, const std::vector<int>& h_probe) {
  if (h_probe.empty()) throw std::invalid_argument("classify: nonempty probe list required");
  ClassifyResult out;
  const int m = family.limit.dim_m();
  const int n = family.limit.dim_n();
  constexpr double kTol = 1e-12;

  // Rows of the limit that vanish at every node are the S1 padding block.
  std::vector<bool> row_nonzero(static_cast<std::size_t>(m), false);
  std::array<int, kMaxDim> idx{};
  std::vector<Mat> limit_rows(grid.node_count());
  for (std::size_t t = 0; t < grid.node_count(); ++t) {
    grid.decode(t, idx);
    limit_rows[t] = family.limit.eval_unchecked(grid.node(idx));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        if (std::abs(limit_rows[t](i, j)) > kTol) row_nonzero[static_cast<std::size_t>(i)] = true;
  }
  int leading = 0;
  while (leading < m && row_nonzero[static_cast<std::size_t>(leading)]) ++leading;
  bool trailing_zero = true;
  for (int i = leading; i < m; ++i)
    if (row_nonzero[static_cast<std::size_t>(i)]) trailing_zero = false;

  out.s1_shape = trailing_zero;
  for (const int h : h_probe) {
    const CoefficientField ch = family.at(h);
    out.s2_lip_bound = std::max(out.s2_lip_bound, lipschitz_estimate(ch, grid));
    if (!out.s1_shape) continue;
    for (std::size_t t = 0; t < grid.node_count() && out.s1_shape; ++t) {
      grid.decode(t, idx);
      const Mat chx = ch.eval_unchecked(grid.node(idx));
      for (int i = 0; i < leading && out.s1_shape; ++i)
        for (int j = 0; j < n; ++j)
          if (std::abs(chx(i, j) - limit_rows[t](i, j)) > kTol) {
            out.s1_shape = false;
            break;
          }
    }
  }
  return out;
}

}  // namespace gammalab
