#include "gammalab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gammalab {

Mat Mat::zero(int m, int n) {
  Mat r;
  r.rows = m;
  r.cols = n;
  return r;
}

Mat Mat::identity(int n) {
  Mat r = zero(n, n);
  for (int i = 0; i < n; ++i) r(i, i) = 1.0;
  return r;
}

Mat operator-(const Mat& x, const Mat& y) {
  Mat r = Mat::zero(x.rows, x.cols);
  for (int i = 0; i < x.rows * x.cols; ++i) r.a[static_cast<std::size_t>(i)] = x.a[static_cast<std::size_t>(i)] - y.a[static_cast<std::size_t>(i)];
  return r;
}

Mat matmul(const Mat& x, const Mat& y) {
  Mat r = Mat::zero(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const double xik = x(i, k);
      for (int j = 0; j < y.cols; ++j) r(i, j) += xik * y(k, j);
    }
  return r;
}

Mat transpose(const Mat& m) {
  Mat r = Mat::zero(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) r(j, i) = m(i, j);
  return r;
}

void matvec(const Mat& m, const double* x, double* y) {
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols; ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
}

double max_abs_entry(const Mat& m) {
  double r = 0.0;
  for (int i = 0; i < m.rows * m.cols; ++i) r = std::max(r, std::abs(m.a[static_cast<std::size_t>(i)]));
  return r;
}

namespace {

std::array<double, 2> sym_eigenvalues_2x2(double a, double b, double d) {
  const double mean = 0.5 * (a + d);
  const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  return {mean + disc, mean - disc};
}

}  // namespace

std::array<double, kMaxDim> sym_eigenvalues(const Mat& s) {
  std::array<double, kMaxDim> ev{};
  if (s.rows == 1) {
    ev[0] = s(0, 0);
    return ev;
  }
  if (s.rows == 2) {
    const auto two = sym_eigenvalues_2x2(s(0, 0), s(0, 1), s(1, 1));
    ev[0] = two[0];
    ev[1] = two[1];
    return ev;
  }
  // Trigonometric solution of the characteristic cubic.
  const double p1 = s(0, 1) * s(0, 1) + s(0, 2) * s(0, 2) + s(1, 2) * s(1, 2);
  if (p1 == 0.0) {
    ev = {s(0, 0), s(1, 1), s(2, 2)};
    std::sort(ev.begin(), ev.begin() + 3, std::greater<double>());
    return ev;
  }
  const double q = (s(0, 0) + s(1, 1) + s(2, 2)) / 3.0;
  const double p2 = (s(0, 0) - q) * (s(0, 0) - q) + (s(1, 1) - q) * (s(1, 1) - q) +
                    (s(2, 2) - q) * (s(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Mat b = Mat::zero(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b(i, j) = (s(i, j) - (i == j ? q : 0.0)) / p;
  const double detb = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) -
                      b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0)) +
                      b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
  const double r = std::clamp(detb / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  ev[0] = q + 2.0 * p * std::cos(phi);
  ev[2] = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  ev[1] = 3.0 * q - ev[0] - ev[2];
  return ev;
}

void sym_eigen_jacobi(const Mat& s, std::array<double, kMaxDim>& evals, Mat& v) {
  const int k = s.rows;
  Mat a = s;
  v = Mat::identity(k);
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < k; ++p)
      for (int q = p + 1; q < k; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-300) break;
    for (int p = 0; p < k; ++p) {
      for (int q = p + 1; q < k; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int i = 0; i < k; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - sn * aiq;
          a(i, q) = sn * aip + c * aiq;
        }
        for (int j = 0; j < k; ++j) {
          const double apj = a(p, j), aqj = a(q, j);
          a(p, j) = c * apj - sn * aqj;
          a(q, j) = sn * apj + c * aqj;
        }
        for (int i = 0; i < k; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - sn * viq;
          v(i, q) = sn * vip + c * viq;
        }
      }
    }
  }
  std::array<int, kMaxDim> order{0, 1, 2};
  std::sort(order.begin(), order.begin() + k, [&](int i, int j) { return a(i, i) > a(j, j); });
  Mat vs = v;
  for (int j = 0; j < k; ++j) {
    evals[static_cast<std::size_t>(j)] = a(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j)]);
    for (int i = 0; i < k; ++i) v(i, j) = vs(i, order[static_cast<std::size_t>(j)]);
  }
}

double operator_norm(const Mat& m) {
  // Gram matrix on the smaller side keeps the closed form within 3x3.
  const Mat g = (m.rows <= m.cols) ? matmul(m, transpose(m)) : matmul(transpose(m), m);
  const double top = sym_eigenvalues(g)[0];
  return std::sqrt(std::max(0.0, top));
}

Mat pseudoinverse(const Mat& m) {
  const int mr = m.rows, mc = m.cols;
  const bool tall = mr >= mc;
  // Eigen-decompose the smaller Gram matrix; singular vectors of the other
  // side come from applying M.
  const Mat g = tall ? matmul(transpose(m), m) : matmul(m, transpose(m));
  std::array<double, kMaxDim> lam{};
  Mat w;
  sym_eigen_jacobi(g, lam, w);
  const int k = g.rows;
  const double smax = std::sqrt(std::max(0.0, lam[0]));
  const double cutoff = 1e-12 * smax;
  Mat pinv = Mat::zero(mc, mr);
  if (smax == 0.0) return pinv;
  for (int j = 0; j < k; ++j) {
    const double sv = std::sqrt(std::max(0.0, lam[static_cast<std::size_t>(j)]));
    if (sv <= cutoff) continue;
    double wj[kMaxDim], other[kMaxDim];
    for (int i = 0; i < k; ++i) wj[i] = w(i, j);
    if (tall) {
      matvec(m, wj, other);  // left singular vector * sv
      for (int r = 0; r < mc; ++r)
        for (int c = 0; c < mr; ++c) pinv(r, c) += wj[r] * other[c] / (sv * sv);
    } else {
      double tmp[kMaxDim];
      Mat mt = transpose(m);
      matvec(mt, wj, tmp);  // right singular vector * sv
      for (int r = 0; r < mc; ++r)
        for (int c = 0; c < mr; ++c) pinv(r, c) += tmp[r] * wj[c] / (sv * sv);
    }
  }
  return pinv;
}

void decompose(const double* xi, const Mat& c, double* xi_v, double* xi_n) {
  const Mat cp = pseudoinverse(c);
  double cxi[kMaxDim];
  matvec(c, xi, cxi);
  matvec(cp, cxi, xi_v);
  for (int i = 0; i < c.cols; ++i) xi_n[i] = xi[i] - xi_v[i];
}

}  // namespace gammalab
