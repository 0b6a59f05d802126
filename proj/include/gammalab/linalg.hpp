#ifndef GAMMALAB_LINALG_HPP
#define GAMMALAB_LINALG_HPP

#include <array>
#include <cstddef>

namespace gammalab {

constexpr int kMaxDim = 3;

using Coord = std::array<double, kMaxDim>;

// Dense real matrix with at most 3 rows and 3 columns, stored row-major.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::array<double, kMaxDim * kMaxDim> a{};

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i * cols + j)]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i * cols + j)]; }

  static Mat zero(int m, int n);
  static Mat identity(int n);
};

Mat operator-(const Mat& x, const Mat& y);
Mat matmul(const Mat& x, const Mat& y);
Mat transpose(const Mat& m);

// y = M x, with x of length M.cols and y of length M.rows.
void matvec(const Mat& m, const double* x, double* y);

double max_abs_entry(const Mat& m);

// Eigenvalues of a symmetric k x k matrix (k <= 3) in descending order,
// by closed form: quadratic formula for k = 2, trigonometric solution of the
// characteristic cubic for k = 3. No iteration.
std::array<double, kMaxDim> sym_eigenvalues(const Mat& s);

// Full eigendecomposition of a symmetric k x k matrix by cyclic Jacobi
// rotations; eigenvalues descending, eigenvectors as columns of v.
void sym_eigen_jacobi(const Mat& s, std::array<double, kMaxDim>& evals, Mat& v);

// Largest singular value, via the closed-form eigenvalues of the Gram matrix.
double operator_norm(const Mat& m);

// Moore-Penrose pseudoinverse. Singular values below 1e-12 times the largest
// one are treated as zero; the zero matrix maps to the zero matrix.
Mat pseudoinverse(const Mat& m);

// Split xi into xi_v + xi_n with xi_v = pinv(C) C xi in the row space of C
// and xi_n in its kernel.
void decompose(const double* xi, const Mat& c, double* xi_v, double* xi_n);

}  // namespace gammalab

#endif
