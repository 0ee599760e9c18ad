#include "kdla/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kdla/errors.hpp"

namespace kdla {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// QR of the tall matrix T = At^T (m x n, m >= n). Works on At (n x m) so each column of T
// is a contiguous row. Returns R (n x n) and Q^T (n x m).
struct TallQr {
  Matrix r;
  Matrix qt;
};

// Reflectors of one panel in compact WY form: H_k0 ... H_{k0+b-1} = I - Y T Y^T, stored as
// v = Y^T (b x len, columns k0..m-1 of At) and the upper triangular t.
struct Panel {
  std::size_t k0;
  Matrix v;
  Matrix t;
};

Matrix copy_block(const Matrix& a, std::size_t r0, std::size_t c0) {
  Matrix out(a.rows() - r0, a.cols() - c0);
  for (std::size_t i = 0; i < out.rows(); ++i)
    std::copy_n(a.data() + (r0 + i) * a.cols() + c0, out.cols(), out.data() + i * out.cols());
  return out;
}

void store_block(Matrix& a, std::size_t r0, std::size_t c0, const Matrix& b) {
  for (std::size_t i = 0; i < b.rows(); ++i)
    std::copy_n(b.data() + i * b.cols(), b.cols(), a.data() + (r0 + i) * a.cols() + c0);
}

// rows <- rows (I - Y T Y^T) for the panel's columns; `rows` spans columns k0..m-1.
void apply_panel(Matrix& rows, const Panel& p) {
  Matrix w = matmul(matmul_nt(rows, p.v), p.t);
  rows -= matmul(w, p.v);
}

TallQr tall_qr_transposed(Matrix at) {
  const std::size_t n = at.rows(), m = at.cols();
  constexpr std::size_t kPanel = 32;
  std::vector<double> beta(n, 0.0), alpha(n, 0.0);
  std::vector<Panel> panels;
  for (std::size_t k0 = 0; k0 < n; k0 += kPanel) {
    const std::size_t b = std::min(kPanel, n - k0);
    for (std::size_t k = k0; k < k0 + b; ++k) {
      double* v = at.data() + k * m + k;
      const std::size_t len = m - k;
      const double norm = std::sqrt(dot(v, v, len));
      if (norm == 0.0) continue;
      alpha[k] = v[0] > 0 ? -norm : norm;
      v[0] -= alpha[k];
      beta[k] = 2.0 / dot(v, v, len);
      for (std::size_t j = k + 1; j < k0 + b; ++j) {
        double* w = at.data() + j * m + k;
        axpy(-beta[k] * dot(v, w, len), v, w, len);
      }
    }
    const std::size_t len = m - k0;
    Panel p{k0, Matrix(b, len), Matrix(b, b)};
    for (std::size_t i = 0; i < b; ++i) {
      if (beta[k0 + i] == 0.0) continue;
      std::copy_n(at.data() + (k0 + i) * m + k0 + i, len - i, p.v.data() + i * len + i);
    }
    // t(0:i, i) = -beta_i t(0:i, 0:i) Y(:, 0:i)^T y_i
    for (std::size_t i = 0; i < b; ++i) {
      p.t(i, i) = beta[k0 + i];
      std::vector<double> w(i);
      for (std::size_t r = 0; r < i; ++r) w[r] = dot(p.v.data() + r * len, p.v.data() + i * len, len);
      for (std::size_t r = 0; r < i; ++r) {
        double acc = 0.0;
        for (std::size_t c = r; c < i; ++c) acc += p.t(r, c) * w[c];
        p.t(r, i) = -beta[k0 + i] * acc;
      }
    }
    if (k0 + b < n) {
      Matrix trail = copy_block(at, k0 + b, k0);
      apply_panel(trail, p);
      store_block(at, k0 + b, k0, trail);
    }
    panels.push_back(std::move(p));
  }

  Matrix r(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    r(k, k) = alpha[k];
    for (std::size_t j = k + 1; j < n; ++j) r(k, j) = at(j, k);
  }

  // Q^T = [I_n 0] H_{n-1} ... H_0; each panel contributes (I - Y T Y^T)^T from the right.
  // Rows above k0 are untouched by panels starting at k0.
  Matrix qt(n, m);
  for (std::size_t i = 0; i < n; ++i) qt(i, i) = 1.0;
  for (auto it = panels.rbegin(); it != panels.rend(); ++it) {
    Matrix rows = copy_block(qt, it->k0, it->k0);
    apply_panel(rows, Panel{it->k0, it->v, it->t.transposed()});
    store_block(qt, it->k0, it->k0, rows);
  }
  return {std::move(r), std::move(qt)};
}

struct SquareSvd {
  Matrix u;  // n x n, zero columns where s == 0
  std::vector<double> s;
  Matrix v;  // n x n
  std::size_t sweeps;
};

// One-sided Jacobi on the columns of a square matrix R: find orthogonal V with R V = U S.
SquareSvd jacobi_svd(const Matrix& r, std::size_t max_sweeps) {
  const std::size_t n = r.rows();
  Matrix wt = r.transposed();  // row j = column j of R V
  Matrix vt = Matrix::identity(n);
  constexpr double tol = 1e-15;
  std::size_t sweep = 0;
  double worst = 0.0;
  for (; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    worst = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      double* wi = wt.data() + i * n;
      for (std::size_t j = i + 1; j < n; ++j) {
        double* wj = wt.data() + j * n;
        const double a = dot(wi, wi, n), b = dot(wj, wj, n), g = dot(wi, wj, n);
        if (a == 0.0 || b == 0.0) continue;
        const double off = std::abs(g) / std::sqrt(a * b);
        worst = std::max(worst, off);
        if (off <= tol) continue;
        rotated = true;
        const double zeta = (b - a) / (2.0 * g);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        double* vi = vt.data() + i * n;
        double* vj = vt.data() + j * n;
        for (std::size_t k = 0; k < n; ++k) {
          const double x = wi[k], y = wj[k];
          wi[k] = c * x - s * y;
          wj[k] = s * x + c * y;
          const double p = vi[k], q = vj[k];
          vi[k] = c * p - s * q;
          vj[k] = s * p + c * q;
        }
      }
    }
    if (!rotated) break;
  }
  if (sweep == max_sweeps) {
    std::ostringstream msg;
    msg << "svd: one-sided Jacobi did not converge after " << max_sweeps << " sweeps on a " << n << "x" << n
        << " factor; largest remaining column cosine " << worst;
    throw NumericalError(msg.str());
  }

  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) s[j] = std::sqrt(dot(wt.data() + j * n, wt.data() + j * n, n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

  SquareSvd out{Matrix(n, n), std::vector<double>(n), Matrix(n, n), sweep};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t j = order[c];
    out.s[c] = s[j];
    for (std::size_t k = 0; k < n; ++k) {
      out.v(k, c) = vt(j, k);
      out.u(k, c) = s[j] > 0 ? wt(j, k) / s[j] : 0.0;
    }
  }
  return out;
}

void require_finite(const Matrix& a, const char* who) {
  if (!a.all_finite()) throw NumericalError(std::string(who) + ": input contains NaN or Inf");
}

}  // namespace

Svd svd(const Matrix& a, std::size_t max_sweeps) {
  require_finite(a, "svd");
  if (a.rows() == 0 || a.cols() == 0) return {Matrix(a.rows(), 0), {}, Matrix(a.cols(), 0), 0};
  const bool tall = a.rows() >= a.cols();
  // Factor the tall orientation T = At^T; for a tall A that is A itself.
  TallQr qr = tall_qr_transposed(tall ? a.transposed() : a);
  SquareSvd core = jacobi_svd(qr.r, max_sweeps);
  // T = Q Ur S Vr^T
  Matrix tu = matmul_tn(qr.qt, core.u);
  if (tall) return {std::move(tu), std::move(core.s), std::move(core.v), core.sweeps};
  return {std::move(core.v), std::move(core.s), std::move(tu), core.sweeps};
}

Matrix pinv(const Matrix& a, double rcond) {
  if (!(rcond >= 0.0)) throw ConfigError("pinv: rcond must be >= 0");
  require_finite(a, "pinv");
  const std::size_t p = a.rows(), q = a.cols();
  if (p == 0 || q == 0) return Matrix(q, p);
  const bool tall = p >= q;
  TallQr qr = tall_qr_transposed(tall ? a.transposed() : a);
  SquareSvd core = jacobi_svd(qr.r, 80);
  const std::size_t n = core.s.size();
  const double cutoff = rcond * core.s.front();

  // B = Vr S+ Ur^T (n x n) for T = Q R, T+ = B Q^T.
  Matrix vs = core.v;
  for (std::size_t c = 0; c < n; ++c) {
    const double inv = core.s[c] > cutoff && core.s[c] > 0 ? 1.0 / core.s[c] : 0.0;
    for (std::size_t k = 0; k < n; ++k) vs(k, c) *= inv;
  }
  if (tall) {
    Matrix b = matmul_nt(vs, core.u);
    return matmul(b, qr.qt);  // q x p
  }
  // A = T^T so A+ = (T+)^T = Q B^T = Q Ur S+ Vr^T
  Matrix bt = matmul_nt(core.u, vs);
  return matmul_tn(qr.qt, bt);  // q x p
}

Matrix pinv_vjp(const Matrix& a, const Matrix& a_plus, const Matrix& upstream) {
  require_shape(a_plus.rows() == a.cols() && a_plus.cols() == a.rows(),
                "pinv_vjp: A+ " + shape_str(a_plus) + " does not match A " + shape_str(a));
  require_shape(upstream.same_shape(a_plus),
                "pinv_vjp: upstream " + shape_str(upstream) + " must match A+ " + shape_str(a_plus));
  // Shapes: A p x q, A+ and G q x p. Products are associated so that every intermediate
  // is p x p, p x q or q x p.
  const Matrix& g = upstream;
  // term 1: -A+^T G A+^T
  Matrix out = matmul_nt(matmul_tn(a_plus, g), a_plus);
  out *= -1.0;
  // term 2: A+^T A+ G^T (I - A+ A) = W - (W A+) A  with W = A+^T A+ G^T
  Matrix w = matmul_nt(matmul_tn(a_plus, a_plus), g);
  out += w;
  out -= matmul(matmul(w, a_plus), a);
  // term 3: (I - A A+) G^T A+ A+^T = Z - (A A+) Z  with Z = G^T A+ A+^T
  Matrix z = matmul_nt(matmul_tn(g, a_plus), a_plus);
  out += z;
  out -= matmul(matmul(a, a_plus), z);
  return out;
}

Matrix solve_spd(const Matrix& s, const Matrix& b) {
  require_shape(s.rows() == s.cols() && s.rows() == b.rows(),
                "solve_spd: " + shape_str(s) + " with rhs " + shape_str(b));
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> sm(s.data(), static_cast<Eigen::Index>(s.rows()), static_cast<Eigen::Index>(s.cols()));
  Eigen::Map<const RowMat> bm(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  Eigen::LLT<RowMat> llt(sm);
  if (llt.info() != Eigen::Success) throw NumericalError("solve_spd: matrix is not positive definite");
  Matrix x(b.rows(), b.cols());
  Eigen::Map<RowMat> xm(x.data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
  xm = llt.solve(bm);
  return x;
}

}  // namespace kdla
