#include "cbf/contour.hpp"

#include <cmath>

#include "cbf/compiled.hpp"

namespace cbf {

std::vector<std::vector<double>> zero_contour(const Expr& g, const Box& box, int dim_i, int dim_j,
                                              int resolution) {
  if (resolution < 2) throw DomainError("contour resolution must be at least 2");
  const CompiledExpr gc(g);
  const int n = static_cast<int>(box.dim());
  std::vector<double> base = box.midpoint();

  const double x0 = box.lb[dim_i], dx = box.width(dim_i) / (resolution - 1);
  const double y0 = box.lb[dim_j], dy = box.width(dim_j) / (resolution - 1);

  // Grid values.
  std::vector<double> vals(static_cast<std::size_t>(resolution) * resolution);
  std::vector<double> p = base;
  for (int r = 0; r < resolution; ++r) {
    p[dim_j] = y0 + r * dy;
    for (int c = 0; c < resolution; ++c) {
      p[dim_i] = x0 + c * dx;
      vals[static_cast<std::size_t>(r) * resolution + c] = gc.eval(p);
    }
  }
  auto at = [&](int r, int c) { return vals[static_cast<std::size_t>(r) * resolution + c]; };

  std::vector<std::vector<double>> points;
  auto emit = [&](double xi, double yj) {
    std::vector<double> q(base);
    q[dim_i] = xi;
    q[dim_j] = yj;
    (void)n;
    points.push_back(std::move(q));
  };
  auto edge = [&](double va, double vb, double a0, double b0, double a1, double b1) {
    // Sign change along one cell edge: linear interpolation of the zero.
    if (va == 0.0) {
      emit(a0, b0);
      return;
    }
    if ((va < 0.0) == (vb < 0.0)) return;
    const double t = va / (va - vb);
    emit(a0 + t * (a1 - a0), b0 + t * (b1 - b0));
  };

  for (int r = 0; r + 1 < resolution; ++r) {
    for (int c = 0; c + 1 < resolution; ++c) {
      const double x_l = x0 + c * dx, x_r = x0 + (c + 1) * dx;
      const double y_b = y0 + r * dy, y_t = y0 + (r + 1) * dy;
      edge(at(r, c), at(r, c + 1), x_l, y_b, x_r, y_b);          // bottom
      edge(at(r, c), at(r + 1, c), x_l, y_b, x_l, y_t);          // left
      if (r + 2 == resolution) edge(at(r + 1, c), at(r + 1, c + 1), x_l, y_t, x_r, y_t);
      if (c + 2 == resolution) edge(at(r, c + 1), at(r + 1, c + 1), x_r, y_b, x_r, y_t);
    }
  }
  return points;
}

}  // namespace cbf
