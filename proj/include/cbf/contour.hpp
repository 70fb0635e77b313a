#pragma once

#include <vector>

#include "cbf/expr.hpp"

namespace cbf {

// Zero-level points of g over a 2-D slice of the box, found by marching
// squares with linear interpolation along cell edges. dims (i, j) select
// the varied coordinates; the remaining coordinates sit at the box
// midpoint. Returns full-dimensional states.
std::vector<std::vector<double>> zero_contour(const Expr& g, const Box& box, int dim_i, int dim_j,
                                              int resolution);

}  // namespace cbf
