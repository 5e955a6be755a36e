#pragma once

#include <cstddef>
#include <vector>

#include "dsdg/mesh.hpp"

namespace dsdg {

/// Gauss–Legendre rule on [0, 1]; weights sum to 1.
struct LineRule {
    std::vector<double> points;
    std::vector<double> weights;
    std::size_t degree = 0;
};

LineRule gauss_legendre(std::size_t npoints);
/// Smallest Gauss–Legendre rule exact for polynomials of the given degree.
LineRule line_rule(std::size_t degree);

/// Rule on the reference triangle (0,0), (1,0), (0,1); points in reference
/// coordinates, weights sum to the reference area 1/2.
struct QuadratureRule {
    std::vector<Point> points;
    std::vector<double> weights;
    std::size_t degree = 0;
};

/// Collapsed (Duffy) Gauss product rule exact for total degree `degree`.
QuadratureRule triangle_rule(std::size_t degree);

}  // namespace dsdg
