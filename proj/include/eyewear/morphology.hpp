#pragma once

#include "eyewear/image.hpp"

#include <utility>
#include <vector>

namespace eyewear::morph {

/// Offsets (dy, dx) of a disk structuring element: dx^2 + dy^2 <= radius^2.
std::vector<std::pair<int, int>> disk_offsets(int radius);

/// Outside-of-image pixels count as background for both operations.
Mask dilate(const Mask& mask, int radius);
Mask erode(const Mask& mask, int radius);

std::size_t count(const Mask& mask);
bool is_subset(const Mask& inner, const Mask& outer);
Mask unite(const Mask& a, const Mask& b);

/// Background pixels not 4-connected to the image border.
Mask enclosed_holes(const Mask& foreground);

/// Separable Gaussian blur truncated at ceil(3 sigma); pixels farther than that from
/// every nonzero input stay exactly zero.
AlphaMap gaussian_blur(const AlphaMap& input, double sigma);
int blur_radius(double sigma);

}  // namespace eyewear::morph
