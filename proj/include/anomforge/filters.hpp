#pragma once

#include <vector>

#include "anomforge/volume.hpp"

namespace anomforge {

// (v - min) / (max - min). A constant input maps to all zeros.
Volume3D minmax_normalize(const Volume3D& vol);

// Min-max normalization using the extrema inside mask; voxels outside the
// mask are set to zero. A constant (or empty) masked range maps to zeros.
Volume3D minmax_normalize_masked(const Volume3D& vol, const BinaryMask3D& mask);

// True where value > eps.
BinaryMask3D brain_mask(const Volume3D& vol, double eps = 0.0);

// iters applications of 6-connected erosion. Voxels outside the array count
// as background.
BinaryMask3D erode(const BinaryMask3D& mask, unsigned iters);

// 6-connected dilation, array border clipped.
BinaryMask3D dilate(const BinaryMask3D& mask, unsigned iters);

// k^3 median with edge replication. k must be odd.
Volume3D median_filter(const Volume3D& vol, int k);

// Center crop and/or zero pad each axis independently. When the size
// difference is odd the extra voxel is taken from (or added to) the low side.
Volume3D crop_or_pad(const Volume3D& vol, const Dims& target);

// Normalized 1D Gaussian taps of length 2*radius+1.
std::vector<double> gaussian_kernel(double sigma, int radius);

// Separable convolution with a symmetric kernel, edge replication.
Volume3D separable_filter(const Volume3D& vol, const std::vector<double>& taps);

}  // namespace anomforge
