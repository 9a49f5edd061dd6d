#pragma once

#include "dscpmd/volume.hpp"

namespace dscpmd {

// Otsu threshold over a 256-bin histogram spanning [min, max]. Returns the
// threshold value; voxels strictly above it are foreground. Ties in the
// between-class variance resolve to the middle of the tied run, so the
// result is invariant under positive intensity scaling. Throws
// processing_error for constant input.
double otsu_threshold(const Volume3D& v);

// Otsu -> largest 6-connected component -> morphological closing with a
// 1-voxel ball -> per-slice hole fill. Throws processing_error when the
// mask comes out empty (advises supplying a manual mask).
Mask3D brain_mask(const Volume3D& first_timepoint);

// Exposed for tests.
Mask3D largest_component_6(const Mask3D& m);
Mask3D morphological_close_ball1(const Mask3D& m);
Mask3D fill_holes_per_slice(const Mask3D& m);

}  // namespace dscpmd
