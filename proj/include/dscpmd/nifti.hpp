#pragma once

#include <string>

#include "dscpmd/volume.hpp"

namespace dscpmd {

// NIfTI-1 single-file (.nii) I/O.
//
// Reader: accepts uint8, int16, int32, float32, float64; applies
// scl_slope/scl_inter (slope 0 treated as 1); handles opposite-endian files
// (detected via dim[0] in [1,7]); affine priority sform > qform > spacing
// diagonal. tr comes from pixdim[4] when > 0, else the sidecar JSON
// ("RepetitionTime"), else default_tr (1.5 s). te comes from the sidecar
// ("EchoTime"), else default_te (0.030 s). The sidecar is
// "<path minus .nii>.json".
//
// Writer: float32 payload (uint8 for masks, int32 for labels), vox_offset
// 352, scl_slope 1 / scl_inter 0, sform set from the affine; 4D volumes also
// get a sidecar JSON with EchoTime/RepetitionTime.

Volume4D read_nifti_4d(const std::string& path, double default_tr = 1.5,
                       double default_te = 0.030);
Volume3D read_nifti_3d(const std::string& path);
Mask3D read_nifti_mask(const std::string& path);
LabelVolume read_nifti_labels(const std::string& path);

void write_nifti(const std::string& path, const Volume4D& v);
void write_nifti(const std::string& path, const Volume3D& v);
void write_nifti(const std::string& path, const Mask3D& m,
                 const std::array<double, 3>& spacing, const Affine& affine);
void write_nifti(const std::string& path, const LabelVolume& v);

}  // namespace dscpmd
