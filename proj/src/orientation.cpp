#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dscpmd/volume.hpp"

namespace dscpmd {

namespace {

struct AxisMap {
  // new axis w (0=x..2=z) reads from old voxel axis src[w], reversed when
  // flip[w] is set. Identity when src = {0,1,2} and no flips.
  std::array<int, 3> src{0, 1, 2};
  std::array<bool, 3> flip{false, false, false};

  bool is_identity() const {
    return src[0] == 0 && src[1] == 1 && src[2] == 2 && !flip[0] && !flip[1] &&
           !flip[2];
  }
};

// Assigns each voxel axis to the world axis it is most aligned with
// (greedy largest-|cosine| first), giving the axis permutation that brings
// the grid nearest to RAS+.
AxisMap nearest_ras_axes(const Affine& affine) {
  double cosines[3][3];  // [world][voxel]
  for (int c = 0; c < 3; ++c) {
    double norm = 0;
    for (int r = 0; r < 3; ++r) norm += affine.at(r, c) * affine.at(r, c);
    norm = std::sqrt(norm);
    for (int r = 0; r < 3; ++r) {
      cosines[r][c] = norm > 0 ? affine.at(r, c) / norm : 0.0;
    }
  }
  AxisMap map;
  bool world_used[3] = {false, false, false};
  bool voxel_used[3] = {false, false, false};
  for (int step = 0; step < 3; ++step) {
    int bw = -1, bv = -1;
    double best = -1;
    for (int w = 0; w < 3; ++w) {
      if (world_used[w]) continue;
      for (int v = 0; v < 3; ++v) {
        if (voxel_used[v]) continue;
        if (std::abs(cosines[w][v]) > best) {
          best = std::abs(cosines[w][v]);
          bw = w;
          bv = v;
        }
      }
    }
    world_used[bw] = voxel_used[bv] = true;
    map.src[static_cast<size_t>(bw)] = bv;
    map.flip[static_cast<size_t>(bw)] = cosines[bw][bv] < 0;
  }
  return map;
}

struct Geometry {
  std::array<int, 3> dims;
  std::array<double, 3> spacing;
  Affine affine;
};

Geometry remap_geometry(const AxisMap& map, const std::array<int, 3>& dims,
                        const std::array<double, 3>& spacing,
                        const Affine& affine) {
  Geometry g;
  Affine t;  // new voxel index -> old voxel index
  t.m.fill(0);
  t.at(3, 3) = 1;
  for (int w = 0; w < 3; ++w) {
    const int a = map.src[static_cast<size_t>(w)];
    const bool f = map.flip[static_cast<size_t>(w)];
    g.dims[static_cast<size_t>(w)] = dims[static_cast<size_t>(a)];
    g.spacing[static_cast<size_t>(w)] = spacing[static_cast<size_t>(a)];
    t.at(a, w) = f ? -1.0 : 1.0;
    if (f) t.at(a, 3) = dims[static_cast<size_t>(a)] - 1.0;
  }
  g.affine = affine.mul(t);
  return g;
}

// Copies one 3D frame into the remapped layout.
template <typename T>
void remap_frame(const AxisMap& map, const std::array<int, 3>& odims,
                 const T* src, const std::array<int, 3>& ndims, T* dst) {
  const std::size_t onx = static_cast<std::size_t>(odims[0]);
  const std::size_t ony = static_cast<std::size_t>(odims[1]);
  int oc[3];
  for (int k = 0; k < ndims[2]; ++k) {
    for (int j = 0; j < ndims[1]; ++j) {
      for (int i = 0; i < ndims[0]; ++i) {
        const int nc[3] = {i, j, k};
        for (int w = 0; w < 3; ++w) {
          const int a = map.src[static_cast<size_t>(w)];
          oc[a] = map.flip[static_cast<size_t>(w)]
                      ? odims[static_cast<size_t>(a)] - 1 - nc[w]
                      : nc[w];
        }
        const std::size_t oi =
            (static_cast<std::size_t>(oc[2]) * ony + oc[1]) * onx + oc[0];
        *dst++ = src[oi];
      }
    }
  }
}

}  // namespace

void canonicalize_ras(Volume3D& v) {
  const AxisMap map = nearest_ras_axes(v.affine);
  if (map.is_identity()) return;
  const std::array<int, 3> odims{v.nx, v.ny, v.nz};
  const Geometry g = remap_geometry(map, odims, v.spacing, v.affine);
  std::vector<float> out(v.data.size());
  remap_frame(map, odims, v.data.data(), g.dims, out.data());
  v.nx = g.dims[0];
  v.ny = g.dims[1];
  v.nz = g.dims[2];
  v.spacing = g.spacing;
  v.affine = g.affine;
  v.data = std::move(out);
}

void canonicalize_ras(LabelVolume& v) {
  const AxisMap map = nearest_ras_axes(v.affine);
  if (map.is_identity()) return;
  const std::array<int, 3> odims{v.nx, v.ny, v.nz};
  const Geometry g = remap_geometry(map, odims, v.spacing, v.affine);
  std::vector<std::int32_t> out(v.data.size());
  remap_frame(map, odims, v.data.data(), g.dims, out.data());
  v.nx = g.dims[0];
  v.ny = g.dims[1];
  v.nz = g.dims[2];
  v.spacing = g.spacing;
  v.affine = g.affine;
  v.data = std::move(out);
}

void canonicalize_ras(Volume4D& v) {
  const AxisMap map = nearest_ras_axes(v.affine);
  if (map.is_identity()) return;
  const std::array<int, 3> odims{v.nx, v.ny, v.nz};
  const Geometry g = remap_geometry(map, odims, v.spacing, v.affine);
  std::vector<float> out(v.data.size());
  const std::size_t fs = v.frame_size();
  for (int t = 0; t < v.nt; ++t) {
    remap_frame(map, odims, v.data.data() + fs * static_cast<std::size_t>(t),
                g.dims, out.data() + fs * static_cast<std::size_t>(t));
  }
  v.nx = g.dims[0];
  v.ny = g.dims[1];
  v.nz = g.dims[2];
  v.spacing = g.spacing;
  v.affine = g.affine;
  v.data = std::move(out);
}

}  // namespace dscpmd
