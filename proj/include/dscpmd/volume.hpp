#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace dscpmd {

// Row-major 4x4 voxel-to-world transform.
struct Affine {
  std::array<double, 16> m{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

  static Affine identity() { return Affine{}; }
  static Affine from_spacing(double sx, double sy, double sz);

  double at(int r, int c) const { return m[static_cast<size_t>(r) * 4 + c]; }
  double& at(int r, int c) { return m[static_cast<size_t>(r) * 4 + c]; }

  std::array<double, 3> apply(double x, double y, double z) const;
  Affine mul(const Affine& rhs) const;
  Affine inverse() const;  // throws validation_error if singular
  bool approx_equal(const Affine& rhs, double tol) const;
};

struct Mask3D {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> data;

  static Mask3D full(int nx, int ny, int nz, bool value = true);
  std::size_t idx(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  bool get(int x, int y, int z) const { return data[idx(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v) { data[idx(x, y, z)] = v ? 1 : 0; }
  std::size_t count() const;
};

struct Volume3D {
  int nx = 0, ny = 0, nz = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine;
  std::vector<float> data;

  static Volume3D zeros(int nx, int ny, int nz);
  std::size_t idx(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  float at(int x, int y, int z) const { return data[idx(x, y, z)]; }
  float& at(int x, int y, int z) { return data[idx(x, y, z)]; }
  std::size_t size() const { return data.size(); }
};

struct Volume4D {
  int nx = 0, ny = 0, nz = 0, nt = 0;
  double tr = 1.5;   // seconds between timepoints
  double te = 0.030; // echo time, seconds
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine;
  std::vector<float> data;  // x fastest, t slowest

  static Volume4D zeros(int nx, int ny, int nz, int nt);
  std::size_t frame_size() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
  std::size_t idx(int x, int y, int z, int t) const {
    return ((static_cast<std::size_t>(t) * nz + z) * ny + y) * nx + x;
  }
  float at(int x, int y, int z, int t) const { return data[idx(x, y, z, t)]; }
  float& at(int x, int y, int z, int t) { return data[idx(x, y, z, t)]; }
  // Spatial index shared with Volume3D/Mask3D layouts.
  std::size_t sidx(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
};

struct LabelVolume {
  int nx = 0, ny = 0, nz = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  Affine affine;
  std::vector<std::int32_t> data;

  static LabelVolume zeros(int nx, int ny, int nz);
  std::size_t idx(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  std::int32_t at(int x, int y, int z) const { return data[idx(x, y, z)]; }
  std::int32_t& at(int x, int y, int z) { return data[idx(x, y, z)]; }
};

// Copies one timepoint out of a 4D series (shares geometry).
Volume3D extract_timepoint(const Volume4D& v, int t);

// Reorients in place to the axis-aligned orientation nearest RAS+ while
// preserving every voxel's world coordinates. Idempotent.
void canonicalize_ras(Volume4D& v);
void canonicalize_ras(Volume3D& v);
void canonicalize_ras(LabelVolume& v);

}  // namespace dscpmd
