#include "dscpmd/volume.hpp"

#include <cmath>
#include <numeric>

#include "dscpmd/error.hpp"

namespace dscpmd {

Affine Affine::from_spacing(double sx, double sy, double sz) {
  Affine a;
  a.at(0, 0) = sx;
  a.at(1, 1) = sy;
  a.at(2, 2) = sz;
  return a;
}

std::array<double, 3> Affine::apply(double x, double y, double z) const {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    out[static_cast<size_t>(r)] =
        at(r, 0) * x + at(r, 1) * y + at(r, 2) * z + at(r, 3);
  }
  return out;
}

Affine Affine::mul(const Affine& rhs) const {
  Affine out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += at(r, k) * rhs.at(k, c);
      out.at(r, c) = s;
    }
  }
  return out;
}

Affine Affine::inverse() const {
  // Invert the 3x3 linear part by cofactors, then the translation.
  const double a = at(0, 0), b = at(0, 1), c = at(0, 2);
  const double d = at(1, 0), e = at(1, 1), f = at(1, 2);
  const double g = at(2, 0), h = at(2, 1), i = at(2, 2);
  const double det =
      a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  if (std::abs(det) < 1e-12) {
    throw validation_error("affine is singular and cannot be inverted");
  }
  Affine inv;
  inv.at(0, 0) = (e * i - f * h) / det;
  inv.at(0, 1) = (c * h - b * i) / det;
  inv.at(0, 2) = (b * f - c * e) / det;
  inv.at(1, 0) = (f * g - d * i) / det;
  inv.at(1, 1) = (a * i - c * g) / det;
  inv.at(1, 2) = (c * d - a * f) / det;
  inv.at(2, 0) = (d * h - e * g) / det;
  inv.at(2, 1) = (b * g - a * h) / det;
  inv.at(2, 2) = (a * e - b * d) / det;
  for (int r = 0; r < 3; ++r) {
    double t = 0;
    for (int k = 0; k < 3; ++k) t += inv.at(r, k) * at(k, 3);
    inv.at(r, 3) = -t;
  }
  inv.at(3, 0) = inv.at(3, 1) = inv.at(3, 2) = 0;
  inv.at(3, 3) = 1;
  return inv;
}

bool Affine::approx_equal(const Affine& rhs, double tol) const {
  for (size_t k = 0; k < 16; ++k) {
    if (std::abs(m[k] - rhs.m[k]) > tol) return false;
  }
  return true;
}

Mask3D Mask3D::full(int nx, int ny, int nz, bool value) {
  Mask3D m;
  m.nx = nx;
  m.ny = ny;
  m.nz = nz;
  m.data.assign(static_cast<std::size_t>(nx) * ny * nz, value ? 1 : 0);
  return m;
}

std::size_t Mask3D::count() const {
  std::size_t n = 0;
  for (auto v : data) n += (v != 0);
  return n;
}

Volume3D Volume3D::zeros(int nx, int ny, int nz) {
  Volume3D v;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.data.assign(static_cast<std::size_t>(nx) * ny * nz, 0.0f);
  return v;
}

Volume4D Volume4D::zeros(int nx, int ny, int nz, int nt) {
  Volume4D v;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.nt = nt;
  v.data.assign(static_cast<std::size_t>(nx) * ny * nz * nt, 0.0f);
  return v;
}

LabelVolume LabelVolume::zeros(int nx, int ny, int nz) {
  LabelVolume v;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.data.assign(static_cast<std::size_t>(nx) * ny * nz, 0);
  return v;
}

Volume3D extract_timepoint(const Volume4D& v, int t) {
  if (t < 0 || t >= v.nt) {
    throw validation_error("timepoint index out of range");
  }
  Volume3D out = Volume3D::zeros(v.nx, v.ny, v.nz);
  out.spacing = v.spacing;
  out.affine = v.affine;
  const std::size_t fs = v.frame_size();
  std::copy(v.data.begin() + static_cast<std::ptrdiff_t>(fs) * t,
            v.data.begin() + static_cast<std::ptrdiff_t>(fs) * (t + 1),
            out.data.begin());
  return out;
}

}  // namespace dscpmd
