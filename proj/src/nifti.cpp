#include "dscpmd/nifti.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "dscpmd/error.hpp"

namespace dscpmd {

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;    // must be 348
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

constexpr char kUnitsMmSec = 10;  // NIFTI_UNITS_MM | NIFTI_UNITS_SEC

template <typename T>
void byteswap_inplace(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  std::reverse(p, p + sizeof(T));
}

void swap_header(NiftiHeader& h) {
  byteswap_inplace(h.sizeof_hdr);
  byteswap_inplace(h.extents);
  byteswap_inplace(h.session_error);
  for (auto& d : h.dim) byteswap_inplace(d);
  byteswap_inplace(h.intent_p1);
  byteswap_inplace(h.intent_p2);
  byteswap_inplace(h.intent_p3);
  byteswap_inplace(h.intent_code);
  byteswap_inplace(h.datatype);
  byteswap_inplace(h.bitpix);
  byteswap_inplace(h.slice_start);
  for (auto& d : h.pixdim) byteswap_inplace(d);
  byteswap_inplace(h.vox_offset);
  byteswap_inplace(h.scl_slope);
  byteswap_inplace(h.scl_inter);
  byteswap_inplace(h.slice_end);
  byteswap_inplace(h.cal_max);
  byteswap_inplace(h.cal_min);
  byteswap_inplace(h.slice_duration);
  byteswap_inplace(h.toffset);
  byteswap_inplace(h.glmax);
  byteswap_inplace(h.glmin);
  byteswap_inplace(h.qform_code);
  byteswap_inplace(h.sform_code);
  byteswap_inplace(h.quatern_b);
  byteswap_inplace(h.quatern_c);
  byteswap_inplace(h.quatern_d);
  byteswap_inplace(h.qoffset_x);
  byteswap_inplace(h.qoffset_y);
  byteswap_inplace(h.qoffset_z);
  for (auto& d : h.srow_x) byteswap_inplace(d);
  for (auto& d : h.srow_y) byteswap_inplace(d);
  for (auto& d : h.srow_z) byteswap_inplace(d);
}

std::string sidecar_path(const std::string& nii_path) {
  if (nii_path.size() > 4 && nii_path.substr(nii_path.size() - 4) == ".nii") {
    return nii_path.substr(0, nii_path.size() - 4) + ".json";
  }
  return nii_path + ".json";
}

struct SidecarTimes {
  double tr = -1;  // < 0 means absent
  double te = -1;
};

SidecarTimes read_sidecar(const std::string& nii_path) {
  SidecarTimes out;
  std::ifstream in(sidecar_path(nii_path));
  if (!in) return out;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error("sidecar JSON for '" + nii_path +
                       "' is malformed: " + e.what());
  }
  if (j.contains("RepetitionTime") && j["RepetitionTime"].is_number()) {
    out.tr = j["RepetitionTime"].get<double>();
  }
  if (j.contains("EchoTime") && j["EchoTime"].is_number()) {
    out.te = j["EchoTime"].get<double>();
  }
  return out;
}

Affine quaternion_affine(const NiftiHeader& h) {
  const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  double a2 = 1.0 - (b * b + c * c + d * d);
  const double a = a2 > 0 ? std::sqrt(a2) : 0.0;
  const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
  double r[3][3] = {
      {a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d,
       2 * b * d + 2 * a * c},
      {2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d,
       2 * c * d - 2 * a * b},
      {2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b,
       a * a + d * d - b * b - c * c}};
  Affine out;
  const double sx = h.pixdim[1], sy = h.pixdim[2], sz = h.pixdim[3] * qfac;
  for (int i = 0; i < 3; ++i) {
    out.at(i, 0) = r[i][0] * sx;
    out.at(i, 1) = r[i][1] * sy;
    out.at(i, 2) = r[i][2] * sz;
  }
  out.at(0, 3) = h.qoffset_x;
  out.at(1, 3) = h.qoffset_y;
  out.at(2, 3) = h.qoffset_z;
  return out;
}

struct RawVolume {
  int nx = 1, ny = 1, nz = 1, nt = 1;
  std::array<double, 3> spacing{1, 1, 1};
  Affine affine;
  double tr = 1.5, te = 0.030;
  std::vector<double> values;  // scaled
};

RawVolume read_raw(const std::string& path, int expected_ndim,
                   double default_tr = 1.5, double default_te = 0.030) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path + "' for reading");
  NiftiHeader h{};
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(h))) {
    throw io_error("'" + path + "' is shorter than a NIfTI-1 header");
  }
  const bool need_swap = h.dim[0] < 1 || h.dim[0] > 7;
  if (need_swap) swap_header(h);
  if (h.dim[0] < 1 || h.dim[0] > 7) {
    throw format_error("'" + path + "': header field dim[0] is " +
                       std::to_string(h.dim[0]) +
                       ", outside [1,7] in either byte order");
  }
  if (h.sizeof_hdr != 348) {
    throw format_error("'" + path + "': header field sizeof_hdr is " +
                       std::to_string(h.sizeof_hdr) + ", expected 348");
  }
  if (!(h.magic[0] == 'n' && h.magic[1] == '+' && h.magic[2] == '1' &&
        h.magic[3] == '\0')) {
    throw format_error("'" + path +
                       "': header field magic is not \"n+1\" (single-file "
                       "NIfTI-1 required)");
  }

  RawVolume out;
  out.tr = default_tr;
  out.te = default_te;
  const int ndim = h.dim[0];
  int dims[7];
  for (int i = 0; i < 7; ++i) {
    dims[i] = i < ndim ? h.dim[i + 1] : 1;
    if (dims[i] < 1) {
      throw format_error("'" + path + "': header field dim[" +
                         std::to_string(i + 1) + "] is " +
                         std::to_string(dims[i]) + ", must be >= 1");
    }
  }
  for (int i = 4; i < 7; ++i) {
    if (dims[i] != 1) {
      throw format_error("'" + path + "': header field dim[" +
                         std::to_string(i + 1) +
                         "] > 1 (dimensions above 4 are unsupported)");
    }
  }
  out.nx = dims[0];
  out.ny = dims[1];
  out.nz = dims[2];
  out.nt = dims[3];
  if (expected_ndim == 3 && out.nt != 1) {
    throw format_error("'" + path + "': expected a 3D volume but dim[4] is " +
                       std::to_string(out.nt));
  }

  for (int i = 0; i < 3; ++i) {
    const double p = std::abs(static_cast<double>(h.pixdim[i + 1]));
    out.spacing[static_cast<size_t>(i)] = p > 0 ? p : 1.0;
  }

  if (h.sform_code > 0) {
    for (int c = 0; c < 4; ++c) {
      out.affine.at(0, c) = h.srow_x[c];
      out.affine.at(1, c) = h.srow_y[c];
      out.affine.at(2, c) = h.srow_z[c];
    }
  } else if (h.qform_code > 0) {
    out.affine = quaternion_affine(h);
  } else {
    out.affine = Affine::from_spacing(out.spacing[0], out.spacing[1],
                                      out.spacing[2]);
  }

  // Acquisition timing: header wins, then sidecar, then defaults.
  const SidecarTimes sc = read_sidecar(path);
  double header_tr = h.pixdim[4];
  const int time_units = h.xyzt_units & 0x38;
  if (time_units == 16) header_tr /= 1e3;   // msec
  if (time_units == 24) header_tr /= 1e6;   // usec
  if (header_tr > 0) {
    out.tr = header_tr;
  } else if (sc.tr > 0) {
    out.tr = sc.tr;
  }
  if (sc.te > 0) out.te = sc.te;

  const std::size_t count = static_cast<std::size_t>(out.nx) * out.ny *
                            out.nz * out.nt;
  std::size_t elem = 0;
  switch (h.datatype) {
    case kDtUint8: elem = 1; break;
    case kDtInt16: elem = 2; break;
    case kDtInt32: elem = 4; break;
    case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default:
      throw format_error("'" + path + "': header field datatype " +
                         std::to_string(h.datatype) +
                         " is unsupported (uint8/int16/int32/float32/float64)");
  }
  const auto offset = static_cast<std::streamoff>(h.vox_offset);
  if (offset < static_cast<std::streamoff>(sizeof(h))) {
    throw format_error("'" + path + "': header field vox_offset " +
                       std::to_string(offset) + " overlaps the header");
  }
  in.seekg(offset, std::ios::beg);
  std::vector<char> raw(count * elem);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw io_error("'" + path + "': voxel payload truncated (expected " +
                   std::to_string(raw.size()) + " bytes)");
  }

  const double slope = h.scl_slope == 0.0f ? 1.0 : h.scl_slope;
  const double inter = h.scl_inter;
  out.values.resize(count);
  auto scale_all = [&](auto typed_value_at) {
    for (std::size_t i = 0; i < count; ++i) {
      out.values[i] = slope * typed_value_at(i) + inter;
    }
  };
  switch (h.datatype) {
    case kDtUint8: {
      const auto* p = reinterpret_cast<const std::uint8_t*>(raw.data());
      scale_all([&](std::size_t i) { return static_cast<double>(p[i]); });
      break;
    }
    case kDtInt16: {
      auto* p = reinterpret_cast<std::int16_t*>(raw.data());
      if (need_swap) for (std::size_t i = 0; i < count; ++i) byteswap_inplace(p[i]);
      scale_all([&](std::size_t i) { return static_cast<double>(p[i]); });
      break;
    }
    case kDtInt32: {
      auto* p = reinterpret_cast<std::int32_t*>(raw.data());
      if (need_swap) for (std::size_t i = 0; i < count; ++i) byteswap_inplace(p[i]);
      scale_all([&](std::size_t i) { return static_cast<double>(p[i]); });
      break;
    }
    case kDtFloat32: {
      auto* p = reinterpret_cast<float*>(raw.data());
      if (need_swap) for (std::size_t i = 0; i < count; ++i) byteswap_inplace(p[i]);
      scale_all([&](std::size_t i) { return static_cast<double>(p[i]); });
      break;
    }
    case kDtFloat64: {
      auto* p = reinterpret_cast<double*>(raw.data());
      if (need_swap) for (std::size_t i = 0; i < count; ++i) byteswap_inplace(p[i]);
      scale_all([&](std::size_t i) { return p[i]; });
      break;
    }
    default: break;  // unreachable
  }
  return out;
}

NiftiHeader make_header(int nx, int ny, int nz, int nt,
                        const std::array<double, 3>& spacing, double tr,
                        const Affine& affine, std::int16_t datatype,
                        std::int16_t bitpix) {
  NiftiHeader h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = static_cast<std::int16_t>(nt > 1 ? 4 : 3);
  h.dim[1] = static_cast<std::int16_t>(nx);
  h.dim[2] = static_cast<std::int16_t>(ny);
  h.dim[3] = static_cast<std::int16_t>(nz);
  h.dim[4] = static_cast<std::int16_t>(nt > 1 ? nt : 1);
  for (int i = 5; i < 8; ++i) h.dim[i] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.0f;
  h.pixdim[1] = static_cast<float>(spacing[0]);
  h.pixdim[2] = static_cast<float>(spacing[1]);
  h.pixdim[3] = static_cast<float>(spacing[2]);
  h.pixdim[4] = nt > 1 ? static_cast<float>(tr) : 0.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = kUnitsMmSec;
  std::strncpy(h.descrip, "dscpmd", sizeof(h.descrip) - 1);
  h.qform_code = 0;
  h.sform_code = 1;
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = static_cast<float>(affine.at(0, c));
    h.srow_y[c] = static_cast<float>(affine.at(1, c));
    h.srow_z[c] = static_cast<float>(affine.at(2, c));
  }
  h.magic[0] = 'n';
  h.magic[1] = '+';
  h.magic[2] = '1';
  h.magic[3] = '\0';
  return h;
}

void write_payload(const std::string& path, const NiftiHeader& h,
                   const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  const char pad[4] = {0, 0, 0, 0};  // no header extensions
  out.write(pad, 4);
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(bytes));
  if (!out) throw io_error("failed writing '" + path + "'");
}

void check_dim_range(const std::string& what, int n) {
  if (n < 1 || n > 32767) {
    throw validation_error(what + " dimension " + std::to_string(n) +
                           " out of the writable range [1, 32767]");
  }
}

}  // namespace

Volume4D read_nifti_4d(const std::string& path, double default_tr,
                       double default_te) {
  RawVolume raw = read_raw(path, 4, default_tr, default_te);
  Volume4D v = Volume4D::zeros(raw.nx, raw.ny, raw.nz, raw.nt);
  v.spacing = raw.spacing;
  v.affine = raw.affine;
  v.tr = raw.tr;
  v.te = raw.te;
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    v.data[i] = static_cast<float>(raw.values[i]);
  }
  return v;
}

Volume3D read_nifti_3d(const std::string& path) {
  RawVolume raw = read_raw(path, 3);
  Volume3D v = Volume3D::zeros(raw.nx, raw.ny, raw.nz);
  v.spacing = raw.spacing;
  v.affine = raw.affine;
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    v.data[i] = static_cast<float>(raw.values[i]);
  }
  return v;
}

Mask3D read_nifti_mask(const std::string& path) {
  RawVolume raw = read_raw(path, 3);
  Mask3D m = Mask3D::full(raw.nx, raw.ny, raw.nz, false);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    m.data[i] = raw.values[i] != 0.0 ? 1 : 0;
  }
  return m;
}

LabelVolume read_nifti_labels(const std::string& path) {
  RawVolume raw = read_raw(path, 3);
  LabelVolume v = LabelVolume::zeros(raw.nx, raw.ny, raw.nz);
  v.spacing = raw.spacing;
  v.affine = raw.affine;
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    v.data[i] = static_cast<std::int32_t>(std::llround(raw.values[i]));
  }
  return v;
}

void write_nifti(const std::string& path, const Volume4D& v) {
  check_dim_range("x", v.nx);
  check_dim_range("y", v.ny);
  check_dim_range("z", v.nz);
  check_dim_range("t", v.nt);
  NiftiHeader h = make_header(v.nx, v.ny, v.nz, v.nt, v.spacing, v.tr,
                              v.affine, kDtFloat32, 32);
  write_payload(path, h, v.data.data(), v.data.size() * sizeof(float));
  nlohmann::json sc;
  sc["EchoTime"] = v.te;
  sc["RepetitionTime"] = v.tr;
  std::ofstream out(sidecar_path(path), std::ios::trunc);
  if (!out) throw io_error("cannot write sidecar for '" + path + "'");
  out << sc.dump(2) << "\n";
}

void write_nifti(const std::string& path, const Volume3D& v) {
  check_dim_range("x", v.nx);
  check_dim_range("y", v.ny);
  check_dim_range("z", v.nz);
  NiftiHeader h =
      make_header(v.nx, v.ny, v.nz, 1, v.spacing, 0, v.affine, kDtFloat32, 32);
  write_payload(path, h, v.data.data(), v.data.size() * sizeof(float));
}

void write_nifti(const std::string& path, const Mask3D& m,
                 const std::array<double, 3>& spacing, const Affine& affine) {
  check_dim_range("x", m.nx);
  check_dim_range("y", m.ny);
  check_dim_range("z", m.nz);
  NiftiHeader h =
      make_header(m.nx, m.ny, m.nz, 1, spacing, 0, affine, kDtUint8, 8);
  write_payload(path, h, m.data.data(), m.data.size());
}

void write_nifti(const std::string& path, const LabelVolume& v) {
  check_dim_range("x", v.nx);
  check_dim_range("y", v.ny);
  check_dim_range("z", v.nz);
  NiftiHeader h =
      make_header(v.nx, v.ny, v.nz, 1, v.spacing, 0, v.affine, kDtInt32, 32);
  write_payload(path, h, v.data.data(), v.data.size() * sizeof(std::int32_t));
}

}  // namespace dscpmd
