#pragma once

#include <stdexcept>
#include <string>

namespace dscpmd {

// Base class for all library failures. Subclasses map onto CLI exit codes:
// config/format problems -> 2, per-subject processing -> 3, cohort-level -> 4.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable/unwritable files, truncated payloads.
struct io_error : error {
  using error::error;
};

// Structurally invalid input (bad NIfTI header field, malformed CSV/JSON).
// Messages name the offending field.
struct format_error : error {
  using error::error;
};

// Semantically invalid configuration or arguments.
struct validation_error : error {
  using error::error;
};

// A computation could not proceed (empty mask, no bolus, constant input).
struct processing_error : error {
  using error::error;
};

}  // namespace dscpmd
