#pragma once

#include <stdexcept>
#include <string>

namespace scaleset {

enum class errc {
  unsupported_format,
  malformed_header,
  truncated_data,
  io_failure,
  dimension_mismatch,
  empty_label_map,
  invalid_label_map,
  self_merge,
  non_adjacent_merge,
  disconnected_group,
  isolated_region,
  neighborhood_too_large,
  invalid_subset,
  invalid_function,
  subadditivity_violation,
  invalid_hierarchy,
  version_mismatch,
  corrupt_payload,
  undefined_normalization,
  empty_input,
  invalid_config,
};

// Single exception type for the whole library; code() tells callers which
// contract was broken without string matching.
class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace scaleset
