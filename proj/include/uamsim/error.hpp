#pragma once

#include <stdexcept>
#include <string>

namespace uam {

enum class Errc {
  invalid_geometry,
  dangling_tube,
  out_of_bounds,
  unknown_region,
  degenerate_polygon,
  unreachable,
  empty_candidates,
  budget_exceeded,
  non_termination,
  zero_distance_target,
  zero_area_zone,
  fit_failure,
  invalid_argument,
  config,
  io,
};

constexpr const char* to_string(Errc c) {
  switch (c) {
    case Errc::invalid_geometry: return "invalid-geometry";
    case Errc::dangling_tube: return "dangling-tube";
    case Errc::out_of_bounds: return "out-of-bounds";
    case Errc::unknown_region: return "unknown-region";
    case Errc::degenerate_polygon: return "degenerate-polygon";
    case Errc::unreachable: return "unreachable";
    case Errc::empty_candidates: return "empty-candidates";
    case Errc::budget_exceeded: return "budget-exceeded";
    case Errc::non_termination: return "non-termination";
    case Errc::zero_distance_target: return "zero-distance-target";
    case Errc::zero_area_zone: return "zero-area-zone";
    case Errc::fit_failure: return "fit-failure";
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace uam
