#pragma once

#include <string>

#include "cbf/cegis.hpp"
#include "cbf/model.hpp"

namespace cbf {

// Verification report. Timing fields are included only on demand: the
// synthesis pipeline keeps its outputs byte-deterministic.
std::string verify_report_to_json(const VerificationOutcome& outcome, double epsilon,
                                  bool include_timing);

std::string synthesis_report_to_json(const CegisResult& result, std::uint64_t seed);

}  // namespace cbf
