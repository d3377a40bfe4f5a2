#pragma once

#include <string>
#include <vector>

#include "gridanneal/netmodel.hpp"

namespace gridanneal {

// Parses the MATPOWER case subset: function header, baseMVA, and the bus,
// gen, branch and (optional) gencost matrices. Bus types 1/2/3 map to
// PQ/PV/slack; type 4 (isolated) is rejected. Out-of-service branches and
// generators (status 0) are dropped. Throws ParseError with a line number on
// malformed text and ValidationError on semantic problems.
NetworkCase parse_matpower(const std::string& text);

// gridcase-v1 JSON schema load/save. save_json(load_json(s)) is
// field-for-field identical. Errors carry the JSON path.
NetworkCase load_json(const std::string& text);
std::string save_json(const NetworkCase& net);

// Reads a case file, dispatching on extension (.m -> MATPOWER, .json).
NetworkCase load_case_file(const std::string& path);
void save_case_file(const NetworkCase& net, const std::string& path);

enum class PerturbationMode { LoadScale, ResistanceScale };

// LoadScale multiplies P/Q demand at the named buses (external ids; empty
// means every PQ bus). ResistanceScale multiplies branch resistance at the
// named branch ordinals (empty means every branch), leaving reactance alone.
struct PerturbationSpec {
  PerturbationMode mode = PerturbationMode::LoadScale;
  double factor = 1.0;
  std::vector<int> buses;     // external bus ids (LoadScale)
  std::vector<int> branches;  // 0-based branch ordinals (ResistanceScale)
};

// Returns a renamed deep copy with the perturbation applied. Throws
// ValidationError if a load scaling names the slack bus or any id is unknown.
NetworkCase apply_perturbation(const NetworkCase& net,
                               const PerturbationSpec& spec);

}  // namespace gridanneal
