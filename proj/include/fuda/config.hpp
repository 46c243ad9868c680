#pragma once

#include "fuda/experiment.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fuda {

/// Everything a run needs. Sections: [dataset] [split] [model] [trainer] [run].
struct RunConfig {
  ExperimentConfig experiment;
  std::string variant = "full";
  std::vector<std::uint64_t> seeds{0};
  std::string output_dir;    ///< empty: $FUDA_OUT_DIR, else ./runs
  int checkpoint_every = 0;  ///< 0 writes only the final checkpoint
  bool debug_dumps = false;
  /// `section.key=value` overrides in the order applied; kept for the record.
  std::vector<std::string> overrides;

  void validate() const;
  std::string resolved_output_dir() const;
};

/// Parses INI text then applies overrides. Unknown sections or keys are errors,
/// as are malformed values; everything is checked before any training starts.
RunConfig parse_run_config(std::istream& in, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {});

/// Canonical INI carrying every effective value; parsing it back yields the same config.
std::string render_run_config(const RunConfig& config);

}  // namespace fuda
