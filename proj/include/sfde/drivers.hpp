#pragma once

#include <sfde/config.hpp>

#include <iosfwd>
#include <string>

namespace sfde {

// Exit codes shared by the CLI and the drivers.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInvariant = 3;
inline constexpr int kExitAllBlowUp = 4;

/// Output directory after applying the SFDE_OUTPUT_ROOT env override.
std::string resolve_output_dir(const RunConfig& cfg);

/// Writes one trajectory CSV per sample plus a replayable manifest.json.
/// Returns kExitAllBlowUp when every sample hit the guard.
int cmd_simulate(const RunConfig& cfg, std::ostream& log);

/// Runs the configured k- or dt-study; writes study.csv, summary.json and a
/// gnuplot script.  Returns kExitInvariant when the fitted slope violates
/// the study's guard band.
int cmd_study(const RunConfig& cfg, std::ostream& log);

/// Staged self-checks of the configured pieces (measures, generator, grid,
/// aggregation fast path, deterministic reductions); one pass/fail line per
/// check.  Returns kExitInvariant on any failure.  Takes the raw document so
/// that invalid pieces are reported instead of aborting the parse.
int cmd_validate(const nlohmann::json& doc, std::ostream& log);

/// 17-significant-digit float formatting used for all CSV output.
std::string format_g17(double v);

} // namespace sfde
