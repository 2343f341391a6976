// io.hpp — CSV/JSON emission for trajectories, sweeps, controls and training logs.
// Column layouts are listed in docs/formats.md. Numbers are printed with fixed formats so
// reruns produce byte-identical files.

#pragma once

#include "spinsq/combined.hpp"
#include "spinsq/ddpg.hpp"
#include "spinsq/effective.hpp"
#include "spinsq/sweep.hpp"

#include <filesystem>
#include <string>

namespace spinsq {

/// Shortest-round-trip-safe rendering (%.17g).
std::string format_exact(double v);
/// %.10g
std::string format_short(double v);

/// Writes via a temporary sibling and renames, so readers never see a half-written file.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

std::string trajectory_csv(const Trajectory& traj);
std::string sweep_csv(const SweepResult& sweep);
std::string control_csv(const ControlSignal& control);
std::string training_log_csv(const TrainingLog& log);
std::string stitch_csv(const CombinedResult& result);
std::string fidelity_csv(const FidelitySeries& series);

/// Parses control_csv output: header "t,zeta", rows on a uniform grid.
ControlSignal parse_control_csv(const std::string& text);

}  // namespace spinsq
