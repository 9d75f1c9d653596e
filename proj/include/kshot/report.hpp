#pragma once

// Report emission (JSON, CSV, SVG) and prior serialisation.

#include "kshot/container.hpp"
#include "kshot/evaluation.hpp"
#include "kshot/priors.hpp"
#include "kshot/representational.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace kshot {

/// Provenance fields stamped into every JSON report. `generated_at` is the
/// only field allowed to differ between identical runs.
struct RunInfo {
  std::string command;
  std::uint64_t seed = 0;
  std::string generated_at;
};

/// Current UTC time, ISO-8601.
std::string utc_timestamp();

std::string benchmark_json(const BenchmarkResult& result, const RunInfo& info);
/// One row per (method, k).
std::string benchmark_csv(const BenchmarkResult& result);
/// Reliability diagram: one polyline per (method, k) over occupied bins.
std::string calibration_svg(const BenchmarkResult& result);

std::string sweep_json(const SweepResult& sweep, const RunInfo& info);
std::string sweep_csv(const SweepResult& sweep);
/// Accuracy and NLL against log10 C, with the from-weights constant marked.
std::string sweep_svg(const SweepResult& sweep);

struct OnlineRun {
  std::string method;
  std::string mode;  // "joint" or "only-new"
  int k = 0;
  OnlineReport report;
};
std::string online_json(const std::vector<OnlineRun>& runs, const RunInfo& info);
std::string online_csv(const std::vector<OnlineRun>& runs);

using HeldoutRow = std::pair<std::string, HeldoutResult>;
std::string heldout_json(const std::vector<HeldoutRow>& rows, int n_heldout, const RunInfo& info);
std::string heldout_csv(const std::vector<HeldoutRow>& rows);

std::string train_log_json(const TrainResult& result, const TrainConfig& cfg, const RunInfo& info);

/// Prior parameters as container sections under "prior/". The spec string
/// is kept so the prior can be identified without the sidecar.
std::vector<Section> prior_to_sections(const WeightPrior& prior, const std::string& spec);
WeightPrior prior_from_sections(const std::vector<Section>& sections);
/// Human-readable JSON summary of a prior (family, kind, dimension, parameters).
std::string prior_json(const WeightPrior& prior, const std::string& spec, const RunInfo& info);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace kshot
