#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "xfwi/config.hpp"
#include "xfwi/inversion.hpp"

namespace xfwi {

/// Everything an experiment recipe needs from the command line.
struct ExperimentContext {
  KeyValueConfig cfg;
  std::filesystem::path out_dir;
  std::shared_ptr<WavefieldStore> store;
  int threads = 1;
  std::uint64_t seed = 1;
  bool verbose = false;
};

std::vector<std::string> experiment_names();
/// configs/<name>.cfg for the named experiment.
std::filesystem::path default_config_path(const std::string& name);
/// Runs a recipe by name and writes its artifacts to ctx.out_dir.
void run_experiment(const std::string& name, const ExperimentContext& ctx);

// --- model / geometry from config ------------------------------------------
// nz, nx count physical nodes; the absorbing strip of nb nodes is added on
// every side.

GridDims grid_from_config(const KeyValueConfig& cfg);
/// `model_file`, or layers (layer_depths, layer_velocities) plus any number of
/// Gaussian `anomaly = x z radius dv` bumps.
ModelGrid true_model_from_config(const KeyValueConfig& cfg);
/// `initial_velocity` (constant) or `initial_smoothing` (Gaussian half-width in
/// meters applied to the true slowness).
ModelGrid initial_model_from_config(const KeyValueConfig& cfg, const ModelGrid& truth);
/// Separable Gaussian smoothing of the slowness, edges clamped.
ModelGrid smooth_model(const ModelGrid& model, double half_width);
/// Ricker wavelet scaled by `wavelet_amplitude` (default 1).
std::vector<double> wavelet_from_config(const KeyValueConfig& cfg, const Acquisition& acq);
InnerSolveConfig inner_from_config(const KeyValueConfig& cfg);

// --- recipes ---------------------------------------------------------------

/// Writes shot_NNN gathers modeled in the true model.
std::vector<ShotGather> run_forward(const ExperimentContext& ctx);

struct DataFitResult {
  /// ||d - Ru|| / ||d|| for FWI, WRI, ESI.
  std::array<double, 3> relative_misfit{};
  std::array<double, 3> beta{};
  std::array<int, 3> cg_iterations{};
};
DataFitResult run_two_layer_datafit(const ExperimentContext& ctx);

struct KernelResult {
  /// Squared-gradient energy on the source and receiver sides of the
  /// perpendicular bisector of the source-receiver segment.
  std::array<double, 3> source_side{};
  std::array<double, 3> receiver_side{};
  std::array<double, 3> receiver_share() const {
    std::array<double, 3> s{};
    for (int i = 0; i < 3; ++i) s[i] = receiver_side[i] / (source_side[i] + receiver_side[i]);
    return s;
  }
};
KernelResult run_kernels(const ExperimentContext& ctx);

struct LandscapeCurve {
  Method method = Method::FWI;
  double beta = 0.0;
  std::vector<double> eps;
  std::vector<MisfitBreakdown> J;
  double width = 0.0;
  /// max J - min J over the grid
  double spread = 0.0;
};
struct LandscapeResult {
  std::vector<LandscapeCurve> curves;
  const LandscapeCurve& curve(Method m, double beta = 0.0) const;
};
LandscapeResult run_landscape_scan(const ExperimentContext& ctx);

struct DtftToyResult {
  std::vector<double> t;
  std::vector<double> x_true;
  std::vector<double> x_reconstructed;
  double max_error = 0.0;
  double max_abs = 0.0;
  CgReport report;
};
DtftToyResult run_dtft_toy(const ExperimentContext& ctx);

struct SmallInversionResult {
  InversionResult inversion;
  CgReport first_cg;
};
SmallInversionResult run_small_2d_inversion(const ExperimentContext& ctx);

}  // namespace xfwi
