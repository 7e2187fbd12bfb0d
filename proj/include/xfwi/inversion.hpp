#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xfwi/alt_solvers.hpp"
#include "xfwi/cg.hpp"
#include "xfwi/linops.hpp"
#include "xfwi/normal_ops.hpp"
#include "xfwi/wavefield_store.hpp"

namespace xfwi {

enum class Method { FWI, WRI, ESI };
Method parse_method(const std::string& s);
std::string to_string(Method m);

/// J_total = J_e + beta * J_p with J_e = 1/2 ||Ru - d||^2 and J_p = 1/2 ||Bq||^2.
struct MisfitBreakdown {
  double total = 0.0;
  double data = 0.0;
  double penalty = 0.0;
  double beta = 0.0;

  MisfitBreakdown& operator+=(const MisfitBreakdown& o) {
    total += o.total;
    data += o.data;
    penalty += o.penalty;
    return *this;
  }
};

// --- per-shot misfits and gradients ----------------------------------------
// Gradients are with respect to the squared slowness at every node, using the
// exact derivative of the discrete wave operator, so they match finite
// differences of the discrete misfit.

/// u = A^{-1} f, J = 1/2 ||Ru - d||^2. Optionally returns Ru.
MisfitBreakdown misfit_fwi(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d,
                           ShotGather* synthetic = nullptr);
/// g = sum_t lambda * dA/dm u with lambda = A^{-H} R^H (d - Ru). The forward
/// wavefield is held in `store` (a private in-memory store when null).
std::vector<double> gradient_fwi(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d,
                                 WavefieldStore* store = nullptr, MisfitBreakdown* misfit = nullptr);

/// u = A^{-1}(f + q), J = 1/2 ||Ru - d||^2 + beta/2 ||q||^2.
MisfitBreakdown misfit_wri(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d, double beta,
                           const Movie& q, ShotGather* synthetic = nullptr);
/// u = A^{-1} q, J = 1/2 ||Ru - d||^2 + beta/2 ||Bq||^2.
MisfitBreakdown misfit_esi(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                           const Movie& q, ShotGather* synthetic = nullptr);

/// beta * sum_t q * dA/dm u, u = A^{-1}(f + q). Valid at the inner solution.
std::vector<double> gradient_wri(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d, double beta,
                                 const Movie& q, MisfitBreakdown* misfit = nullptr);
/// sum_t lambda * dA/dm u with lambda = beta B^H B q and u = A^{-1} q.
std::vector<double> gradient_esi(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                 const Movie& q, MisfitBreakdown* misfit = nullptr);

// --- inner problem -----------------------------------------------------------

enum class InnerSolver { Cg, DataSpace, GaussSeidel, Surrogate, FreqReduced };
InnerSolver parse_inner_solver(const std::string& s);
std::string to_string(InnerSolver s);

struct InnerSolveConfig {
  InnerSolver solver = InnerSolver::Cg;
  CgConfig cg;
  /// Iterations for the Gauss-Seidel and surrogate recursions.
  int recursion_iters = 100;
  int power_iters = 50;
  /// Frequencies for the reduced solver; empty means five inside the source band.
  std::vector<double> freqs;
  /// Seed CG with the previous outer iteration's q instead of zero.
  bool warm_start = false;
};

struct InnerSolution {
  Movie q;
  CgReport report;
};

/// Solves (S^H S + beta B^H B) q = S^H d (ESI) or (S^H S + beta I) q = S^H (d - S f)
/// (WRI). `mask` restricts q to the nodes where it is 1 (CG only).
InnerSolution solve_extended_source(Method method, const ShotContext& ctx, const Annihilator& B, double beta,
                                    const SourceTerm* f, const ShotGather& d, const InnerSolveConfig& cfg,
                                    const Movie* warm = nullptr, const std::vector<double>* mask = nullptr,
                                    double f_peak = 0.0, WavefieldStore* store = nullptr);

/// beta = scale * ||S^H d||^2 / ||d||^2 / mean(w^2): a penalty relative to the
/// data-space curvature, comparable across annihilators and grids.
double reference_beta(const ShotContext& ctx, const Annihilator& B, const ShotGather& d, double scale);

/// Discrepancy rule: beta grows by `growth` once J_e drops below the noise target.
double update_beta(double data_misfit, double noise_target, double beta, double growth);

// --- multi-shot evaluation ---------------------------------------------------

/// Acquisition plus observed data (one gather per shot) and, for FWI/WRI, the
/// physical source wavelet.
struct Survey {
  Acquisition acq;
  std::vector<ShotGather> observed;
  std::vector<double> wavelet;

  PointSource source(int shot) const { return {acq.sources.at(shot), wavelet}; }
  double data_norm_sq() const;
};

/// Synthetic observed data for a model: one point-source modeling per shot.
Survey simulate_survey(const ModelGrid& truth, const Acquisition& acq, const std::vector<double>& wavelet,
                       int threads = 1);

struct Evaluation {
  MisfitBreakdown J;
  std::vector<double> gradient;
  std::vector<Movie> q;
  std::vector<ShotGather> synthetic;
  std::vector<CgReport> reports;
};

struct EvalOptions {
  Method method = Method::ESI;
  double beta = 0.0;
  AnnihilatorKind annihilator = AnnihilatorKind::SpatialDistance;
  InnerSolveConfig inner;
  bool with_gradient = true;
  bool keep_q = false;
  int threads = 1;
  std::shared_ptr<WavefieldStore> store;
};

/// Misfit (with the inner problem solved for WRI/ESI), gradient and per-shot
/// byproducts, summed over shots in shot order.
Evaluation evaluate(const Survey& survey, const ModelGrid& m, const EvalOptions& opts,
                    const std::vector<Movie>* warm = nullptr);

// --- outer loop --------------------------------------------------------------

/// Limited-memory BFGS two-loop recursion.
class Lbfgs {
 public:
  explicit Lbfgs(int memory, bool scale_initial = true);
  /// -H g
  std::vector<double> direction(const std::vector<double>& g) const;
  /// Stores the pair when s.y > 0; returns whether it was stored.
  bool update(const std::vector<double>& s, const std::vector<double>& y);
  void reset();
  int size() const { return static_cast<int>(s_.size()); }

 private:
  int memory_;
  bool scale_initial_;
  std::vector<std::vector<double>> s_, y_;
  std::vector<double> rho_;
};

struct InversionConfig {
  Method method = Method::ESI;
  AnnihilatorKind annihilator = AnnihilatorKind::SpatialDistance;
  /// Negative selects the automatic start 1e-3 ||S^H d||^2 / ||d||^2 at m0.
  double beta0 = -1.0;
  /// Noise target = noise_fraction * ||d||^2.
  double noise_fraction = 1e-4;
  double beta_growth = 2.0;
  int n_outer = 6;
  int lbfgs_memory = 5;
  double armijo_c1 = 1e-4;
  int max_backtracks = 20;
  /// First trial step changes m by at most this fraction of max(m).
  double max_rel_update = 0.05;
  InnerSolveConfig inner;
  bool mask_absorbing = true;
  /// Depth (meters, physical) of a water layer excluded from updates.
  double water_depth = 0.0;
  double vmin = 0.0;
  double vmax = 0.0;
  int snapshot_every = 0;
  std::filesystem::path out_dir;
  int threads = 1;
};

struct IterationRecord {
  int iter = 0;
  MisfitBreakdown J;
  double grad_norm = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  /// Only when a true model is supplied.
  double model_rms_error = 0.0;
  std::string snapshot;
};

struct InversionResult {
  ModelGrid model;
  std::vector<IterationRecord> records;
  bool line_search_failed = false;
  std::vector<CgReport> last_reports;
};

InversionResult invert(const InversionConfig& cfg, const ModelGrid& m0, const Survey& survey,
                       const ModelGrid* truth = nullptr);

/// Writes iter, J_total, J_e, J_p, beta, grad_norm, alpha (and model_rms_error).
void write_iteration_log(const std::vector<IterationRecord>& records, const std::filesystem::path& path);

/// Velocity RMS error between two models over the physical domain.
double model_rms_error(const ModelGrid& a, const ModelGrid& b);

// --- misfit landscape ----------------------------------------------------------

struct LandscapeRow {
  double eps = 0.0;
  double beta = 0.0;
  MisfitBreakdown J;
};

/// For each eps, m = (1 + eps) m_true; WRI/ESI solve the inner problem for
/// every beta, FWI is evaluated once per eps (beta column 0).
std::vector<LandscapeRow> misfit_landscape_scan(const ModelGrid& m_true, const Survey& survey, Method method,
                                                const std::vector<double>& betas, const std::vector<double>& eps,
                                                const EvalOptions& base);

/// Width of the contiguous eps interval around the basin reached by walking
/// downhill from the sample closest to eps = 0 on which J is unimodal.
double unimodal_width(const std::vector<double>& eps, const std::vector<double>& J);

}  // namespace xfwi
