#include "xfwi/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <random>

#include "xfwi/csv.hpp"
#include "xfwi/error.hpp"
#include "xfwi/parallel.hpp"

namespace xfwi {

namespace {

void log(const ExperimentContext& ctx, const std::string& msg) {
  static std::mutex mutex;
  if (!ctx.verbose) return;
  std::lock_guard lock(mutex);
  std::printf("%s\n", msg.c_str());
  std::fflush(stdout);
}

std::filesystem::path prepare_out(const ExperimentContext& ctx) {
  if (ctx.out_dir.empty()) throw ConfigError("no output directory");
  std::error_code ec;
  std::filesystem::create_directories(ctx.out_dir, ec);
  if (ec || !std::filesystem::is_directory(ctx.out_dir)) {
    throw ConfigError("cannot create output directory " + ctx.out_dir.string());
  }
  return ctx.out_dir;
}

std::shared_ptr<WavefieldStore> store_of(const ExperimentContext& ctx) {
  return ctx.store ? ctx.store : WavefieldStore::in_memory();
}

std::string shot_name(int s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shot_%03d", s);
  return buf;
}

double relative_residual(const ShotGather& d, const ShotGather& syn) {
  ShotGather r = d;
  axpy(-1.0, syn, r);
  return norm(r) / norm(d);
}

struct Problem {
  ModelGrid truth;
  ModelGrid initial;
  Geometry geom;
  Acquisition acq;
  std::vector<double> wavelet;
};

Problem load_problem(const KeyValueConfig& cfg) {
  ModelGrid truth = true_model_from_config(cfg);
  ModelGrid initial = initial_model_from_config(cfg, truth);
  Geometry geom = geometry_from_config(cfg);
  Acquisition acq = resolve_geometry(geom, truth);
  auto wavelet = wavelet_from_config(cfg, acq);
  return {std::move(truth), std::move(initial), std::move(geom), std::move(acq), std::move(wavelet)};
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + " ") {
    if (c == ' ' || c == ',' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

constexpr std::array<Method, 3> kMethods{Method::FWI, Method::WRI, Method::ESI};

}  // namespace

// ---------------------------------------------------------------------------

GridDims grid_from_config(const KeyValueConfig& cfg) {
  GridDims d;
  d.nb = static_cast<int>(cfg.get_int_or("nb", 10));
  d.nz = static_cast<int>(cfg.get_int("nz")) + 2 * d.nb;
  d.nx = static_cast<int>(cfg.get_int("nx")) + 2 * d.nb;
  d.dz = cfg.get_double("dz");
  d.dx = cfg.get_double_or("dx", d.dz);
  d.validate();
  return d;
}

ModelGrid true_model_from_config(const KeyValueConfig& cfg) {
  if (cfg.has("model_file")) return load_model(cfg.get("model_file"));
  const GridDims dims = grid_from_config(cfg);
  const auto depths = cfg.get_doubles("layer_depths");
  const auto vels = cfg.get_doubles("layer_velocities");
  ModelGrid layered = build_layered_1d(depths, vels, dims);
  const auto anomalies = cfg.get_all("anomaly");
  if (anomalies.empty()) return layered;
  std::vector<double> v = layered.velocity();
  for (const auto& a : anomalies) {
    const auto p = parse_number_list(a);
    if (p.size() != 4 || !(p[2] > 0.0)) throw ConfigError("anomaly needs 'x z radius dv' with radius > 0");
    for (int ix = 0; ix < dims.nx; ++ix)
      for (int iz = 0; iz < dims.nz; ++iz) {
        const double x = (ix - dims.nb) * dims.dx - p[0];
        const double z = (iz - dims.nb) * dims.dz - p[1];
        v[dims.index(iz, ix)] += p[3] * std::exp(-(x * x + z * z) / (p[2] * p[2]));
      }
  }
  return ModelGrid::from_velocity(dims, v);
}

ModelGrid smooth_model(const ModelGrid& model, double half_width) {
  if (!(half_width > 0.0)) return model;
  const GridDims& d = model.dims();
  std::vector<double> s = model.velocity();
  for (double& v : s) v = 1.0 / v;
  auto pass = [&](int n, double h, auto idx, int lines) {
    const int r = static_cast<int>(std::ceil(3.0 * half_width / h));
    std::vector<double> w(2 * r + 1);
    double sum = 0.0;
    for (int k = -r; k <= r; ++k) sum += w[k + r] = std::exp(-0.5 * std::pow(k * h / half_width, 2));
    for (double& x : w) x /= sum;
    std::vector<double> line(n);
    for (int l = 0; l < lines; ++l) {
      for (int i = 0; i < n; ++i) line[i] = s[idx(l, i)];
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) acc += w[k + r] * line[std::clamp(i + k, 0, n - 1)];
        s[idx(l, i)] = acc;
      }
    }
  };
  pass(d.nz, d.dz, [&](int ix, int iz) { return d.index(iz, ix); }, d.nx);
  pass(d.nx, d.dx, [&](int iz, int ix) { return d.index(iz, ix); }, d.nz);
  for (double& v : s) v = 1.0 / v;
  return ModelGrid::from_velocity(d, s);
}

ModelGrid initial_model_from_config(const KeyValueConfig& cfg, const ModelGrid& truth) {
  if (cfg.has("initial_model_file")) return load_model(cfg.get("initial_model_file"));
  if (cfg.has("initial_velocity")) return ModelGrid::constant_velocity(truth.dims(), cfg.get_double("initial_velocity"));
  if (cfg.has("initial_smoothing")) {
    ModelGrid m = smooth_model(truth, cfg.get_double("initial_smoothing"));
    // The water column is known; keep it exact so the frozen layer is right.
    const double wd = cfg.get_double_or("water_depth", 0.0);
    if (wd <= 0.0) return m;
    const GridDims& d = m.dims();
    const int rows = d.nb + static_cast<int>(std::ceil(wd / d.dz - 1e-9));
    std::vector<double> v = m.velocity();
    const std::vector<double> vt = truth.velocity();
    for (int ix = 0; ix < d.nx; ++ix)
      for (int iz = 0; iz < std::min(rows, d.nz); ++iz) v[d.index(iz, ix)] = vt[d.index(iz, ix)];
    return ModelGrid::from_velocity(d, v);
  }
  return truth;
}

std::vector<double> wavelet_from_config(const KeyValueConfig& cfg, const Acquisition& acq) {
  auto w = ricker(acq.f_peak, acq.time.nt, acq.time.dt);
  const double a = cfg.get_double_or("wavelet_amplitude", 1.0);
  for (double& v : w) v *= a;
  return w;
}

InnerSolveConfig inner_from_config(const KeyValueConfig& cfg) {
  InnerSolveConfig in;
  in.solver = parse_inner_solver(cfg.get_or("inner_solver", "cg"));
  in.cg.max_iters = static_cast<int>(cfg.get_int_or("cg_iters", 10));
  in.cg.tol = cfg.get_double_or("cg_tol", 1e-6);
  in.cg.validate();
  in.recursion_iters = static_cast<int>(cfg.get_int_or("recursion_iters", 100));
  in.power_iters = static_cast<int>(cfg.get_int_or("power_iters", 50));
  in.freqs = cfg.get_doubles_or("freqs", {});
  in.warm_start = cfg.get_int_or("warm_start", 0) != 0;
  return in;
}

// ---------------------------------------------------------------------------

std::vector<std::string> experiment_names() {
  return {"two-layer-datafit", "kernels", "landscape-scan", "dtft-toy", "small-2d-inversion"};
}

std::filesystem::path default_config_path(const std::string& name) {
  static const std::map<std::string, std::string> files{{"two-layer-datafit", "two_layer.cfg"},
                                                        {"kernels", "two_layer.cfg"},
                                                        {"landscape-scan", "landscape.cfg"},
                                                        {"dtft-toy", "dtft_toy.cfg"},
                                                        {"small-2d-inversion", "small_2d.cfg"},
                                                        {"forward", "two_layer.cfg"}};
  const auto it = files.find(name);
  if (it == files.end()) throw ConfigError("unknown experiment '" + name + "'");
  return std::filesystem::path(XFWI_CONFIG_DIR) / it->second;
}

void run_experiment(const std::string& name, const ExperimentContext& ctx) {
  if (name == "two-layer-datafit") run_two_layer_datafit(ctx);
  else if (name == "kernels") run_kernels(ctx);
  else if (name == "landscape-scan") run_landscape_scan(ctx);
  else if (name == "dtft-toy") run_dtft_toy(ctx);
  else if (name == "small-2d-inversion") run_small_2d_inversion(ctx);
  else throw ConfigError("unknown experiment '" + name + "'");
}

// ---------------------------------------------------------------------------

std::vector<ShotGather> run_forward(const ExperimentContext& ctx) {
  const auto out = prepare_out(ctx);
  const Problem P = load_problem(ctx.cfg);
  const Survey s = simulate_survey(P.truth, P.acq, P.wavelet, ctx.threads);
  for (int i = 0; i < P.acq.num_shots(); ++i) save_gather(s.observed[i], P.geom, out / shot_name(i));
  save_model(P.truth, out / "model");
  log(ctx, "wrote " + std::to_string(P.acq.num_shots()) + " gathers");
  return s.observed;
}

DataFitResult run_two_layer_datafit(const ExperimentContext& ctx) {
  const auto out = prepare_out(ctx);
  const Problem P = load_problem(ctx.cfg);
  const InnerSolveConfig inner = inner_from_config(ctx.cfg);
  const double scale = ctx.cfg.get_double_or("beta_scale", 1e-3);
  const auto kind = parse_annihilator_kind(ctx.cfg.get_or("annihilator", "distance"));

  Acquisition acq = P.acq;
  acq.sources.resize(1);
  const Survey survey = simulate_survey(P.truth, acq, P.wavelet);
  const ShotGather& d = survey.observed[0];
  const ShotContext sc = make_shot_context(P.initial, acq, 0);
  const SourceTerm f = survey.source(0);
  auto store = store_of(ctx);

  DataFitResult res;
  std::array<ShotGather, 3> syn;
  syn[0] = synthetic_data(sc, f);
  res.cg_iterations[0] = 0;
  {
    const Annihilator I = Annihilator::identity(sc.shape());
    ShotGather dd = d;
    axpy(-1.0, syn[0], dd);
    res.beta[1] = reference_beta(sc, I, dd, scale);
    const auto sol = solve_extended_source(Method::WRI, sc, I, res.beta[1], &f, d, inner, nullptr, nullptr,
                                           acq.f_peak, store.get());
    syn[1] = syn[0];
    axpy(1.0, sc.S(sol.q), syn[1]);
    res.cg_iterations[1] = sol.report.iterations;
  }
  {
    const Annihilator B = make_annihilator(kind, acq, 0);
    res.beta[2] = reference_beta(sc, B, d, scale);
    const auto sol = solve_extended_source(Method::ESI, sc, B, res.beta[2], nullptr, d, inner, nullptr, nullptr,
                                           acq.f_peak, store.get());
    syn[2] = sc.S(sol.q);
    res.cg_iterations[2] = sol.report.iterations;
  }

  Geometry g = P.geom;
  g.sources.resize(1);
  save_gather(d, g, out / "observed");
  save_model(P.truth, out / "model_true");
  save_model(P.initial, out / "model_initial");
  CsvWriter csv(out / "datafit.csv", {"method", "relative_misfit", "beta", "cg_iterations"});
  for (int i = 0; i < 3; ++i) {
    res.relative_misfit[i] = relative_residual(d, syn[i]);
    save_gather(syn[i], g, out / ("synthetic_" + to_string(kMethods[i])));
    csv.raw_row({to_string(kMethods[i]), CsvWriter::format(res.relative_misfit[i]), CsvWriter::format(res.beta[i]),
                 std::to_string(res.cg_iterations[i])});
    log(ctx, to_string(kMethods[i]) + " relative misfit " + CsvWriter::format(res.relative_misfit[i]));
  }
  return res;
}

KernelResult run_kernels(const ExperimentContext& ctx) {
  const auto out = prepare_out(ctx);
  const Problem P = load_problem(ctx.cfg);
  const InnerSolveConfig inner = inner_from_config(ctx.cfg);
  const double scale = ctx.cfg.get_double_or("beta_scale", 1e-3);
  const auto kind = parse_annihilator_kind(ctx.cfg.get_or("annihilator", "distance"));

  const auto rp = parse_number_list(ctx.cfg.get("kernel_receiver"));
  if (rp.size() != 2) throw ConfigError("kernel_receiver needs 'x z'");
  Acquisition acq = P.acq;
  acq.sources.resize(1);
  acq.receivers = {snap_to_grid(acq.dims, {rp[0], rp[1]})};
  const Survey survey = simulate_survey(P.truth, acq, P.wavelet);
  const ShotGather& d = survey.observed[0];
  const ShotContext sc = make_shot_context(P.initial, acq, 0);
  const SourceTerm f = survey.source(0);
  auto store = store_of(ctx);

  std::array<std::vector<double>, 3> grads;
  grads[0] = gradient_fwi(sc, f, d, store.get());
  {
    const Annihilator I = Annihilator::identity(sc.shape());
    ShotGather dd = d;
    axpy(-1.0, synthetic_data(sc, f), dd);
    const double beta = reference_beta(sc, I, dd, scale);
    const auto sol = solve_extended_source(Method::WRI, sc, I, beta, &f, d, inner, nullptr, nullptr, acq.f_peak,
                                           store.get());
    grads[1] = gradient_wri(sc, f, d, beta, sol.q);
  }
  {
    const Annihilator B = make_annihilator(kind, acq, 0);
    const double beta = reference_beta(sc, B, d, scale);
    const auto sol = solve_extended_source(Method::ESI, sc, B, beta, nullptr, d, inner, nullptr, nullptr, acq.f_peak,
                                           store.get());
    grads[2] = gradient_esi(sc, B, beta, d, sol.q);
  }

  const GridDims& dims = acq.dims;
  const Point s = node_position(dims, acq.sources[0]);
  const Point r = node_position(dims, acq.receivers[0]);
  const double ex = r.x - s.x, ez = r.z - s.z, len2 = ex * ex + ez * ez;
  if (len2 == 0.0) throw ConfigError("kernel receiver coincides with the source");
  KernelResult res;
  for (int m = 0; m < 3; ++m) {
    for (int ix = dims.nb; ix < dims.nx - dims.nb; ++ix)
      for (int iz = dims.nb; iz < dims.nz - dims.nb; ++iz) {
        const Point p = node_position(dims, {iz, ix});
        const double t = ((p.x - s.x) * ex + (p.z - s.z) * ez) / len2;
        const double e = std::pow(grads[m][dims.index(iz, ix)], 2);
        (t < 0.5 ? res.source_side[m] : res.receiver_side[m]) += e;
      }
    save_grid(out / ("gradient_" + to_string(kMethods[m])), dims, grads[m]);
  }
  CsvWriter csv(out / "kernel_energy.csv",
                {"method", "source_side_energy", "receiver_side_energy", "receiver_share"});
  const auto share = res.receiver_share();
  for (int m = 0; m < 3; ++m) {
    csv.raw_row({to_string(kMethods[m]), CsvWriter::format(res.source_side[m]),
                 CsvWriter::format(res.receiver_side[m]), CsvWriter::format(share[m])});
    log(ctx, to_string(kMethods[m]) + " receiver-side share " + CsvWriter::format(share[m]));
  }
  return res;
}

const LandscapeCurve& LandscapeResult::curve(Method m, double beta) const {
  for (const auto& c : curves)
    if (c.method == m && (m == Method::FWI || c.beta == beta)) return c;
  throw ConfigError("no landscape curve for " + to_string(m));
}

LandscapeResult run_landscape_scan(const ExperimentContext& ctx) {
  const auto out = prepare_out(ctx);
  const Problem P = load_problem(ctx.cfg);
  const double e0 = ctx.cfg.get_double_or("eps_min", -0.5);
  const double e1 = ctx.cfg.get_double_or("eps_max", 0.5);
  const double de = ctx.cfg.get_double_or("eps_step", 0.05);
  if (!(de > 0.0) || e1 < e0) throw ConfigError("bad eps grid");
  std::vector<double> eps;
  const int n = static_cast<int>(std::floor((e1 - e0) / de + 1e-9)) + 1;
  for (int k = 0; k < n; ++k) {
    double e = e0 + k * de;
    if (std::abs(e) < 1e-12) e = 0.0;
    eps.push_back(e);
  }
  const auto betas = ctx.cfg.get_doubles_or("betas", {100.0, 0.01});
  std::vector<Method> methods;
  for (const auto& m : split_words(ctx.cfg.get_or("methods", "fwi wri esi"))) {
    methods.push_back(parse_method(m));
  }

  EvalOptions base;
  base.annihilator = parse_annihilator_kind(ctx.cfg.get_or("annihilator", "distance"));
  base.inner = inner_from_config(ctx.cfg);
  base.threads = ctx.threads;
  base.store = store_of(ctx);
  const Survey survey = simulate_survey(P.truth, P.acq, P.wavelet, ctx.threads);

  // With beta_scale the listed betas are in units of reference_beta(scale) at
  // the true model, so one config behaves alike across grid sizes and amplitudes.
  const double unit_scale = ctx.cfg.get_double_or("beta_scale", 0.0);
  const ShotContext sc = make_shot_context(P.truth, P.acq, 0);

  LandscapeResult res;
  for (Method m : methods) {
    double unit = 1.0;
    if (unit_scale > 0.0 && m != Method::FWI) {
      const Annihilator B = m == Method::WRI ? Annihilator::identity(sc.shape())
                                             : make_annihilator(base.annihilator, P.acq, 0);
      unit = reference_beta(sc, B, survey.observed[0], unit_scale);
    }
    std::vector<double> scaled;
    for (double b : betas) scaled.push_back(b * unit);
    const auto rows = misfit_landscape_scan(P.truth, survey, m, scaled, eps, base);
    CsvWriter csv(out / ("landscape_" + to_string(m) + ".csv"),
                  {"eps", "beta", "beta_abs", "J_total", "J_e", "J_p"});
    for (const auto& r : rows) csv.row({r.eps, r.beta / unit, r.beta, r.J.total, r.J.data, r.J.penalty});
    const std::vector<double> bs = m == Method::FWI ? std::vector<double>{0.0} : betas;
    for (double b : bs) {
      LandscapeCurve c;
      c.method = m;
      c.beta = b;
      for (const auto& r : rows)
        if (r.beta == b * unit) {
          c.eps.push_back(r.eps);
          c.J.push_back(r.J);
        }
      std::vector<double> J;
      for (const auto& j : c.J) J.push_back(j.total);
      c.width = unimodal_width(c.eps, J);
      const auto [lo, hi] = std::minmax_element(J.begin(), J.end());
      c.spread = *hi - *lo;
      res.curves.push_back(std::move(c));
    }
    log(ctx, "scanned " + to_string(m));
  }
  CsvWriter csv(out / "landscape_summary.csv", {"method", "beta", "unimodal_width", "spread"});
  for (const auto& c : res.curves) {
    csv.raw_row({to_string(c.method), CsvWriter::format(c.beta), CsvWriter::format(c.width),
                 CsvWriter::format(c.spread)});
  }
  return res;
}

DtftToyResult run_dtft_toy(const ExperimentContext& ctx) {
  const auto out = prepare_out(ctx);
  const int nt = static_cast<int>(ctx.cfg.get_int_or("nt", 200));
  const double dt = ctx.cfg.get_double_or("dt", 0.005);
  const auto freqs = ctx.cfg.get_doubles_or("freqs", {1, 3, 5, 7, 9});
  const int band = static_cast<int>(ctx.cfg.get_int_or("toeplitz_band", 8));
  const std::uint64_t seed = static_cast<std::uint64_t>(ctx.cfg.get_int_or("seed", static_cast<long long>(ctx.seed)));
  validate_frequencies(freqs, dt);
  if (band < 0 || 2 * band >= nt) throw ConfigError("toeplitz_band must be in [0, nt/2)");

  // Symmetric circulant Toeplitz, strictly diagonally dominant so it is SPD.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> c(nt, 0.0);
  double off = 0.0;
  for (int k = 1; k <= band; ++k) {
    c[k] = c[nt - k] = u(rng);
    off += 2.0 * std::abs(c[k]);
  }
  c[0] = 1.0 + off;
  const MovieShape shape{nt, 1, 1};
  auto apply_A = [&](const Movie& x) {
    Movie y(shape);
    for (int i = 0; i < nt; ++i) {
      double acc = 0.0;
      for (int j = 0; j < nt; ++j) acc += c[(i - j + nt) % nt] * x.at(j, 0, 0);
      y.at(i, 0, 0) = acc;
    }
    return y;
  };

  DtftToyResult res;
  Movie x(shape);
  for (int n = 0; n < nt; ++n) {
    const double t = n * dt;
    double v = 0.0;
    for (double f : freqs) v += std::sin(2.0 * M_PI * f * t);
    x.at(n, 0, 0) = v;
    res.t.push_back(t);
    res.x_true.push_back(v);
  }
  const FreqField rhs = dtft(apply_A(x), freqs, dt);
  CgConfig cg;
  cg.max_iters = static_cast<int>(ctx.cfg.get_int_or("cg_iters", 50));
  cg.tol = ctx.cfg.get_double_or("cg_tol", 1e-13);
  auto [xbar, report] = cg_solve([&](const FreqField& v) { return dtft(apply_A(idtft(v, nt, dt)), freqs, dt); },
                                 rhs, cg);
  const Movie xr = idtft(xbar, nt, dt);
  for (int n = 0; n < nt; ++n) {
    res.x_reconstructed.push_back(xr.at(n, 0, 0));
    res.max_error = std::max(res.max_error, std::abs(xr.at(n, 0, 0) - res.x_true[n]));
    res.max_abs = std::max(res.max_abs, std::abs(res.x_true[n]));
  }
  res.report = std::move(report);
  CsvWriter csv(out / "dtft_toy.csv", {"t_s", "x_true", "x_reconstructed"});
  for (int n = 0; n < nt; ++n) csv.row({res.t[n], res.x_true[n], res.x_reconstructed[n]});
  write_cg_report_csv(res.report, out / "dtft_toy_cg.csv");
  log(ctx, "dtft toy max error " + CsvWriter::format(res.max_error));
  return res;
}

SmallInversionResult run_small_2d_inversion(const ExperimentContext& ctx) {
  const auto out = prepare_out(ctx);
  const KeyValueConfig& cfg = ctx.cfg;
  const Problem P = load_problem(cfg);
  const Survey survey = simulate_survey(P.truth, P.acq, P.wavelet, ctx.threads);
  save_model(P.truth, out / "model_true");
  save_model(P.initial, out / "model_initial");

  InversionConfig ic;
  ic.method = parse_method(cfg.get_or("method", "esi"));
  ic.annihilator = parse_annihilator_kind(cfg.get_or("annihilator", "distance"));
  ic.noise_fraction = cfg.get_double_or("noise_fraction", 1e-4);
  ic.beta_growth = cfg.get_double_or("beta_growth", 2.0);
  ic.n_outer = static_cast<int>(cfg.get_int_or("n_outer", 6));
  ic.lbfgs_memory = static_cast<int>(cfg.get_int_or("lbfgs_memory", 5));
  ic.armijo_c1 = cfg.get_double_or("armijo_c1", 1e-4);
  ic.max_backtracks = static_cast<int>(cfg.get_int_or("max_backtracks", 20));
  ic.max_rel_update = cfg.get_double_or("max_rel_update", 0.05);
  ic.inner = inner_from_config(cfg);
  ic.water_depth = cfg.get_double_or("water_depth", 0.0);
  ic.vmin = cfg.get_double_or("vmin", 0.0);
  ic.vmax = cfg.get_double_or("vmax", 0.0);
  ic.snapshot_every = static_cast<int>(cfg.get_int_or("snapshot_every", 1));
  ic.out_dir = out;
  ic.threads = ctx.threads;

  // First CG loop of the first shot at the starting model: residual history and
  // the extended source amplitude at one frequency.
  const ShotContext sc = make_shot_context(P.initial, P.acq, 0);
  const Annihilator B = make_annihilator(ic.annihilator, P.acq, 0);
  if (cfg.has("beta0")) {
    ic.beta0 = cfg.get_double("beta0");
  } else {
    ic.beta0 = reference_beta(sc, B, survey.observed[0], cfg.get_double_or("beta_scale", 1e-3));
  }
  CgReport first_cg;
  if (ic.method == Method::ESI) {
    const double fmap = cfg.get_double_or("extsrc_frequency", 2.0);
    const auto snap_iters = cfg.get_doubles_or("extsrc_iters", {1, 2, 5, 10});
    auto op = esi_normal_operator(sc, B, ic.beta0);
    CsvWriter maps(out / "extsrc_maps.csv", {"cg_iter", "file", "frequency_hz"});
    auto on_iter = [&](int k, const Movie& x) {
      if (std::find(snap_iters.begin(), snap_iters.end(), double(k)) == snap_iters.end()) return;
      char name[40];
      std::snprintf(name, sizeof name, "extsrc_%dhz_iter_%02d", int(std::lround(fmap)), k);
      save_grid(out / name, P.acq.dims, amplitude_at(dtft(x, {fmap}, sc.dt()), fmap));
      maps.raw_row({std::to_string(k), name, CsvWriter::format(fmap)});
    };
    auto solved = cg_solve(op.apply, esi_rhs(sc, survey.observed[0]), ic.inner.cg, nullptr, on_iter);
    first_cg = std::move(solved.second);
    write_cg_report_csv(first_cg, out / "cg_history.csv");
  }
  SmallInversionResult res{invert(ic, P.initial, survey, &P.truth), std::move(first_cg)};
  write_iteration_log(res.inversion.records, out / "inversion_log.csv");
  save_model(res.inversion.model, out / "model_final");
  for (const auto& r : res.inversion.records) {
    log(ctx, "iter " + std::to_string(r.iter) + " J " + CsvWriter::format(r.J.total) + " rms " +
                 CsvWriter::format(r.model_rms_error));
  }
  return res;
}

}  // namespace xfwi
