#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support.hpp"
#include "xfwi/error.hpp"
#include "xfwi/experiments.hpp"

using namespace xfwi;
using namespace xfwi::testing;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(
nz = 21
nx = 21
dz = 10
dx = 10
nb = 5
layer_depths = 0 100
layer_velocities = 1500 1800
initial_velocity = 1500
nt = 120
dt = 0.002
f_peak = 15
source = 100 10
receiver_line = 0 10 200 10 21
kernel_receiver = 180 10
eps_min = -0.1
eps_max = 0.1
eps_step = 0.1
betas = 1 0.01
beta_scale = 1
methods = fwi esi
cg_iters = 5
cg_tol = 1e-12
n_outer = 2
max_rel_update = 0.02
)";

ExperimentContext tiny_context(const std::string& tag, const std::vector<std::string>& overrides = {}) {
  ExperimentContext ctx;
  ctx.cfg = KeyValueConfig::parse(kTiny);
  ctx.cfg.apply_overrides(overrides);
  ctx.out_dir = scratch_dir(tag);
  return ctx;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

/// Every regular file in a, byte-compared with its namesake in b.
void expect_same_tree(const fs::path& a, const fs::path& b) {
  int files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / e.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(e.path()), slurp(other)) << e.path().filename();
  }
  EXPECT_GT(files, 0);
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + XFWI_CLI_PATH + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_tiny_config(const std::string& tag) {
  const fs::path p = scratch_dir(tag) / "tiny.cfg";
  std::ofstream(p) << kTiny;
  return p;
}

}  // namespace

TEST(Experiments, NamesAndUnknownName) {
  const auto names = experiment_names();
  EXPECT_EQ(names.size(), 5u);
  for (const auto& n : names) EXPECT_TRUE(fs::exists(default_config_path(n))) << n;
  EXPECT_THROW(run_experiment("no-such-experiment", tiny_context("unknown")), ConfigError);
}

TEST(Experiments, ZeroAmplitudeWaveletGivesZeroGathers) {
  const auto gathers = run_forward(tiny_context("zero_wavelet", {"wavelet_amplitude=0"}));
  ASSERT_EQ(gathers.size(), 1u);
  EXPECT_EQ(max_abs(gathers[0]), 0.0);
}

TEST(Experiments, ForwardRerunIsByteIdentical) {
  const auto a = tiny_context("fwd_a"), b = tiny_context("fwd_b");
  const auto ga = run_forward(a);
  run_forward(b);
  EXPECT_GT(max_abs(ga[0]), 0.0);
  expect_same_tree(a.out_dir, b.out_dir);
}

TEST(Experiments, LandscapeSinglePointGrid) {
  const auto r = run_landscape_scan(tiny_context("scan1", {"eps_min=0", "eps_max=0"}));
  const auto& fwi = r.curve(Method::FWI);
  ASSERT_EQ(fwi.eps.size(), 1u);
  EXPECT_EQ(fwi.J[0].total, 0.0);
  EXPECT_EQ(fwi.width, 0.0);
  for (double b : {1.0, 0.01}) {
    ASSERT_EQ(r.curve(Method::ESI, b).eps.size(), 1u);
    EXPECT_GT(r.curve(Method::ESI, b).J[0].total, 0.0);
  }
}

TEST(Experiments, LandscapeCsvsAreDeterministicWithHeaders) {
  const auto a = tiny_context("scan_a"), b = tiny_context("scan_b");
  const auto r = run_landscape_scan(a);
  run_landscape_scan(b);
  expect_same_tree(a.out_dir, b.out_dir);
  EXPECT_EQ(first_line(a.out_dir / "landscape_fwi.csv"), "eps,beta,beta_abs,J_total,J_e,J_p");
  EXPECT_EQ(first_line(a.out_dir / "landscape_summary.csv"), "method,beta,unimodal_width,spread");
  // one FWI curve and one ESI curve per beta, three eps samples each
  EXPECT_EQ(r.curves.size(), 3u);
  for (const auto& c : r.curves) EXPECT_EQ(c.eps.size(), 3u);
}

TEST(Experiments, DtftToyReconstructsAndIsDeterministic) {
  ExperimentContext a, b;
  a.cfg = b.cfg = KeyValueConfig::load(default_config_path("dtft-toy"));
  a.out_dir = scratch_dir("dtft_a");
  b.out_dir = scratch_dir("dtft_b");
  const auto r = run_dtft_toy(a);
  run_dtft_toy(b);
  expect_same_tree(a.out_dir, b.out_dir);
  EXPECT_EQ(first_line(a.out_dir / "dtft_toy.csv"), "t_s,x_true,x_reconstructed");
  EXPECT_LE(r.max_error, 1e-6 * r.max_abs);
}

TEST(Experiments, DatafitAndKernelsWriteTables) {
  const auto ctx = tiny_context("datafit", {"cg_iters=20"});
  const auto fit = run_two_layer_datafit(ctx);
  EXPECT_EQ(first_line(ctx.out_dir / "datafit.csv"), "method,relative_misfit,beta,cg_iterations");
  // modeled data from the homogeneous start misses the reflection
  EXPECT_GT(fit.relative_misfit[0], 0.0);
  EXPECT_LT(fit.relative_misfit[2], 1.0);
  const auto k = run_kernels(ctx);
  for (int i = 0; i < 3; ++i) {
    EXPECT_GT(k.source_side[i] + k.receiver_side[i], 0.0);
    EXPECT_GE(k.receiver_share()[i], 0.0);
    EXPECT_LE(k.receiver_share()[i], 1.0);
  }
  EXPECT_TRUE(fs::exists(ctx.out_dir / "kernel_energy.csv"));
}

TEST(Experiments, SmallInversionWritesLogAndSnapshots) {
  const auto ctx = tiny_context("small_inv", {"method=esi", "beta_growth=1", "extsrc_iters=1 2"});
  const auto r = run_small_2d_inversion(ctx);
  ASSERT_GE(r.inversion.records.size(), 2u);
  EXPECT_EQ(first_line(ctx.out_dir / "inversion_log.csv").rfind("iter,J_total,J_e,J_p,beta", 0), 0u);
  EXPECT_TRUE(fs::exists(ctx.out_dir / "cg_history.csv"));
  EXPECT_TRUE(fs::exists(ctx.out_dir / "extsrc_maps.csv"));
  EXPECT_GE(r.first_cg.iterations, 2);
  for (std::size_t k = 1; k < r.inversion.records.size(); ++k)
    EXPECT_LT(r.inversion.records[k].J.total, r.inversion.records[k - 1].J.total);
}

TEST(Experiments, SmoothedStartKeepsWaterColumn) {
  std::string text = kTiny;
  text.erase(text.find("initial_velocity"), std::string("initial_velocity = 1500\n").size());
  auto cfg = KeyValueConfig::parse(text);
  cfg.set("layer_velocities", "1500 2500");
  cfg.set("water_depth", "50");
  cfg.set("initial_smoothing", "60");
  const auto truth = true_model_from_config(cfg);
  const auto m0 = initial_model_from_config(cfg, truth);
  const auto& d = truth.dims();
  const auto vt = truth.velocity(), v0 = m0.velocity();
  for (int ix = 0; ix < d.nx; ++ix) {
    for (int iz = 0; iz < d.nb + 5; ++iz) EXPECT_EQ(v0[d.index(iz, ix)], vt[d.index(iz, ix)]);
    // below the water the start is smoothed
    EXPECT_NE(v0[d.index(d.nb + 9, ix)], vt[d.index(d.nb + 9, ix)]);
  }
}

TEST(Cli, ExitCodes) {
  const fs::path cfg = write_tiny_config("cli");
  const std::string out = (cfg.parent_path() / "out").string();
  EXPECT_EQ(run_cli("--config " + cfg.string() + " --out " + out + " forward"), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "shot_000.bin"));
  EXPECT_EQ(run_cli("--out " + out + " experiment no-such-experiment"), 1);
  EXPECT_EQ(run_cli("--config /nonexistent.cfg --out " + out + " forward"), 1);
  EXPECT_EQ(run_cli("--config " + cfg.string() + " --set nt=abc --out " + out + " forward"), 1);
  EXPECT_EQ(run_cli("selftest --none"), 1);
  EXPECT_EQ(run_cli("selftest --suite bogus"), 1);
  EXPECT_EQ(run_cli("selftest --suite dot"), 0);
  EXPECT_EQ(run_cli("selftest --suite dot --break-adjoint"), 2);
  EXPECT_EQ(run_cli("--config " + cfg.string() + " --out " + out + " experiment kernels",
                    "XFWI_STORE_BUDGET_BYTES=1000"),
            3);
}
