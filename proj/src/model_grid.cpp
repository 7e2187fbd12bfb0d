#include "xfwi/model_grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xfwi/error.hpp"

namespace xfwi {

namespace fs = std::filesystem;

void GridDims::validate() const {
  if (nz < 3 || nx < 3) throw ConfigError("grid needs nz, nx >= 3");
  if (!(dz > 0.0) || !(dx > 0.0) || !std::isfinite(dz) || !std::isfinite(dx)) {
    throw ConfigError("grid spacing must be positive");
  }
  if (nb < 0) throw ConfigError("absorbing width nb must be >= 0");
  if (nz - 2 * nb < 1 || nx - 2 * nb < 1) throw ConfigError("absorbing strip leaves no physical domain");
}

ModelGrid::ModelGrid(GridDims dims, std::vector<double> squared_slowness)
    : dims_(dims), m_(std::move(squared_slowness)) {
  dims_.validate();
  if (m_.size() != dims_.size()) throw ConfigError("model size does not match nz*nx");
  for (double v : m_) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("non-positive velocity in model");
  }
}

ModelGrid ModelGrid::from_velocity(GridDims dims, std::span<const double> velocity) {
  std::vector<double> m(velocity.size());
  for (std::size_t i = 0; i < velocity.size(); ++i) {
    const double v = velocity[i];
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("non-positive velocity in model");
    m[i] = 1.0 / (v * v);
  }
  return {dims, std::move(m)};
}

ModelGrid ModelGrid::constant_velocity(GridDims dims, double velocity) {
  std::vector<double> v(dims.size(), velocity);
  return from_velocity(dims, v);
}

std::vector<double> ModelGrid::velocity() const {
  std::vector<double> v(m_.size());
  std::transform(m_.begin(), m_.end(), v.begin(), [](double m) { return 1.0 / std::sqrt(m); });
  return v;
}

double ModelGrid::max_velocity() const {
  return 1.0 / std::sqrt(*std::min_element(m_.begin(), m_.end()));
}

double ModelGrid::min_velocity() const {
  return 1.0 / std::sqrt(*std::max_element(m_.begin(), m_.end()));
}

std::vector<double> ShotGather::trace(int r) const {
  std::vector<double> out(nt_);
  for (int t = 0; t < nt_; ++t) out[t] = at(t, r);
  return out;
}

// ---------------------------------------------------------------------------

GridNode snap_to_grid(const GridDims& dims, Point p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.z)) throw ConfigError("non-finite position");
  const long ix = std::lround(p.x / dims.dx) + dims.nb;
  const long iz = std::lround(p.z / dims.dz) + dims.nb;
  if (ix < dims.nb || ix >= dims.nx - dims.nb || iz < dims.nb || iz >= dims.nz - dims.nb) {
    std::ostringstream msg;
    msg << "position (" << p.x << ", " << p.z << ") m is outside the physical grid";
    throw ConfigError(msg.str());
  }
  return {static_cast<int>(iz), static_cast<int>(ix)};
}

Point node_position(const GridDims& dims, GridNode node) {
  return {(node.ix - dims.nb) * dims.dx, (node.iz - dims.nb) * dims.dz};
}

double cfl_limit() { return std::sqrt(3.0) / 2.0; }

double cfl_number(double dt, double dx, double dz, double v_max) {
  return v_max * dt * std::sqrt(1.0 / (dx * dx) + 1.0 / (dz * dz));
}

bool cfl_ok(double dt, double dx, double dz, double v_max) {
  return cfl_number(dt, dx, dz, v_max) <= cfl_limit();
}

void check_cfl(double dt, double dx, double dz, double v_max) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!cfl_ok(dt, dx, dz, v_max)) {
    std::ostringstream msg;
    msg << "CFL violated: v_max*dt*sqrt(1/dx^2+1/dz^2) = " << cfl_number(dt, dx, dz, v_max)
        << " > " << cfl_limit();
    throw ConfigError(msg.str());
  }
}

Acquisition resolve_geometry(const Geometry& geom, const ModelGrid& model) {
  if (geom.nt < 1) throw ConfigError("nt must be >= 1");
  const auto& d = model.dims();
  check_cfl(geom.dt, d.dx, d.dz, model.max_velocity());
  Acquisition acq;
  acq.dims = d;
  acq.time = geom.time();
  acq.f_peak = geom.f_peak;
  for (const auto& s : geom.sources) acq.sources.push_back(snap_to_grid(d, s));
  for (const auto& r : geom.receivers) acq.receivers.push_back(snap_to_grid(d, r));
  return acq;
}

// ---------------------------------------------------------------------------

ModelGrid build_layered_1d(std::span<const double> depths, std::span<const double> velocities,
                           const GridDims& dims) {
  dims.validate();
  if (depths.size() != velocities.size() || depths.empty()) {
    throw ConfigError("layer depths and velocities must have the same, nonzero length");
  }
  for (std::size_t i = 1; i < depths.size(); ++i) {
    if (!(depths[i] > depths[i - 1])) throw ConfigError("layer depths must be strictly increasing");
  }
  std::vector<double> v(dims.size());
  for (int iz = 0; iz < dims.nz; ++iz) {
    const double z = (iz - dims.nb) * dims.dz;
    std::size_t layer = 0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
      if (depths[i] <= z + 1e-9 * dims.dz) layer = i;
    }
    for (int ix = 0; ix < dims.nx; ++ix) v[dims.index(iz, ix)] = velocities[layer];
  }
  return ModelGrid::from_velocity(dims, v);
}

ModelGrid perturb_model(const ModelGrid& m_true, double eps) {
  if (!(eps > -1.0) || !std::isfinite(eps)) throw ConfigError("perturbation eps <= -1 gives non-positive model");
  if (std::abs(eps) > 0.5) {
    std::cerr << "warning: perturbation eps=" << eps << " outside [-0.5, 0.5]\n";
  }
  if (eps == 0.0) return m_true;
  std::vector<double> m(m_true.squared_slowness().begin(), m_true.squared_slowness().end());
  for (auto& v : m) v *= (1.0 + eps);
  return m_true.with_squared_slowness(std::move(m));
}

// ---------------------------------------------------------------------------

fs::path bin_path(const fs::path& p) {
  if (p.extension() == ".bin") return p;
  if (p.extension() == ".meta") return fs::path(p).replace_extension(".bin");
  return fs::path(p.string() + ".bin");
}

fs::path meta_path(const fs::path& p) { return fs::path(bin_path(p)).replace_extension(".meta"); }

void write_f32(const fs::path& path, std::span<const double> values) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t w;
    std::memcpy(&w, &f, sizeof w);
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap32(w);
    words[i] = w;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (!out) throw ConfigError("write failed: " + path.string());
}

std::vector<double> read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes % 4 != 0) throw ConfigError("payload size of " + path.string() + " is not a multiple of 4");
  std::vector<std::uint32_t> words(bytes / 4);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
  std::vector<double> out(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::uint32_t w = words[i];
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap32(w);
    float f;
    std::memcpy(&f, &w, sizeof f);
    out[i] = f;
  }
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ",";
    s += fmt_double(values[i]);
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string dims_meta(const GridDims& d) {
  return "nz=" + std::to_string(d.nz) + "\nnx=" + std::to_string(d.nx) + "\ndz=" + fmt_double(d.dz) +
         "\ndx=" + fmt_double(d.dx) + "\nnb=" + std::to_string(d.nb) + "\n";
}

GridDims dims_from_meta(const KeyValueConfig& meta) {
  GridDims d;
  d.nz = static_cast<int>(meta.get_int("nz"));
  d.nx = static_cast<int>(meta.get_int("nx"));
  d.dz = meta.get_double("dz");
  d.dx = meta.get_double("dx");
  d.nb = static_cast<int>(meta.get_int_or("nb", 0));
  d.validate();
  return d;
}

KeyValueConfig load_meta(const fs::path& path) {
  const auto mp = meta_path(path);
  if (!fs::exists(mp)) throw ConfigError("missing header file " + mp.string());
  if (!fs::exists(bin_path(path))) throw ConfigError("missing data file " + bin_path(path).string());
  return KeyValueConfig::load(mp);
}

}  // namespace

void save_grid(const fs::path& path, const GridDims& dims, std::span<const double> values) {
  if (values.size() != dims.size()) throw ConfigError("grid payload size mismatch");
  write_f32(bin_path(path), values);
  write_text(meta_path(path), dims_meta(dims));
}

std::vector<double> load_grid(const fs::path& path, GridDims* dims_out) {
  const auto meta = load_meta(path);
  const GridDims d = dims_from_meta(meta);
  auto values = read_f32(bin_path(path));
  if (values.size() != d.size()) {
    throw ConfigError("dimension mismatch: header says " + std::to_string(d.size()) +
                      " samples, payload has " + std::to_string(values.size()));
  }
  if (dims_out) *dims_out = d;
  return values;
}

ModelGrid load_model(const fs::path& path) {
  GridDims d;
  const auto v = load_grid(path, &d);
  return ModelGrid::from_velocity(d, v);
}

void save_model(const ModelGrid& model, const fs::path& path) {
  save_grid(path, model.dims(), model.velocity());
}

void save_gather(const ShotGather& gather, const Geometry& geom, const fs::path& path) {
  if (static_cast<int>(geom.receivers.size()) != gather.nr()) {
    throw ConfigError("gather receiver count does not match geometry");
  }
  std::vector<double> trace_major(gather.values().size());
  for (int r = 0; r < gather.nr(); ++r)
    for (int t = 0; t < gather.nt(); ++t) trace_major[static_cast<std::size_t>(r) * gather.nt() + t] = gather.at(t, r);
  write_f32(bin_path(path), trace_major);
  std::vector<double> rx, rz;
  for (const auto& p : geom.receivers) {
    rx.push_back(p.x);
    rz.push_back(p.z);
  }
  write_text(meta_path(path), "shot_index=" + std::to_string(gather.shot_index()) +
                                  "\nnt=" + std::to_string(gather.nt()) + "\ndt=" + fmt_double(geom.dt) +
                                  "\nnr=" + std::to_string(gather.nr()) + "\nreceivers_x=" + join(rx) +
                                  "\nreceivers_z=" + join(rz) + "\n");
}

ShotGather load_gather(const fs::path& path) {
  const auto meta = load_meta(path);
  const int nt = static_cast<int>(meta.get_int("nt"));
  const int nr = static_cast<int>(meta.get_int("nr"));
  const int shot = static_cast<int>(meta.get_int_or("shot_index", 0));
  if (nt < 1 || nr < 1) throw ConfigError("gather header needs nt, nr >= 1");
  const auto values = read_f32(bin_path(path));
  if (values.size() != static_cast<std::size_t>(nt) * nr) throw ConfigError("dimension mismatch in gather payload");
  ShotGather g(shot, nt, nr);
  for (int r = 0; r < nr; ++r)
    for (int t = 0; t < nt; ++t) g.at(t, r) = values[static_cast<std::size_t>(r) * nt + t];
  for (double v : g.values())
    if (!std::isfinite(v)) throw ConfigError("non-finite sample in gather");
  return g;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Point> parse_points(const KeyValueConfig& cfg, const std::string& single, const std::string& line) {
  std::vector<Point> pts;
  for (const auto& s : cfg.get_all(single)) {
    const auto v = parse_number_list(s);
    if (v.size() != 2) throw ConfigError("'" + single + "' expects 'x z'");
    pts.push_back({v[0], v[1]});
  }
  for (const auto& s : cfg.get_all(line)) {
    const auto v = parse_number_list(s);
    if (v.size() != 5 || v[4] < 1 || v[4] != std::floor(v[4])) {
      throw ConfigError("'" + line + "' expects 'x0 z0 x1 z1 count'");
    }
    const int n = static_cast<int>(v[4]);
    for (int i = 0; i < n; ++i) {
      const double a = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
      pts.push_back({v[0] + a * (v[2] - v[0]), v[1] + a * (v[3] - v[1])});
    }
  }
  return pts;
}

}  // namespace

Geometry geometry_from_config(const KeyValueConfig& cfg) {
  Geometry g;
  g.nt = static_cast<int>(cfg.get_int("nt"));
  g.dt = cfg.get_double("dt");
  g.f_peak = cfg.get_double_or("f_peak", 10.0);
  g.sources = parse_points(cfg, "source", "source_line");
  g.receivers = parse_points(cfg, "receiver", "receiver_line");
  if (g.nt < 1) throw ConfigError("nt must be >= 1");
  if (g.sources.empty()) throw ConfigError("geometry has no sources");
  if (g.receivers.empty()) throw ConfigError("geometry has no receivers");
  return g;
}

}  // namespace xfwi
