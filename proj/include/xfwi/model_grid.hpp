#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xfwi/config.hpp"
#include "xfwi/field.hpp"

namespace xfwi {

/// Grid counts and spacing. nz, nx include the absorbing strip of nb nodes on
/// every side; physical coordinates start at node (nb, nb).
struct GridDims {
  int nz = 0;
  int nx = 0;
  double dz = 0.0;
  double dx = 0.0;
  int nb = 0;

  void validate() const;
  std::size_t size() const { return static_cast<std::size_t>(nz) * nx; }
  std::size_t index(int iz, int ix) const { return static_cast<std::size_t>(ix) * nz + iz; }
  /// Physical (non-absorbing) extent in meters.
  double physical_depth() const { return (nz - 2 * nb - 1) * dz; }
  double physical_width() const { return (nx - 2 * nb - 1) * dx; }
  bool in_absorbing_zone(int iz, int ix) const {
    return iz < nb || ix < nb || iz >= nz - nb || ix >= nx - nb;
  }
  bool operator==(const GridDims&) const = default;
};

/// Squared slowness m = 1/v^2 on a regular 2D grid. Immutable; every
/// constructor validates m > 0 and finite.
class ModelGrid {
 public:
  ModelGrid(GridDims dims, std::vector<double> squared_slowness);

  static ModelGrid from_velocity(GridDims dims, std::span<const double> velocity);
  static ModelGrid constant_velocity(GridDims dims, double velocity);

  const GridDims& dims() const { return dims_; }
  int nz() const { return dims_.nz; }
  int nx() const { return dims_.nx; }
  std::span<const double> squared_slowness() const { return m_; }
  double m(int iz, int ix) const { return m_[dims_.index(iz, ix)]; }
  std::vector<double> velocity() const;
  double max_velocity() const;
  double min_velocity() const;

  ModelGrid with_squared_slowness(std::vector<double> m) const { return {dims_, std::move(m)}; }

 private:
  GridDims dims_;
  std::vector<double> m_;
};

struct Point {
  double x = 0.0;
  double z = 0.0;
};

struct GridNode {
  int iz = 0;
  int ix = 0;
  bool operator==(const GridNode&) const = default;
};

struct TimeAxis {
  int nt = 0;
  double dt = 0.0;
};

/// Acquisition in physical coordinates (meters, origin at the first
/// non-absorbing node). Every shot records on the same receiver spread.
struct Geometry {
  std::vector<Point> sources;
  std::vector<Point> receivers;
  int nt = 0;
  double dt = 0.0;
  double f_peak = 0.0;

  TimeAxis time() const { return {nt, dt}; }
};

/// Geometry snapped to grid nodes for a particular model grid.
struct Acquisition {
  std::vector<GridNode> sources;
  std::vector<GridNode> receivers;
  TimeAxis time;
  double f_peak = 0.0;
  GridDims dims;

  int num_shots() const { return static_cast<int>(sources.size()); }
  int num_receivers() const { return static_cast<int>(receivers.size()); }
  MovieShape movie_shape() const { return {time.nt, dims.nz, dims.nx}; }
};

/// Nearest-node snapping; throws ConfigError outside the physical extent.
GridNode snap_to_grid(const GridDims& dims, Point p);
Point node_position(const GridDims& dims, GridNode node);

/// Snaps positions and checks nt >= 1 and the CFL bound for the model.
Acquisition resolve_geometry(const Geometry& geom, const ModelGrid& model);

/// Stability limit of the 2nd-order-time / 4th-order-space scheme:
/// v_max * dt * sqrt(1/dx^2 + 1/dz^2) <= sqrt(3)/2.
double cfl_number(double dt, double dx, double dz, double v_max);
double cfl_limit();
bool cfl_ok(double dt, double dx, double dz, double v_max);
void check_cfl(double dt, double dx, double dz, double v_max);

/// Receiver-sampled data for one shot. Time-major storage: value(t, r) at t*nr + r.
class ShotGather {
 public:
  ShotGather() = default;
  ShotGather(int shot_index, int nt, int nr)
      : shot_index_(shot_index), nt_(nt), nr_(nr), data_(static_cast<std::size_t>(nt) * nr, 0.0) {}

  int shot_index() const { return shot_index_; }
  int nt() const { return nt_; }
  int nr() const { return nr_; }
  double& at(int t, int r) { return data_[static_cast<std::size_t>(t) * nr_ + r]; }
  double at(int t, int r) const { return data_[static_cast<std::size_t>(t) * nr_ + r]; }
  std::span<double> step(int t) { return {data_.data() + static_cast<std::size_t>(t) * nr_, static_cast<std::size_t>(nr_)}; }
  std::span<const double> step(int t) const {
    return {data_.data() + static_cast<std::size_t>(t) * nr_, static_cast<std::size_t>(nr_)};
  }
  std::vector<double> trace(int r) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

 private:
  int shot_index_ = 0;
  int nt_ = 0;
  int nr_ = 0;
  std::vector<double> data_;
};

// --- model builders --------------------------------------------------------

/// Piecewise-constant layers extruded laterally. depths[i] is the top of layer
/// i in physical meters (strictly increasing); nodes above depths[0] and in the
/// absorbing strip inherit the nearest layer.
ModelGrid build_layered_1d(std::span<const double> depths, std::span<const double> velocities,
                           const GridDims& dims);

/// m0 = (1 + eps) m_true. |eps| > 0.5 is accepted with a warning on stderr.
ModelGrid perturb_model(const ModelGrid& m_true, double eps);

// --- files -----------------------------------------------------------------
// Binary payload: little-endian float32, z fastest. Sidecar "<name>.meta" holds
// key=value lines. Paths may be given with or without the .bin extension.

std::filesystem::path bin_path(const std::filesystem::path& p);
std::filesystem::path meta_path(const std::filesystem::path& p);

/// Model file holds velocity in m/s; meta keys nz, nx, dz, dx, nb.
ModelGrid load_model(const std::filesystem::path& path);
void save_model(const ModelGrid& model, const std::filesystem::path& path);

/// Generic 2D grid of values (gradients, snapshots) in the model layout.
void save_grid(const std::filesystem::path& path, const GridDims& dims, std::span<const double> values);
std::vector<double> load_grid(const std::filesystem::path& path, GridDims* dims = nullptr);

/// Gather payload is trace-major (time fastest); meta adds shot_index, nt, dt,
/// nr and receivers_x / receivers_z coordinate lists.
void save_gather(const ShotGather& gather, const Geometry& geom, const std::filesystem::path& path);
ShotGather load_gather(const std::filesystem::path& path);

void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path);

/// Geometry from key=value text: nt, dt, f_peak, repeatable `source = x z`,
/// `receiver = x z`, and `source_line` / `receiver_line = x0 z0 x1 z1 count`.
Geometry geometry_from_config(const KeyValueConfig& cfg);

}  // namespace xfwi
