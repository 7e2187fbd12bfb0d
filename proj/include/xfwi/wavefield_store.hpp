#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xfwi/field.hpp"

namespace xfwi {

enum class StoreBackend { Memory, Disk };

class WavefieldStore;

/// Bytes held against a store's budget; released on destruction.
class Reservation {
 public:
  Reservation() = default;
  Reservation(std::shared_ptr<WavefieldStore> store, std::size_t bytes)
      : store_(std::move(store)), bytes_(bytes) {}
  Reservation(Reservation&& o) noexcept;
  Reservation& operator=(Reservation&& o) noexcept;
  Reservation(const Reservation&) = delete;
  Reservation& operator=(const Reservation&) = delete;
  ~Reservation();

  std::size_t bytes() const { return bytes_; }

 private:
  void release();
  std::shared_ptr<WavefieldStore> store_;
  std::size_t bytes_ = 0;
};

/// One space-time wavefield held by a store. Frames are written once during
/// time stepping and read back (in any order) afterwards.
class StoredWavefield {
 public:
  StoredWavefield(StoredWavefield&& o) noexcept;
  StoredWavefield& operator=(StoredWavefield&&) = delete;
  StoredWavefield(const StoredWavefield&) = delete;
  ~StoredWavefield();

  const MovieShape& shape() const { return shape_; }
  void write_step(int n, std::span<const double> slice);
  void read_step(int n, std::span<double> slice) const;
  Movie load() const;
  /// Disk backend only: the directory holding step_XXXXXX.bin files.
  const std::filesystem::path& directory() const { return dir_; }

 private:
  friend class WavefieldStore;
  StoredWavefield(MovieShape shape, StoreBackend backend, std::filesystem::path dir, Reservation res);
  std::filesystem::path step_file(int n) const;

  MovieShape shape_;
  StoreBackend backend_ = StoreBackend::Memory;
  std::vector<double> frames_;
  std::filesystem::path dir_;
  Reservation reservation_;
  bool owns_dir_ = false;
};

/// Holds full wavefield movies either in memory under a byte budget, or spilled
/// to disk one file per time step. The in-memory budget is also the pool that
/// CG work vectors are reserved against.
class WavefieldStore : public std::enable_shared_from_this<WavefieldStore> {
 public:
  static constexpr std::size_t kDefaultBudgetBytes = std::size_t{2} << 30;

  /// XFWI_STORE_BUDGET_BYTES when set, otherwise 2 GiB.
  static std::size_t default_budget();

  static std::shared_ptr<WavefieldStore> in_memory(std::optional<std::size_t> budget = std::nullopt);
  static std::shared_ptr<WavefieldStore> disk(std::filesystem::path dir,
                                              std::optional<std::size_t> budget = std::nullopt);
  /// "mem" or "disk:<path>".
  static std::shared_ptr<WavefieldStore> from_spec(const std::string& spec);

  StoreBackend backend() const { return backend_; }
  std::size_t budget() const { return budget_; }
  std::size_t bytes_in_use() const;
  std::size_t peak_bytes() const;

  /// Throws BudgetExceeded when the request does not fit.
  Reservation reserve(std::size_t bytes);
  StoredWavefield allocate(MovieShape shape);

 private:
  friend class Reservation;
  WavefieldStore(StoreBackend backend, std::size_t budget, std::filesystem::path dir)
      : backend_(backend), budget_(budget), dir_(std::move(dir)) {}
  void release(std::size_t bytes);

  StoreBackend backend_;
  std::size_t budget_;
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  std::size_t in_use_ = 0;
  std::size_t peak_ = 0;
  std::size_t next_id_ = 0;
};

}  // namespace xfwi
