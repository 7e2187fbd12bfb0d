#include "xfwi/wavefield_store.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "xfwi/error.hpp"

namespace xfwi {

namespace fs = std::filesystem;

Reservation::Reservation(Reservation&& o) noexcept : store_(std::move(o.store_)), bytes_(o.bytes_) {
  o.bytes_ = 0;
}

Reservation& Reservation::operator=(Reservation&& o) noexcept {
  if (this != &o) {
    release();
    store_ = std::move(o.store_);
    bytes_ = o.bytes_;
    o.bytes_ = 0;
  }
  return *this;
}

Reservation::~Reservation() { release(); }

void Reservation::release() {
  if (store_ && bytes_ > 0) store_->release(bytes_);
  store_.reset();
  bytes_ = 0;
}

// ---------------------------------------------------------------------------

StoredWavefield::StoredWavefield(MovieShape shape, StoreBackend backend, fs::path dir, Reservation res)
    : shape_(shape), backend_(backend), dir_(std::move(dir)), reservation_(std::move(res)) {
  if (backend_ == StoreBackend::Memory) {
    frames_.assign(shape_.size(), 0.0);
  } else {
    fs::create_directories(dir_);
    owns_dir_ = true;
  }
}

StoredWavefield::StoredWavefield(StoredWavefield&& o) noexcept
    : shape_(o.shape_),
      backend_(o.backend_),
      frames_(std::move(o.frames_)),
      dir_(std::move(o.dir_)),
      reservation_(std::move(o.reservation_)),
      owns_dir_(o.owns_dir_) {
  o.owns_dir_ = false;
}

StoredWavefield::~StoredWavefield() {
  if (owns_dir_ && !dir_.empty()) {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
}

fs::path StoredWavefield::step_file(int n) const {
  char name[32];
  std::snprintf(name, sizeof name, "step_%06d.bin", n);
  return dir_ / name;
}

void StoredWavefield::write_step(int n, std::span<const double> slice) {
  if (n < 0 || n >= shape_.nt || slice.size() != shape_.slice_size()) {
    throw std::out_of_range("StoredWavefield::write_step: bad step or slice size");
  }
  if (backend_ == StoreBackend::Memory) {
    std::copy(slice.begin(), slice.end(), frames_.begin() + static_cast<std::ptrdiff_t>(n * shape_.slice_size()));
    return;
  }
  std::ofstream out(step_file(n), std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(slice.data()), static_cast<std::streamsize>(slice.size_bytes()));
  if (!out) throw ConfigError("wavefield spill write failed: " + step_file(n).string());
}

void StoredWavefield::read_step(int n, std::span<double> slice) const {
  if (n < 0 || n >= shape_.nt || slice.size() != shape_.slice_size()) {
    throw std::out_of_range("StoredWavefield::read_step: bad step or slice size");
  }
  if (backend_ == StoreBackend::Memory) {
    const auto* src = frames_.data() + n * shape_.slice_size();
    std::copy(src, src + slice.size(), slice.begin());
    return;
  }
  std::ifstream in(step_file(n), std::ios::binary);
  in.read(reinterpret_cast<char*>(slice.data()), static_cast<std::streamsize>(slice.size_bytes()));
  if (!in) throw ConfigError("wavefield spill read failed: " + step_file(n).string());
}

Movie StoredWavefield::load() const {
  Movie m(shape_);
  for (int n = 0; n < shape_.nt; ++n) read_step(n, m.slice(n));
  return m;
}

// ---------------------------------------------------------------------------

std::size_t WavefieldStore::default_budget() {
  if (const char* env = std::getenv("XFWI_STORE_BUDGET_BYTES")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("XFWI_STORE_BUDGET_BYTES must be an integer byte count");
    return static_cast<std::size_t>(v);
  }
  return kDefaultBudgetBytes;
}

std::shared_ptr<WavefieldStore> WavefieldStore::in_memory(std::optional<std::size_t> budget) {
  return std::shared_ptr<WavefieldStore>(
      new WavefieldStore(StoreBackend::Memory, budget.value_or(default_budget()), {}));
}

std::shared_ptr<WavefieldStore> WavefieldStore::disk(fs::path dir, std::optional<std::size_t> budget) {
  fs::create_directories(dir);
  return std::shared_ptr<WavefieldStore>(
      new WavefieldStore(StoreBackend::Disk, budget.value_or(default_budget()), std::move(dir)));
}

std::shared_ptr<WavefieldStore> WavefieldStore::from_spec(const std::string& spec) {
  if (spec == "mem") return in_memory();
  if (spec.rfind("disk:", 0) == 0 && spec.size() > 5) return disk(spec.substr(5));
  throw ConfigError("store must be 'mem' or 'disk:<path>', got '" + spec + "'");
}

std::size_t WavefieldStore::bytes_in_use() const {
  std::lock_guard lock(mutex_);
  return in_use_;
}

std::size_t WavefieldStore::peak_bytes() const {
  std::lock_guard lock(mutex_);
  return peak_;
}

Reservation WavefieldStore::reserve(std::size_t bytes) {
  {
    std::lock_guard lock(mutex_);
    if (bytes > budget_ - std::min(budget_, in_use_) ) {
      throw BudgetExceeded("wavefield store budget exceeded: requested " + std::to_string(bytes) +
                           " bytes with " + std::to_string(in_use_) + " of " + std::to_string(budget_) +
                           " in use");
    }
    in_use_ += bytes;
    peak_ = std::max(peak_, in_use_);
  }
  return Reservation(shared_from_this(), bytes);
}

void WavefieldStore::release(std::size_t bytes) {
  std::lock_guard lock(mutex_);
  in_use_ -= std::min(in_use_, bytes);
}

StoredWavefield WavefieldStore::allocate(MovieShape shape) {
  if (backend_ == StoreBackend::Memory) {
    auto res = reserve(shape.size() * sizeof(double));
    return StoredWavefield(shape, backend_, {}, std::move(res));
  }
  std::size_t id;
  {
    std::lock_guard lock(mutex_);
    id = next_id_++;
  }
  return StoredWavefield(shape, backend_, dir_ / ("wavefield_" + std::to_string(id)), Reservation{});
}

}  // namespace xfwi
