#include <gtest/gtest.h>

#include <cstdlib>

#include "support.hpp"
#include "xfwi/error.hpp"
#include "xfwi/wavefield_store.hpp"

using namespace xfwi;

namespace {

Movie random_movie(MovieShape shape, std::uint64_t seed) {
  Movie m(shape);
  std::mt19937_64 rng(seed);
  fill_random(m, rng);
  return m;
}

void write_all(StoredWavefield& w, const Movie& m) {
  for (int n = 0; n < m.nt(); ++n) w.write_step(n, m.slice(n));
}

}  // namespace

TEST(WavefieldStore, MemoryReadsReturnWhatWasWritten) {
  auto store = WavefieldStore::in_memory(1 << 20);
  const Movie m = random_movie({9, 4, 5}, 1);
  auto w = store->allocate(m.shape());
  write_all(w, m);
  std::vector<double> buf(m.slice_size());
  for (int n = m.nt() - 1; n >= 0; --n) {
    w.read_step(n, buf);
    EXPECT_TRUE(std::equal(buf.begin(), buf.end(), m.slice(n).begin()));
  }
}

TEST(WavefieldStore, DiskAndMemoryBackendsAreBitIdentical) {
  const auto dir = xfwi::testing::scratch_dir("store");
  auto mem = WavefieldStore::in_memory();
  auto disk = WavefieldStore::disk(dir);
  const Movie m = random_movie({13, 6, 7}, 2);
  auto a = mem->allocate(m.shape());
  auto b = disk->allocate(m.shape());
  write_all(a, m);
  write_all(b, m);
  const Movie la = a.load(), lb = b.load();
  ASSERT_EQ(la.values().size(), lb.values().size());
  EXPECT_EQ(std::memcmp(la.values().data(), lb.values().data(), la.bytes()), 0);
  EXPECT_TRUE(std::equal(la.values().begin(), la.values().end(), m.values().begin()));
  EXPECT_EQ(disk->bytes_in_use(), 0u);
}

TEST(WavefieldStore, DiskLayoutIsOneFilePerStep) {
  const auto dir = xfwi::testing::scratch_dir("store");
  auto disk = WavefieldStore::disk(dir);
  const Movie m = random_movie({5, 3, 3}, 3);
  std::filesystem::path wdir;
  {
    auto w = disk->allocate(m.shape());
    write_all(w, m);
    wdir = w.directory();
    EXPECT_TRUE(std::filesystem::exists(wdir / "step_000004.bin"));
    int files = 0;
    for (const auto& e : std::filesystem::directory_iterator(wdir)) files += e.is_regular_file();
    EXPECT_EQ(files, 5);
  }
  EXPECT_FALSE(std::filesystem::exists(wdir));
}

TEST(WavefieldStore, MemoryBudgetIsNeverExceeded) {
  const MovieShape shape{10, 10, 10};
  const std::size_t one = shape.size() * sizeof(double);
  auto store = WavefieldStore::in_memory(2 * one + one / 2);
  auto a = store->allocate(shape);
  {
    auto b = store->allocate(shape);
    EXPECT_THROW(store->allocate(shape), BudgetExceeded);
    EXPECT_LE(store->bytes_in_use(), store->budget());
  }
  EXPECT_EQ(store->bytes_in_use(), one);
  EXPECT_NO_THROW(store->allocate(shape));
  EXPECT_LE(store->peak_bytes(), store->budget());
}

TEST(WavefieldStore, ReservationsReleaseOnDestruction) {
  auto store = WavefieldStore::in_memory(1000);
  {
    auto r = store->reserve(600);
    EXPECT_THROW(store->reserve(600), BudgetExceeded);
    Reservation moved = std::move(r);
    EXPECT_EQ(store->bytes_in_use(), 600u);
  }
  EXPECT_EQ(store->bytes_in_use(), 0u);
}

TEST(WavefieldStore, SpecParsingAndEnvironmentBudget) {
  EXPECT_EQ(WavefieldStore::from_spec("mem")->backend(), StoreBackend::Memory);
  const auto dir = xfwi::testing::scratch_dir("store");
  EXPECT_EQ(WavefieldStore::from_spec("disk:" + dir.string())->backend(), StoreBackend::Disk);
  EXPECT_THROW(WavefieldStore::from_spec("tape"), ConfigError);
  ::setenv("XFWI_STORE_BUDGET_BYTES", "12345", 1);
  EXPECT_EQ(WavefieldStore::default_budget(), 12345u);
  ::unsetenv("XFWI_STORE_BUDGET_BYTES");
  EXPECT_EQ(WavefieldStore::default_budget(), WavefieldStore::kDefaultBudgetBytes);
}
