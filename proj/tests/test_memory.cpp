#include <gtest/gtest.h>

#include <random>

#include "attacks.hpp"
#include "memory.hpp"
#include "profile.hpp"
#include "support/oracles.hpp"

using namespace transim;

namespace {

MemoryConfig small_config() {
  MemoryConfig c;
  c.l1 = {4, 2};
  c.l2 = {16, 4};
  return c;
}

}  // namespace

TEST(Cache, MatchesListLruOnRandomWorkload) {
  for (auto geom : {CacheGeometry{4, 2}, CacheGeometry{1, 4}, CacheGeometry{8, 1}, CacheGeometry{16, 8}}) {
    Cache cache(geom);
    oracle::LruCache ref(geom.sets, geom.ways);
    std::mt19937_64 rng(geom.sets * 31 + geom.ways);
    std::uniform_int_distribution<Addr> pick(0, 4 * geom.sets * geom.ways);
    for (int i = 0; i < 10000; ++i) {
      Addr a = pick(rng) * kLineSize + (i % 64);
      bool hit = cache.touch(a);
      if (!hit) cache.insert(a);
      ASSERT_EQ(hit, ref.access(a)) << "access " << i << " geometry " << geom.sets << "x" << geom.ways;
    }
  }
}

TEST(Cache, InsertReportsVictimInLruOrder) {
  Cache c({1, 2});
  EXPECT_FALSE(c.insert(0x000).has_value());
  EXPECT_FALSE(c.insert(0x040).has_value());
  EXPECT_TRUE(c.touch(0x000));
  auto victim = c.insert(0x080);
  ASSERT_TRUE(victim.has_value());
  EXPECT_EQ(*victim, 0x040u);
  EXPECT_TRUE(c.contains(0x000));
  EXPECT_TRUE(c.invalidate(0x000));
  EXPECT_FALSE(c.contains(0x000));
  EXPECT_FALSE(c.invalidate(0x000));
}

TEST(Cache, RejectsNonPowerOfTwoGeometry) {
  EXPECT_THROW(Cache({3, 2}), Error);
  EXPECT_THROW(Cache({4, 0}), Error);
}

TEST(MemorySystem, L1HitSequenceMatchesLruReference) {
  MemorySystem mem(small_config());
  oracle::LruCache ref(4, 2);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<Addr> pick(0, 40);
  for (int i = 0; i < 10000; ++i) {
    Addr a = 0x10000 + pick(rng) * kLineSize;
    auto r = mem.access(a, Privilege::User);
    ASSERT_EQ(r.level == Level::L1, ref.access(a)) << "access " << i;
  }
}

TEST(MemorySystem, LatenciesPerLevel) {
  MemorySystem mem(small_config());
  auto first = mem.access(0x1000, Privilege::User);
  EXPECT_EQ(first.level, Level::Dram);
  EXPECT_EQ(first.latency, 200);
  auto second = mem.access(0x1008, Privilege::User);
  EXPECT_EQ(second.level, Level::L1);
  EXPECT_EQ(second.latency, 4);
  mem.l1().invalidate(0x1000);
  auto third = mem.access(0x1000, Privilege::User);
  EXPECT_EQ(third.level, Level::L2);
  EXPECT_EQ(third.latency, 12);
}

TEST(MemorySystem, NonInclusiveL2KeepsLinesEvictedFromL1) {
  MemorySystem mem(small_config());
  // Three lines mapping to L1 set 0 overflow its two ways.
  for (Addr a : {0x0000, 0x0100, 0x0200}) mem.access(a, Privilege::User);
  EXPECT_EQ(mem.probe(0x0000), Level::L2);
  EXPECT_EQ(mem.probe(0x0200), Level::L1);
}

TEST(MemorySystem, PageFaultTouchesNoCacheState) {
  MemorySystem mem(small_config());
  mem.page_table().unmap(0x5000);
  auto r = mem.access(0x5000, Privilege::User);
  ASSERT_TRUE(r.fault.has_value());
  EXPECT_EQ(*r.fault, MemFault::PageFault);
  EXPECT_EQ(r.latency, 1000);
  EXPECT_EQ(mem.probe(0x5000), Level::Dram);
}

TEST(MemorySystem, PrivilegeFaultStillFills) {
  MemorySystem mem(small_config());
  mem.page_table().set_privileged(0x9000, true);
  mem.write(0x9000, 77);
  auto r = mem.access(0x9000, Privilege::User);
  ASSERT_TRUE(r.fault.has_value());
  EXPECT_EQ(*r.fault, MemFault::PrivilegeFault);
  EXPECT_EQ(r.value, 77);
  EXPECT_EQ(mem.probe(0x9000), Level::L1);
  EXPECT_TRUE(mem.access(0x9000, Privilege::Kernel).ok());
}

TEST(MemorySystem, FlushEvictsBothLevelsAndHonoursPrivilege) {
  MemorySystem mem(small_config());
  mem.access(0x3000, Privilege::User);
  mem.flush_line(0x3000, Privilege::User, false);
  EXPECT_EQ(mem.probe(0x3000), Level::Dram);
  mem.access(0x3000, Privilege::User);
  try {
    mem.flush_line(0x3000, Privilege::User, true);
    FAIL() << "user flush should be rejected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PrivilegedFlush);
  }
  EXPECT_EQ(mem.probe(0x3000), Level::L1);
  mem.flush_line(0x3000, Privilege::Kernel, true);
  EXPECT_EQ(mem.probe(0x3000), Level::Dram);
}

TEST(MemorySystem, SparseMemoryReadsZeroUntilWritten) {
  MemorySystem mem(small_config());
  EXPECT_EQ(mem.read(0xdead0), 0);
  mem.write(0xdead0, -5);
  EXPECT_EQ(mem.read(0xdead0), -5);
  EXPECT_EQ(mem.access(0xdead0, Privilege::User).value, -5);
}

TEST(CycleCounter, QuantizesToResolution) {
  CycleCounter c(8);
  EXPECT_EQ(c.read_at(0), 0);
  EXPECT_EQ(c.read_at(7), 0);
  EXPECT_EQ(c.read_at(8), 8);
  EXPECT_EQ(c.read_at(23), 16);
  c.advance(5);
  c.advance_to(3);
  EXPECT_EQ(c.current(), 5);
}

TEST(CycleCounter, NoiseStaysWithinAmplitudeAndIsSeeded) {
  CycleCounter a(1, 6, 42), b(1, 6, 42);
  int lo = 0, hi = 0;
  for (int i = 0; i < 5000; ++i) {
    Cycle x = a.measure(100);
    ASSERT_EQ(x, b.measure(100));
    ASSERT_GE(x, 94);
    ASSERT_LE(x, 106);
    lo += x == 94;
    hi += x == 106;
  }
  EXPECT_GT(lo, 0);
  EXPECT_GT(hi, 0);
}

TEST(Latencies, MustBeStrictlyIncreasing) {
  Latencies l;
  l.l2 = 3;
  EXPECT_THROW(l.check(), Error);
}

namespace {

// Target line cached in both levels, then the profile's eviction pattern.
bool pattern_evicts(const CpuProfile& p, Addr target, std::uint64_t seed) {
  MemorySystem mem(p.memory_config(seed));
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 2000; ++i) mem.access(0x200000 + (rng() % 4096) * kLineSize, Privilege::User);
  mem.access(target, Privilege::User);
  EXPECT_EQ(mem.probe(target), Level::L1);
  mem.evict_with_pattern({layout::kEvictionBase, layout::kEvictionBytes, *p.eviction, target});
  return mem.probe(target) == Level::Dram;
}

bool sweep_evicts(const CpuProfile& p, Addr target) {
  MemorySystem mem(p.memory_config(1));
  mem.access(target, Privilege::User);
  mem.sweep_evict(3 * p.l2.capacity());
  return mem.probe(target) == Level::Dram;
}

}  // namespace

TEST(Eviction, TablePatternsEvictOnTheirProfiles) {
  for (const char* name : {"cortex_a53", "cortex_a9", "cortex_a72"}) {
    const auto& p = builtin_profile(name);
    ASSERT_TRUE(p.eviction.has_value()) << name;
    for (Addr target : {Addr{0x30040}, Addr{0x123440}, Addr{0x7fffc0}}) {
      EXPECT_TRUE(sweep_evicts(p, target)) << name;
      EXPECT_TRUE(pattern_evicts(p, target, target)) << name << " target " << target;
    }
  }
}

TEST(Eviction, TableParametersAreTheOnesGiven) {
  EXPECT_EQ(*builtin_profile("cortex_a53").eviction, (EvictionParams{21, 2, 5}));
  EXPECT_EQ(*builtin_profile("cortex_a9").eviction, (EvictionParams{10, 3, 6}));
  EXPECT_EQ(*builtin_profile("cortex_a72").eviction, (EvictionParams{7, 1, 16}));
  EXPECT_FALSE(builtin_profile("cortex_a8").eviction.has_value());
  EXPECT_EQ(builtin_profile("cortex_a8").eviction_method(), EvictionMethod::Sweep);
  EXPECT_TRUE(sweep_evicts(builtin_profile("cortex_a8"), 0x30040));
}

TEST(Eviction, TooFewAccessesLeaveTheTargetCached) {
  const auto& p = builtin_profile("cortex_a53");
  MemorySystem mem(p.memory_config(1));
  mem.access(0x30040, Privilege::User);
  mem.evict_with_pattern({layout::kEvictionBase, layout::kEvictionBytes, {1, 1, 1}, 0x30040});
  EXPECT_NE(mem.probe(0x30040), Level::Dram);
}

TEST(Eviction, TraceCsvAndPreconditions) {
  const auto& p = builtin_profile("cortex_a72");
  MemorySystem mem(p.memory_config(1));
  auto trace = mem.evict_with_pattern({layout::kEvictionBase, layout::kEvictionBytes, *p.eviction, 0x30040});
  EXPECT_EQ(trace.steps.size(), 7u * 16u);
  auto csv = trace.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,access_index,address,level");

  try {
    mem.evict_with_pattern({layout::kEvictionBase, 4096, *p.eviction, 0x30040});
    FAIL() << "region too small should be rejected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Precondition);
  }
  try {
    mem.sweep_evict(p.l2.capacity());
    FAIL() << "short sweep should be rejected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Precondition);
  }
}
