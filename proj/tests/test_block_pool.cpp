#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mepic/block_pool.hpp"

using namespace mepic;

namespace {

ChunkId test_chunk_id(std::uint64_t n) { return ChunkId{n, ~n}; }

}  // namespace

TEST_CASE("allocate hands out lowest-index free blocks") {
  BlockPool pool(PoolConfig{8, 16});
  const auto blocks = pool.allocate(3);
  CHECK(blocks == std::vector<BlockId>{0, 1, 2});
  CHECK(pool.free_count() == 5);
  for (BlockId b : blocks) {
    CHECK(pool.refcount(b) == 1);
    CHECK(pool.owner(b).kind == OwnerKind::Reserved);
  }
}

TEST_CASE("allocate fails when the pool is exhausted") {
  BlockPool pool(PoolConfig{8, 16});
  pool.allocate(8);
  CHECK_THROWS_AS(pool.allocate(1), Error);
  try {
    pool.allocate(1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientBlocks);
  }
}

TEST_CASE("allocate(0) is an identity") {
  BlockPool pool(PoolConfig{8, 16});
  CHECK(pool.allocate(0).empty());
  CHECK(pool.free_count() == 8);
  CHECK(pool.stats().free == 8);
}

TEST_CASE("incref and decref move the refcount, free blocks are rejected") {
  BlockPool pool(PoolConfig{4, 16});
  const BlockId b = pool.allocate(1)[0];
  CHECK(pool.incref(b) == 2);
  CHECK(pool.decref(b) == 1);
  CHECK(pool.decref(b) == 0);
  CHECK_THROWS_AS(pool.decref(b), Error);

  // Zero-ref chunk-owned blocks become referencable again.
  pool.tag_chunk(b, test_chunk_id(1), 0);
  CHECK(pool.incref(b) == 1);
  pool.decref(b);

  const BlockId free_block = 3;
  CHECK_THROWS_AS(pool.incref(free_block), Error);
  try {
    pool.incref(free_block);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BlockIsFree);
  }
}

TEST_CASE("decref to zero does not free; reclaim does") {
  BlockPool pool(PoolConfig{4, 16});
  const BlockId b = pool.allocate(1)[0];
  pool.tag_chunk(b, test_chunk_id(2), 0);
  CHECK(pool.decref(b) == 0);
  CHECK(pool.owner(b).kind == OwnerKind::Chunk);  // still resident, evictable
  CHECK(pool.stats().evictable == 1);

  pool.reclaim(b);
  CHECK(pool.owner(b).kind == OwnerKind::Free);
  CHECK(pool.free_count() == 4);
}

TEST_CASE("reclaim of a referenced block is refused") {
  BlockPool pool(PoolConfig{4, 16});
  const BlockId b = pool.allocate(1)[0];
  CHECK_THROWS_AS(pool.reclaim(b), Error);
  try {
    pool.reclaim(b);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BlockBusy);
  }
}

TEST_CASE("reclaimed block is reused first under the lowest-index policy") {
  BlockPool pool(PoolConfig{8, 16});
  const auto blocks = pool.allocate(3);  // 0,1,2
  pool.decref(blocks[1]);
  pool.reclaim(blocks[1]);
  // Free set oracle: {1,3,4,5,6,7}; the next allocation must return 1.
  CHECK(pool.allocate(1)[0] == blocks[1]);
}

TEST_CASE("stats buckets sum to capacity through a register/release cycle") {
  BlockPool pool(PoolConfig{8, 16});
  PoolStats s = pool.stats();
  CHECK(s.free == 8);
  CHECK(s.prefix_owned == 0);
  CHECK(s.chunk_owned == 0);
  CHECK(s.evictable == 0);

  const auto blocks = pool.allocate(3);
  for (std::uint32_t i = 0; i < 3; ++i) pool.tag_chunk(blocks[i], test_chunk_id(3), i);
  for (BlockId b : blocks) pool.decref(b);  // release to zero: evictable cache

  s = pool.stats();
  CHECK(s.free == 5);
  CHECK(s.prefix_owned == 0);
  CHECK(s.chunk_owned == 3);
  CHECK(s.evictable == 3);
  CHECK(s.total() == 8);
}

TEST_CASE("ownership transitions require zero references") {
  BlockPool pool(PoolConfig{4, 16});
  const BlockId b = pool.allocate(1)[0];
  pool.tag_chunk(b, test_chunk_id(4), 0);  // Reserved -> Chunk at rc 1 is the allocation handshake
  CHECK_THROWS_AS(pool.tag_prefix(b, PrefixKey{9, 9}), Error);  // live chunk cannot be retagged
  pool.decref(b);
  pool.tag_prefix(b, PrefixKey{9, 9});  // zero-ref retag is allowed
  CHECK(pool.owner(b).kind == OwnerKind::Prefix);
}

TEST_CASE("randomized operation sequences preserve conservation and the refcount ledger") {
  std::mt19937_64 rng(20240917);
  for (int round = 0; round < 200; ++round) {
    BlockPool pool(PoolConfig{16, 16});
    std::vector<BlockId> live;
    std::vector<std::int64_t> ledger(16, -1);  // expected refcount, -1 = free

    for (int step = 0; step < 500; ++step) {
      const int op = static_cast<int>(rng() % 5);
      switch (op) {
        case 0: {
          const std::uint32_t n = static_cast<std::uint32_t>(rng() % 4);
          if (pool.free_count() >= n) {
            for (BlockId b : pool.allocate(n)) {
              live.push_back(b);
              ledger[b] = 1;
            }
          }
          break;
        }
        case 1:
        case 2: {
          if (live.empty()) break;
          const BlockId b = live[rng() % live.size()];
          if (op == 1) {
            pool.incref(b);
            ++ledger[b];
          } else if (ledger[b] > 0) {
            pool.decref(b);
            --ledger[b];
          }
          break;
        }
        case 3: {
          if (live.empty()) break;
          const std::size_t pos = rng() % live.size();
          const BlockId b = live[pos];
          if (ledger[b] == 0) {
            pool.reclaim(b);
            ledger[b] = -1;
            live.erase(live.begin() + static_cast<std::ptrdiff_t>(pos));
          }
          break;
        }
        case 4: {
          if (live.empty()) break;
          const BlockId b = live[rng() % live.size()];
          if (ledger[b] == 0) {
            if (rng() % 2) pool.tag_chunk(b, test_chunk_id(rng()), 0);
            else pool.tag_prefix(b, PrefixKey{rng(), rng()});
          }
          break;
        }
      }
      std::string why;
      REQUIRE_MESSAGE(pool.check_consistency(&why), why);
      for (BlockId b = 0; b < 16; ++b) {
        if (ledger[b] >= 0) CHECK(pool.refcount(b) == static_cast<std::uint32_t>(ledger[b]));
        else CHECK(pool.owner(b).kind == OwnerKind::Free);
      }
    }
  }
}

TEST_CASE("identical operation sequences yield identical block ids") {
  auto run = [] {
    BlockPool pool(PoolConfig{16, 16});
    std::vector<BlockId> trail;
    auto a = pool.allocate(5);
    trail.insert(trail.end(), a.begin(), a.end());
    pool.decref(a[2]);
    pool.reclaim(a[2]);
    pool.decref(a[0]);
    pool.reclaim(a[0]);
    auto b = pool.allocate(3);
    trail.insert(trail.end(), b.begin(), b.end());
    return trail;
  };
  CHECK(run() == run());
}
