#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "mepic/errors.hpp"
#include "mepic/types.hpp"

namespace mepic {

struct PageGeometry {
  std::uint32_t block_size = 16;
  std::uint32_t d_head = 64;

  std::size_t floats_per_page() const {
    return static_cast<std::size_t>(block_size) * d_head;
  }
};

// One KV page: block_size slots of d_head key and value vectors plus a
// validity mask. PAD slots are zero and masked out of attention.
struct KvPage {
  std::vector<float> keys;            // block_size x d_head, row per slot
  std::vector<float> values;          // same shape
  std::vector<std::uint8_t> valid;    // per slot, 0 = PAD / unwritten

  bool operator==(const KvPage&) const = default;
};

// Payload storage for pool blocks. The simulator runs metadata-only; the
// numeric path attaches one of these to materialize actual KV bytes.
class PageStore {
 public:
  explicit PageStore(PageGeometry geom) : geom_(geom) {}

  const PageGeometry& geometry() const { return geom_; }

  KvPage& ensure(BlockId b) {
    auto it = pages_.find(b);
    if (it == pages_.end()) {
      KvPage page;
      page.keys.assign(geom_.floats_per_page(), 0.0f);
      page.values.assign(geom_.floats_per_page(), 0.0f);
      page.valid.assign(geom_.block_size, 0);
      it = pages_.emplace(b, std::move(page)).first;
    }
    return it->second;
  }

  const KvPage* find(BlockId b) const {
    auto it = pages_.find(b);
    return it == pages_.end() ? nullptr : &it->second;
  }

  void erase(BlockId b) { pages_.erase(b); }
  std::size_t size() const { return pages_.size(); }

 private:
  PageGeometry geom_;
  std::map<BlockId, KvPage> pages_;
};

}  // namespace mepic
