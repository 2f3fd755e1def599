#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "expertlens/error.hpp"
#include "expertlens/rng.hpp"

namespace expertlens {

enum class Sublayer : std::uint8_t { kMlp = 0, kAttn = 1 };

inline std::string_view to_string(Sublayer s) { return s == Sublayer::kMlp ? "MLP" : "ATTN"; }

inline Sublayer parse_sublayer(std::string_view s) {
  if (s == "MLP" || s == "mlp") return Sublayer::kMlp;
  if (s == "ATTN" || s == "attn") return Sublayer::kAttn;
  throw ValidationError("unknown sublayer '" + std::string(s) + "'");
}

struct NeuronId {
  std::uint16_t layer = 0;
  Sublayer sublayer = Sublayer::kMlp;
  std::uint32_t unit = 0;
  std::uint64_t flat = 0;

  friend bool operator==(const NeuronId&, const NeuronId&) = default;
};

struct NeuronBlock {
  std::uint16_t layer = 0;
  Sublayer sublayer = Sublayer::kMlp;
  std::uint32_t unit_count = 0;

  friend bool operator==(const NeuronBlock&, const NeuronBlock&) = default;
};

/// Ordered (layer, sublayer) blocks; a neuron's flat index is the prefix-sum
/// offset of its block plus its unit index.
class NeuronMap {
 public:
  NeuronMap() = default;

  explicit NeuronMap(std::vector<NeuronBlock> blocks) : blocks_(std::move(blocks)) {
    offsets_.assign(1, 0);
    offsets_.reserve(blocks_.size() + 1);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const auto& b = blocks_[i];
      for (std::size_t j = 0; j < i; ++j) {
        if (blocks_[j].layer == b.layer && blocks_[j].sublayer == b.sublayer) {
          throw ValidationError("neuron map lists layer " + std::to_string(b.layer) + " " +
                                std::string(to_string(b.sublayer)) + " twice");
        }
      }
      offsets_.push_back(offsets_.back() + b.unit_count);
    }
  }

  /// `n_layers` transformer blocks, each an MLP block of `mlp_units` followed
  /// by an attention-output block of `attn_units`.
  static NeuronMap uniform(std::uint16_t n_layers, std::uint32_t mlp_units, std::uint32_t attn_units) {
    std::vector<NeuronBlock> blocks;
    for (std::uint16_t l = 0; l < n_layers; ++l) {
      if (mlp_units > 0) blocks.push_back({l, Sublayer::kMlp, mlp_units});
      if (attn_units > 0) blocks.push_back({l, Sublayer::kAttn, attn_units});
    }
    return NeuronMap(std::move(blocks));
  }

  std::uint64_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  const std::vector<NeuronBlock>& blocks() const noexcept { return blocks_; }
  std::uint64_t block_offset(std::size_t block) const { return offsets_.at(block); }

  std::size_t block_of(std::uint64_t flat) const {
    if (flat >= size()) {
      throw ValidationError("neuron index " + std::to_string(flat) + " out of range [0, " +
                            std::to_string(size()) + ")");
    }
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
  }

  NeuronId neuron(std::uint64_t flat) const {
    const std::size_t b = block_of(flat);
    const auto& blk = blocks_[b];
    return {blk.layer, blk.sublayer, static_cast<std::uint32_t>(flat - offsets_[b]), flat};
  }

  std::uint64_t flat_index(std::uint16_t layer, Sublayer sublayer, std::uint32_t unit) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      if (blocks_[b].layer == layer && blocks_[b].sublayer == sublayer) {
        if (unit >= blocks_[b].unit_count) {
          throw ValidationError("unit " + std::to_string(unit) + " >= block width " +
                                std::to_string(blocks_[b].unit_count));
        }
        return offsets_[b] + unit;
      }
    }
    throw ValidationError("no block for layer " + std::to_string(layer) + " " +
                          std::string(to_string(sublayer)));
  }

  /// FNV-1a over the block list; plans and expert sets carry it so they are
  /// never applied to a model with a different architecture.
  std::uint64_t hash() const noexcept {
    std::uint64_t h = fnv1a("neuron-map/v1");
    for (const auto& b : blocks_) {
      const std::string rec = std::to_string(b.layer) + ":" + std::string(to_string(b.sublayer)) + ":" +
                              std::to_string(b.unit_count) + ";";
      h = fnv1a(rec, h);
    }
    return h;
  }

  friend bool operator==(const NeuronMap& a, const NeuronMap& b) { return a.blocks_ == b.blocks_; }

 private:
  std::vector<NeuronBlock> blocks_;
  std::vector<std::uint64_t> offsets_{0};
};

}  // namespace expertlens
