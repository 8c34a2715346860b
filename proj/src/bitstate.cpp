#include <algorithm>

#include "reshuffle/engine.hpp"
#include "reshuffle/error.hpp"

namespace reshuffle {

BitEngine::BitEngine(const Model& model, const KnowledgeGraph& g)
    : ell_(model.dims.ell),
      k_(model.dims.k),
      words_((model.dims.k + 63) / 64),
      stride_(std::size_t{model.dims.ell} * ((model.dims.k + 63) / 64)),
      plan_(plan_messages(model, g)),
      num_entities_(g.num_entities()) {
  if (model.mode != ModelMode::binary) throw InputError("bit engine needs a compiled binary model");
  for (const auto& m : model.mats) {
    if (!m.is_binary()) throw InputError("bit engine needs binary relation matrices");
    std::vector<std::int32_t> rows(ell_, -1);
    for (std::uint32_t i = 0; i < ell_; ++i) {
      for (std::uint32_t j = 0; j < ell_; ++j) {
        if (m.at(i, j) == 1.0) rows[i] = static_cast<std::int32_t>(j);
      }
    }
    src_.push_back(std::move(rows));
  }
  bits_.assign(num_entities_ * stride_, 0);
}

void BitEngine::load(const Snapshot& s) {
  if (s.d != std::size_t{ell_} * k_ || s.num_entities() != num_entities_) {
    throw InputError("snapshot does not fit the bit engine");
  }
  std::fill(bits_.begin(), bits_.end(), 0);
  for (std::size_t e = 0; e < num_entities_; ++e) {
    for (std::uint32_t i = 0; i < ell_; ++i) {
      for (std::uint32_t t = 0; t < k_; ++t) {
        const double v = s.values[e * s.d + std::size_t{i} * k_ + t];
        if (v != 0.0 && v != 1.0) throw InputError("bit engine needs {0,1} states");
        if (v == 1.0) bits_[e * stride_ + std::size_t{i} * words_ + t / 64] |= 1ULL << (t % 64);
      }
    }
  }
  layer_ = s.layer;
}

Snapshot BitEngine::snapshot() const {
  Snapshot s;
  s.layer = layer_;
  s.d = std::size_t{ell_} * k_;
  s.values.assign(num_entities_ * s.d, 0.0);
  for (std::size_t e = 0; e < num_entities_; ++e) {
    for (std::uint32_t i = 0; i < ell_; ++i) {
      for (std::uint32_t t = 0; t < k_; ++t) {
        const auto w = bits_[e * stride_ + std::size_t{i} * words_ + t / 64];
        s.values[e * s.d + std::size_t{i} * k_ + t] = static_cast<double>((w >> (t % 64)) & 1);
      }
    }
  }
  return s;
}

bool BitEngine::round() {
  next_ = bits_;
  for (std::size_t f = 0; f < num_entities_; ++f) {
    for (const auto& m : plan_.incoming[f]) {
      const auto& rows = src_[m.rel];
      for (std::uint32_t i = 0; i < ell_; ++i) {
        if (rows[i] < 0) continue;
        const auto* from = block(bits_, m.src, static_cast<std::uint32_t>(rows[i]));
        auto* to = next_.data() + f * stride_ + std::size_t{i} * words_;
        for (std::uint32_t w = 0; w < words_; ++w) to[w] |= from[w];
      }
    }
  }
  ++layer_;
  const bool changed = next_ != bits_;
  bits_.swap(next_);
  return changed;
}

std::uint32_t BitEngine::run_to_fixpoint() {
  const std::size_t cap = std::size_t{ell_} * k_ * std::max<std::size_t>(1, num_entities_) + 1;
  for (std::size_t i = 0; i < cap; ++i) {
    if (!round()) return layer_;
  }
  throw RuntimeFailure("no fixpoint within " + std::to_string(cap) + " rounds");
}

bool BitEngine::capture(EntityId a, RelationId model_rel, EntityId b) const {
  const auto& rows = src_.at(model_rel);
  for (std::uint32_t i = 0; i < ell_; ++i) {
    if (rows[i] < 0) continue;
    const auto* x = block(bits_, a, static_cast<std::uint32_t>(rows[i]));
    const auto* y = block(bits_, b, i);
    for (std::uint32_t w = 0; w < words_; ++w) {
      if (x[w] & ~y[w]) return false;
    }
  }
  return true;
}

}  // namespace reshuffle
