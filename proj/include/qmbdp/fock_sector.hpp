#pragma once

// Occupation-number basis of N spinless-fermion sites at fixed particle number.
//
// Site labels run from -N/2+1 to N/2. Bit b of a basis bitstring is the
// occupation of site b - N/2 + 1, so the right half (sites 1..N/2) occupies
// the high bits N/2..N-1 and site 0 is bit N/2-1.

#include <qmbdp/error.hpp>

#include <bit>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qmbdp {

using Bits = std::uint64_t;

struct SectorLimits {
  /// Upper bound on the memory used by the explicit state table.
  std::size_t max_bytes = std::size_t{1} << 30;
};

namespace detail {

/// Pascal triangle up to 64 choose 64. Entries that overflow are never used
/// for N <= 62.
class BinomialTable {
 public:
  static const BinomialTable& instance() {
    static const BinomialTable table;
    return table;
  }
  [[nodiscard]] std::uint64_t operator()(int n, int k) const noexcept {
    if (k < 0 || n < 0 || k > n) return 0;
    return values_[static_cast<std::size_t>(n) * kSize + static_cast<std::size_t>(k)];
  }

 private:
  static constexpr std::size_t kSize = 65;
  BinomialTable() : values_(kSize * kSize, 0) {
    for (std::size_t n = 0; n < kSize; ++n) {
      values_[n * kSize] = 1;
      for (std::size_t k = 1; k <= n; ++k)
        values_[n * kSize + k] = values_[(n - 1) * kSize + k - 1] + (k < n ? values_[(n - 1) * kSize + k] : 0);
    }
  }
  std::vector<std::uint64_t> values_;
};

}  // namespace detail

inline std::uint64_t binomial(int n, int k) { return detail::BinomialTable::instance()(n, k); }

class FockSector {
 public:
  FockSector() = default;

  [[nodiscard]] int n_sites() const noexcept { return n_sites_; }
  [[nodiscard]] int n_particles() const noexcept { return n_particles_; }
  [[nodiscard]] std::size_t dim() const noexcept { return states_ ? states_->size() : 0; }
  [[nodiscard]] std::span<const Bits> states() const noexcept {
    return states_ ? std::span<const Bits>(*states_) : std::span<const Bits>();
  }
  [[nodiscard]] Bits state(std::size_t i) const { return (*states_)[i]; }

  [[nodiscard]] int first_site() const noexcept { return -n_sites_ / 2 + 1; }
  [[nodiscard]] int last_site() const noexcept { return n_sites_ / 2; }
  [[nodiscard]] bool has_site(int site) const noexcept { return site >= first_site() && site <= last_site(); }

  [[nodiscard]] int bit_of_site(int site) const {
    if (!has_site(site))
      throw ValidationError("site " + std::to_string(site) + " outside lattice [" + std::to_string(first_site()) +
                            ", " + std::to_string(last_site()) + "]");
    return site + n_sites_ / 2 - 1;
  }
  [[nodiscard]] int site_of_bit(int bit) const noexcept { return bit - n_sites_ / 2 + 1; }

  [[nodiscard]] bool occupied(Bits s, int site) const { return ((s >> bit_of_site(site)) & 1U) != 0; }

  /// Number of particles on sites 1..N/2.
  [[nodiscard]] int right_count(Bits s) const noexcept { return std::popcount(s >> (n_sites_ / 2)); }

  /// Index of a basis state, or nullopt when `bits` is not a member.
  /// Uses the combinatorial rank, which equals the position in ascending order.
  [[nodiscard]] std::optional<std::size_t> find(Bits bits) const noexcept {
    if (std::popcount(bits) != n_particles_) return std::nullopt;
    if (n_sites_ < 64 && (bits >> n_sites_) != 0) return std::nullopt;
    const auto& choose = detail::BinomialTable::instance();
    std::uint64_t rank = 0;
    int j = 1;
    for (Bits rest = bits; rest != 0; rest &= rest - 1, ++j) rank += choose(std::countr_zero(rest), j);
    return static_cast<std::size_t>(rank);
  }

  [[nodiscard]] std::size_t index_of(Bits bits) const {
    if (auto i = find(bits)) return *i;
    throw NotFoundError("bitstring " + std::to_string(bits) + " is not in the " + std::to_string(n_particles_) +
                        "-particle sector of " + std::to_string(n_sites_) + " sites");
  }

  friend FockSector build_sector(int n_sites, int n_particles, const SectorLimits& limits);

 private:
  int n_sites_ = 0;
  int n_particles_ = 0;
  std::shared_ptr<const std::vector<Bits>> states_;
};

/// Enumerates all bitstrings of `n_sites` bits with `n_particles` set bits in
/// ascending integer order.
inline FockSector build_sector(int n_sites, int n_particles, const SectorLimits& limits = {}) {
  if (n_sites <= 0 || n_sites % 2 != 0)
    throw ValidationError("number of sites must be positive and even, got " + std::to_string(n_sites));
  if (n_sites > 62) throw ValidationError("at most 62 sites are supported, got " + std::to_string(n_sites));
  if (n_particles < 0 || n_particles > n_sites)
    throw ValidationError("particle number " + std::to_string(n_particles) + " outside [0, " +
                          std::to_string(n_sites) + "]");

  const std::uint64_t dim = binomial(n_sites, n_particles);
  if (dim > limits.max_bytes / sizeof(Bits))
    throw CapacityError("fock-basis", "sector dimension " + std::to_string(dim) + " exceeds the memory budget of " +
                                          std::to_string(limits.max_bytes) + " bytes");

  auto states = std::make_shared<std::vector<Bits>>();
  states->reserve(static_cast<std::size_t>(dim));
  if (n_particles == 0) {
    states->push_back(0);
  } else {
    // Gosper's hack walks the fixed-popcount words in increasing order.
    const Bits limit = Bits{1} << n_sites;
    for (Bits s = (Bits{1} << n_particles) - 1; s < limit;) {
      states->push_back(s);
      const Bits low = s & (~s + 1);
      const Bits ripple = s + low;
      s = (((ripple ^ s) >> 2) / low) | ripple;
    }
  }

  FockSector sector;
  sector.n_sites_ = n_sites;
  sector.n_particles_ = n_particles;
  sector.states_ = std::move(states);
  return sector;
}

/// Per-state right-half particle count and the induced decomposition.
struct RightCountMask {
  std::vector<std::uint8_t> counts;
  std::vector<std::size_t> sub_dims;  // indexed by N_R

  [[nodiscard]] std::size_t dim() const noexcept { return counts.size(); }
  [[nodiscard]] int max_count() const noexcept { return static_cast<int>(sub_dims.size()) - 1; }

  [[nodiscard]] std::size_t sub_dim(int r) const {
    return r >= 0 && r < static_cast<int>(sub_dims.size()) ? sub_dims[static_cast<std::size_t>(r)] : 0;
  }

  /// Indices (into the full sector) of the states with N_R = r, ascending.
  [[nodiscard]] std::vector<std::size_t> indices(int r) const {
    std::vector<std::size_t> out;
    out.reserve(sub_dim(r));
    for (std::size_t i = 0; i < counts.size(); ++i)
      if (counts[i] == r) out.push_back(i);
    return out;
  }

  [[nodiscard]] std::vector<std::uint8_t> mask(int r) const {
    std::vector<std::uint8_t> out(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] == r ? 1 : 0;
    return out;
  }
};

inline RightCountMask right_count(const FockSector& sector) {
  RightCountMask mask;
  mask.counts.resize(sector.dim());
  mask.sub_dims.assign(static_cast<std::size_t>(sector.n_sites() / 2) + 1, 0);
  const auto states = sector.states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const int r = sector.right_count(states[i]);
    mask.counts[i] = static_cast<std::uint8_t>(r);
    ++mask.sub_dims[static_cast<std::size_t>(r)];
  }
  return mask;
}

}  // namespace qmbdp
