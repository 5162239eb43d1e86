#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ccgp {

/**
 * Unscrambled Sobol sequence (Joe-Kuo direction numbers) for up to 8
 * dimensions. Point 0 is the origin; coordinates are exact dyadic rationals.
 */
class SobolSequence {
public:
  static constexpr unsigned kMaxDim = 8;
  static constexpr unsigned kBits = 32;

  explicit SobolSequence(unsigned dim) : dim_(dim), v_(dim), x_(dim, 0) {
    if (dim == 0 || dim > kMaxDim) throw std::invalid_argument("Sobol dimension must be in [1, 8]");
    struct Poly {
      unsigned s, a;
      std::array<std::uint32_t, 5> m;
    };
    static constexpr std::array<Poly, kMaxDim - 1> polys{{
        {1, 0, {1}},
        {2, 1, {1, 3}},
        {3, 1, {1, 3, 1}},
        {3, 2, {1, 1, 1}},
        {4, 1, {1, 1, 3, 3}},
        {4, 4, {1, 3, 5, 13}},
        {5, 2, {1, 1, 5, 5, 17}},
    }};
    for (unsigned i = 1; i <= kBits; ++i) v_[0][i - 1] = 1u << (kBits - i);
    for (unsigned d = 1; d < dim; ++d) {
      const Poly& p = polys[d - 1];
      auto& v = v_[d];
      for (unsigned i = 1; i <= p.s && i <= kBits; ++i) v[i - 1] = p.m[i - 1] << (kBits - i);
      for (unsigned i = p.s + 1; i <= kBits; ++i) {
        std::uint32_t value = v[i - p.s - 1] ^ (v[i - p.s - 1] >> p.s);
        for (unsigned k = 1; k < p.s; ++k) value ^= ((p.a >> (p.s - 1 - k)) & 1u) * v[i - k - 1];
        v[i - 1] = value;
      }
    }
  }

  unsigned dim() const { return dim_; }

  /// Next point in [0, 1)^dim; the first call returns the origin.
  std::vector<double> next() {
    std::vector<double> out(dim_);
    for (unsigned d = 0; d < dim_; ++d) out[d] = static_cast<double>(x_[d]) / 4294967296.0;
    // Gray-code update: flip direction number of the lowest zero bit of index.
    unsigned c = 0;
    std::uint64_t i = index_;
    while (i & 1u) {
      i >>= 1;
      ++c;
    }
    if (c >= kBits) throw std::out_of_range("Sobol sequence exhausted");
    for (unsigned d = 0; d < dim_; ++d) x_[d] ^= v_[d][c];
    ++index_;
    return out;
  }

private:
  unsigned dim_;
  std::vector<std::array<std::uint32_t, kBits>> v_;
  std::vector<std::uint32_t> x_;
  std::uint64_t index_{0};
};

}  // namespace ccgp
