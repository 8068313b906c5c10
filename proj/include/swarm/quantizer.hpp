// Unbiased lattice quantization with modular residue transmission.
//
// Encoding rounds each coordinate x_k randomly to a lattice point
// z_k (up with probability equal to the fractional part, so
// E[step * z_k] = x_k) and transmits only z_k mod B. Decoding recovers
// the unique congruent lattice point inside a window of width B
// centred on the receiver's side information y; recovery is exact
// whenever max_k |x_k - y_k| < (B/2 - 1) * step. A 16-bit checksum of
// the true lattice vector makes window aliasing detectable.
//
// Wire format (bit-exact):
//   [u32 dimension_d][u16 log2_B][u16 checksum]   64-bit header, LE
//   then d residues packed LSB-first at log2_B bits each,
//   zero-padded to a byte boundary.
#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "swarm/random.hpp"
#include "swarm/vec_ops.hpp"

namespace swarm {

struct QuantizerConfig {
  double step = 1.0;             // lattice spacing epsilon
  std::uint32_t range_cells = 4; // B, power of two >= 4
  std::uint32_t dimension = 1;

  void validate() const {
    if (!(step > 0.0) || !std::isfinite(step)) {
      throw std::invalid_argument("quantizer step must be positive");
    }
    if (range_cells < 4 || !std::has_single_bit(range_cells)) {
      throw std::invalid_argument(
          "quantizer range_cells must be a power of two >= 4");
    }
    if (dimension < 1) {
      throw std::invalid_argument("quantizer dimension must be >= 1");
    }
  }

  std::uint16_t log2_range() const {
    return static_cast<std::uint16_t>(std::bit_width(range_cells) - 1);
  }
};

struct QuantizedMessage {
  std::vector<std::uint32_t> residues;
  std::uint32_t dimension = 0;
  std::uint16_t log2_range = 0;
  std::uint16_t checksum = 0;

  std::uint64_t bit_cost() const {
    return static_cast<std::uint64_t>(dimension) * log2_range + 64;
  }
};

namespace detail {

// FNV-1a over the little-endian bytes of the lattice integers, folded
// to 16 bits.
inline std::uint16_t lattice_checksum(std::span<const std::int64_t> z) {
  std::uint32_t h = 2166136261u;
  for (std::int64_t v : z) {
    std::uint64_t u = static_cast<std::uint64_t>(v);
    for (int byte = 0; byte < 8; ++byte) {
      h = (h ^ static_cast<std::uint8_t>(u >> (8 * byte))) * 16777619u;
    }
  }
  return static_cast<std::uint16_t>((h >> 16) ^ (h & 0xffffu));
}

}  // namespace detail

inline QuantizedMessage encode(std::span<const double> x,
                               const QuantizerConfig& cfg, RandomStream& rng) {
  cfg.validate();
  if (x.size() != cfg.dimension) {
    throw std::invalid_argument("encode input dimension mismatch");
  }
  const std::int64_t b = cfg.range_cells;
  std::vector<std::int64_t> lattice(x.size());
  QuantizedMessage msg;
  msg.dimension = cfg.dimension;
  msg.log2_range = cfg.log2_range();
  msg.residues.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double v = x[k] / cfg.step;
    const double lo = std::floor(v);
    const double frac = v - lo;
    std::int64_t z = static_cast<std::int64_t>(lo);
    if (rng.uniform01() < frac) z += 1;
    lattice[k] = z;
    msg.residues[k] = static_cast<std::uint32_t>(((z % b) + b) % b);
  }
  msg.checksum = detail::lattice_checksum(lattice);
  return msg;
}

// Reconstructs step * z from the residues using y as side information.
// Returns nothing when the checksum of the reconstructed lattice vector
// disagrees with the transmitted one (the window missed the true point).
inline std::optional<Vec> decode(const QuantizedMessage& msg,
                                 std::span<const double> y,
                                 const QuantizerConfig& cfg) {
  cfg.validate();
  if (msg.dimension != cfg.dimension || y.size() != cfg.dimension ||
      msg.residues.size() != cfg.dimension) {
    throw std::invalid_argument("decode dimension mismatch");
  }
  if (msg.log2_range != cfg.log2_range()) {
    throw std::invalid_argument("decode range mismatch");
  }
  const double b = static_cast<double>(cfg.range_cells);
  std::vector<std::int64_t> lattice(y.size());
  Vec out(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double w = y[k] / cfg.step;
    const double residue = static_cast<double>(msg.residues[k]);
    // Unique z = residue + B*m inside (w - B/2, w + B/2].
    const double m = std::floor((w - residue) / b + 0.5);
    const std::int64_t z =
        static_cast<std::int64_t>(residue) +
        static_cast<std::int64_t>(cfg.range_cells) *
            static_cast<std::int64_t>(m);
    lattice[k] = z;
    out[k] = cfg.step * static_cast<double>(z);
  }
  if (detail::lattice_checksum(lattice) != msg.checksum) return std::nullopt;
  return out;
}

// Worst-case Euclidean distance between the input and any successful
// decode: one lattice step per coordinate.
inline double round_trip_error_bound(const QuantizerConfig& cfg) {
  return cfg.step * std::sqrt(static_cast<double>(cfg.dimension));
}

// ===== wire serialization =====

inline std::vector<std::uint8_t> serialize_message(
    const QuantizedMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + (static_cast<std::size_t>(msg.dimension) * msg.log2_range +
                   7) / 8);
  for (int byte = 0; byte < 4; ++byte) {
    out.push_back(static_cast<std::uint8_t>(msg.dimension >> (8 * byte)));
  }
  for (int byte = 0; byte < 2; ++byte) {
    out.push_back(static_cast<std::uint8_t>(msg.log2_range >> (8 * byte)));
  }
  for (int byte = 0; byte < 2; ++byte) {
    out.push_back(static_cast<std::uint8_t>(msg.checksum >> (8 * byte)));
  }
  std::uint64_t acc = 0;
  int pending_bits = 0;
  for (std::uint32_t residue : msg.residues) {
    acc |= static_cast<std::uint64_t>(residue) << pending_bits;
    pending_bits += msg.log2_range;
    while (pending_bits >= 8) {
      out.push_back(static_cast<std::uint8_t>(acc & 0xffu));
      acc >>= 8;
      pending_bits -= 8;
    }
  }
  if (pending_bits > 0) out.push_back(static_cast<std::uint8_t>(acc & 0xffu));
  return out;
}

inline QuantizedMessage parse_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    throw std::invalid_argument("quantized message shorter than its header");
  }
  QuantizedMessage msg;
  msg.dimension = 0;
  for (int byte = 0; byte < 4; ++byte) {
    msg.dimension |= static_cast<std::uint32_t>(bytes[byte]) << (8 * byte);
  }
  msg.log2_range = 0;
  for (int byte = 0; byte < 2; ++byte) {
    msg.log2_range |= static_cast<std::uint16_t>(
        static_cast<std::uint32_t>(bytes[4 + byte]) << (8 * byte));
  }
  msg.checksum = 0;
  for (int byte = 0; byte < 2; ++byte) {
    msg.checksum |= static_cast<std::uint16_t>(
        static_cast<std::uint32_t>(bytes[6 + byte]) << (8 * byte));
  }
  if (msg.log2_range < 2 || msg.log2_range > 31) {
    throw std::invalid_argument("quantized message has invalid range");
  }
  const std::uint64_t payload_bits =
      static_cast<std::uint64_t>(msg.dimension) * msg.log2_range;
  if ((bytes.size() - 8) != (payload_bits + 7) / 8) {
    throw std::invalid_argument("quantized message payload size mismatch");
  }
  msg.residues.resize(msg.dimension);
  std::uint64_t acc = 0;
  int available = 0;
  std::size_t cursor = 8;
  const std::uint64_t mask = (1ull << msg.log2_range) - 1;
  for (std::uint32_t& residue : msg.residues) {
    while (available < msg.log2_range) {
      acc |= static_cast<std::uint64_t>(bytes[cursor++]) << available;
      available += 8;
    }
    residue = static_cast<std::uint32_t>(acc & mask);
    acc >>= msg.log2_range;
    available -= msg.log2_range;
  }
  return msg;
}

// ===== parameter selection =====

// Lattice spacing matched to the local-update scale eta * H * M_hat,
// spread across sqrt(d) coordinates.
inline double select_quantizer_step(double eta, double mean_h, double m2_hat,
                                    int dimension) {
  if (!(m2_hat > 0.0)) {
    throw std::invalid_argument(
        "quantizer step selection requires a positive measured second "
        "moment; set quantizer.step explicitly");
  }
  return eta * mean_h * std::sqrt(m2_hat) /
         std::sqrt(static_cast<double>(dimension));
}

// Smallest admissible power-of-two window that covers the expected
// model disagreement envelope sqrt(2 * gamma_bound) with an 8x safety
// margin: (B/2 - 1) * step must exceed the envelope.
inline std::uint32_t select_range_cells(double step, double gamma_bound) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("range selection requires a positive step");
  }
  const double envelope = 8.0 * std::sqrt(2.0 * std::max(0.0, gamma_bound));
  const double needed = 2.0 * (envelope / step + 1.0) + 1.0;
  std::uint64_t cells = 4;
  while (static_cast<double>(cells) < needed && cells < (1u << 30)) {
    cells <<= 1;
  }
  return static_cast<std::uint32_t>(cells);
}

}  // namespace swarm
