#include "swarm/quantizer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "swarm/random.hpp"
#include "swarm/vec_ops.hpp"

namespace swarm {
namespace {

// Independent re-implementation of the wire checksum for pinning the
// serialized header bytes.
std::uint16_t reference_checksum(const std::vector<std::int64_t>& z) {
  std::uint32_t h = 2166136261u;
  for (std::int64_t v : z) {
    for (int byte = 0; byte < 8; ++byte) {
      const auto b = static_cast<std::uint8_t>(
          static_cast<std::uint64_t>(v) >> (8 * byte));
      h = (h ^ b) * 16777619u;
    }
  }
  return static_cast<std::uint16_t>((h >> 16) ^ (h & 0xffffu));
}

RandomStream quant_rng(std::uint64_t index) {
  return RandomStream::substream(2024, StreamDomain::quantizer, index);
}

TEST(BitCost, MatchesDefinition) {
  QuantizedMessage msg;
  msg.dimension = 10;
  msg.log2_range = 8;
  EXPECT_EQ(msg.bit_cost(), 144u);
  msg.dimension = 1;
  msg.log2_range = 2;
  EXPECT_EQ(msg.bit_cost(), 66u);
}

TEST(ConfigValidation, RejectsBadParameters) {
  EXPECT_THROW((QuantizerConfig{0.0, 8, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((QuantizerConfig{-1.0, 8, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((QuantizerConfig{1.0, 2, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((QuantizerConfig{1.0, 12, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((QuantizerConfig{1.0, 8, 0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((QuantizerConfig{0.5, 4, 3}.validate()));
}

TEST(Encode, LatticePointsAreDeterministic) {
  const QuantizerConfig cfg{0.5, 16, 3};
  const Vec x = {1.0, -2.0, 4.0};  // multiples of the step
  RandomStream rng_a = quant_rng(0);
  RandomStream rng_b = quant_rng(99);
  const QuantizedMessage a = encode(x, cfg, rng_a);
  const QuantizedMessage b = encode(x, cfg, rng_b);
  EXPECT_EQ(a.residues, b.residues);
  EXPECT_EQ(a.checksum, b.checksum);
  // 1.0/0.5 = 2, -2.0/0.5 = -4 -> residue 12, 4.0/0.5 = 8.
  EXPECT_EQ(a.residues, (std::vector<std::uint32_t>{2, 12, 8}));
}

TEST(Encode, RejectsDimensionMismatch) {
  const QuantizerConfig cfg{1.0, 8, 2};
  RandomStream rng = quant_rng(1);
  EXPECT_THROW(encode(Vec{1.0}, cfg, rng), std::invalid_argument);
}

TEST(Encode, UnbiasedAtHalfStep) {
  const QuantizerConfig cfg{1.0, 8, 1};
  const int draws = 100000;
  RandomStream rng = quant_rng(2);
  double mean = 0.0;
  for (int t = 0; t < draws; ++t) {
    const QuantizedMessage msg = encode(Vec{0.5}, cfg, rng);
    const auto decoded = decode(msg, Vec{0.5}, cfg);
    ASSERT_TRUE(decoded.has_value());
    mean += (*decoded)[0];
  }
  mean /= draws;
  const double se = 0.5 / std::sqrt(static_cast<double>(draws));
  EXPECT_NEAR(mean, 0.5, 3.0 * se);
}

TEST(Encode, UnbiasedAtRandomPoints) {
  const QuantizerConfig cfg{0.25, 64, 4};
  const int draws = 100000;
  RandomStream point_rng = quant_rng(3);
  Vec x(4);
  for (double& v : x) v = 2.0 * point_rng.normal();
  RandomStream rng = quant_rng(4);
  Vec mean(4, 0.0);
  for (int t = 0; t < draws; ++t) {
    const QuantizedMessage msg = encode(x, cfg, rng);
    const auto decoded = decode(msg, x, cfg);
    ASSERT_TRUE(decoded.has_value());
    axpy(1.0, *decoded, mean);
  }
  scale(mean, 1.0 / draws);
  // Bernoulli rounding variance per coordinate is at most step^2 / 4.
  const double se = 0.5 * cfg.step / std::sqrt(static_cast<double>(draws));
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(mean[k], x[k], 4.0 * se) << "coordinate " << k;
  }
}

TEST(Decode, HandWorkedWindowExamples) {
  const QuantizerConfig cfg{1.0, 8, 1};
  RandomStream rng = quant_rng(5);

  const QuantizedMessage near = encode(Vec{3.0}, cfg, rng);
  EXPECT_EQ(near.residues[0], 3u);
  const auto near_decoded = decode(near, Vec{0.0}, cfg);
  ASSERT_TRUE(near_decoded.has_value());
  EXPECT_DOUBLE_EQ((*near_decoded)[0], 3.0);

  // z = 10 aliases to residue 2; the window around zero picks 2 and the
  // checksum flags the mismatch.
  const QuantizedMessage far = encode(Vec{10.0}, cfg, rng);
  EXPECT_EQ(far.residues[0], 2u);
  EXPECT_FALSE(decode(far, Vec{0.0}, cfg).has_value());
}

TEST(Decode, NegativeCoordinatesRoundTrip) {
  const QuantizerConfig cfg{1.0, 8, 1};
  RandomStream rng = quant_rng(6);
  const QuantizedMessage msg = encode(Vec{-1.0}, cfg, rng);
  EXPECT_EQ(msg.residues[0], 7u);
  const auto decoded = decode(msg, Vec{0.0}, cfg);
  ASSERT_TRUE(decoded.has_value());
  EXPECT_DOUBLE_EQ((*decoded)[0], -1.0);
}

TEST(Decode, GuardsConfigurationMismatches) {
  const QuantizerConfig cfg{1.0, 8, 2};
  RandomStream rng = quant_rng(7);
  const QuantizedMessage msg = encode(Vec{1.0, 1.0}, cfg, rng);
  EXPECT_THROW(decode(msg, Vec{1.0}, cfg), std::invalid_argument);
  const QuantizerConfig other_range{1.0, 16, 2};
  EXPECT_THROW(decode(msg, Vec{1.0, 1.0}, other_range), std::invalid_argument);
}

// Inside the certified distance the decode must reproduce the encoded
// lattice point exactly; outside it must either still succeed exactly
// or fail loudly, never return a silently wrong vector.
TEST(Decode, SuccessRegionSweep) {
  const QuantizerConfig cfg{1.0, 8, 1};
  const double guarantee = (cfg.range_cells / 2.0 - 1.0) * cfg.step;
  RandomStream rng = quant_rng(8);
  for (int xi = -20; xi <= 20; ++xi) {
    for (int yi = -20; yi <= 20; ++yi) {
      const double x = 0.5 * xi;
      const double y = 0.5 * yi;
      const QuantizedMessage msg = encode(Vec{x}, cfg, rng);
      const auto decoded = decode(msg, Vec{y}, cfg);
      if (decoded.has_value()) {
        EXPECT_LE(std::abs((*decoded)[0] - x), cfg.step + 1e-12);
      }
      if (std::abs(x - y) < guarantee - cfg.step) {
        // Rounding moves the lattice point at most one cell, so this
        // margin guarantees success regardless of the random round.
        ASSERT_TRUE(decoded.has_value()) << "x=" << x << " y=" << y;
      }
    }
  }
}

TEST(Decode, ErrorBoundHoldsOnSuccess) {
  const QuantizerConfig cfg{0.3, 32, 16};
  RandomStream rng = quant_rng(9);
  RandomStream point_rng = quant_rng(10);
  const double bound = round_trip_error_bound(cfg);
  EXPECT_DOUBLE_EQ(bound, 0.3 * 4.0);
  for (int trial = 0; trial < 2000; ++trial) {
    Vec x(16);
    for (double& v : x) v = point_rng.normal();
    const QuantizedMessage msg = encode(x, cfg, rng);
    const auto decoded = decode(msg, x, cfg);
    ASSERT_TRUE(decoded.has_value());
    Vec diff = *decoded;
    axpy(-1.0, x, diff);
    EXPECT_LE(norm(diff), bound + 1e-12);
  }
}

TEST(Wire, PinnedHeaderAndPackingBytes) {
  const QuantizerConfig cfg{1.0, 16, 3};
  RandomStream rng = quant_rng(11);
  const QuantizedMessage msg = encode(Vec{1.0, 2.0, 3.0}, cfg, rng);
  const std::uint16_t checksum = reference_checksum({1, 2, 3});
  EXPECT_EQ(msg.checksum, checksum);
  const std::vector<std::uint8_t> bytes = serialize_message(msg);
  const std::vector<std::uint8_t> expected = {
      3, 0, 0, 0,                                        // u32 dimension
      4, 0,                                              // u16 log2(B)
      static_cast<std::uint8_t>(checksum & 0xff),        // u16 checksum
      static_cast<std::uint8_t>(checksum >> 8),
      0x21,                                              // residues 1,2
      0x03,                                              // residue 3
  };
  EXPECT_EQ(bytes, expected);
}

TEST(Wire, RoundTripAcrossShapes) {
  struct Shape {
    double step;
    std::uint32_t range;
    std::uint32_t dim;
  };
  const std::vector<Shape> shapes = {
      {1.0, 4, 1}, {0.5, 16, 3}, {0.01, 4096, 16}, {2.0, 8, 7}};
  RandomStream rng = quant_rng(12);
  RandomStream point_rng = quant_rng(13);
  for (const Shape& shape : shapes) {
    const QuantizerConfig cfg{shape.step, shape.range, shape.dim};
    Vec x(shape.dim);
    for (double& v : x) v = 3.0 * point_rng.normal();
    const QuantizedMessage msg = encode(x, cfg, rng);
    const QuantizedMessage parsed = parse_message(serialize_message(msg));
    EXPECT_EQ(parsed.dimension, msg.dimension);
    EXPECT_EQ(parsed.log2_range, msg.log2_range);
    EXPECT_EQ(parsed.checksum, msg.checksum);
    EXPECT_EQ(parsed.residues, msg.residues);
    EXPECT_EQ(serialize_message(msg).size() * 8,
              ((msg.bit_cost() - 64) + 7) / 8 * 8 + 64);
  }
}

TEST(Wire, ParseRejectsMalformedInput) {
  EXPECT_THROW(parse_message(std::vector<std::uint8_t>{1, 2, 3}),
               std::invalid_argument);
  // Valid header for d=2, log2B=4, but truncated payload.
  std::vector<std::uint8_t> missing_payload = {2, 0, 0, 0, 4, 0, 0, 0};
  EXPECT_THROW(parse_message(missing_payload), std::invalid_argument);
  // log2B below the minimum of 2.
  std::vector<std::uint8_t> bad_range = {1, 0, 0, 0, 1, 0, 0, 0, 0};
  EXPECT_THROW(parse_message(bad_range), std::invalid_argument);
}

TEST(Selection, StepRuleMatchesWorkedExample) {
  EXPECT_DOUBLE_EQ(select_quantizer_step(0.01, 4.0, 25.0, 16), 0.05);
  EXPECT_THROW(select_quantizer_step(0.01, 4.0, 0.0, 16),
               std::invalid_argument);
}

TEST(Selection, RangeCoversDisagreementEnvelope) {
  for (double gamma_bound : {0.0, 0.01, 1.0, 250.0}) {
    for (double step : {0.001, 0.05, 1.0}) {
      const std::uint32_t cells = select_range_cells(step, gamma_bound);
      EXPECT_GE(cells, 4u);
      EXPECT_TRUE(std::has_single_bit(cells));
      const double envelope = 8.0 * std::sqrt(2.0 * gamma_bound);
      EXPECT_GT((cells / 2.0 - 1.0) * step, envelope);
      if (cells > 4) {
        const double needed = 2.0 * (envelope / step + 1.0) + 1.0;
        EXPECT_LT(static_cast<double>(cells / 2), needed);
      }
    }
  }
  EXPECT_EQ(select_range_cells(1.0, 0.0), 4u);
}

}  // namespace
}  // namespace swarm
