// Couples a quantized run against its full-precision twin on the same
// seed and reports the accuracy cost of shrinking each interaction to a
// few bits per coordinate.
#include <cstdio>

#include "swarm/engine.hpp"

namespace {

swarm::SimConfig base_config() {
  swarm::SimConfig config;
  config.name = "quantized-link";
  config.n = 8;
  config.total_t = 30000;
  config.steps = {swarm::StepKind::geometric, 4.0};
  config.graph = swarm::GraphKind::complete;
  config.objective.kind = "quadratic";
  config.objective.dimension = 16;
  config.objective.center.assign(16, 0.5);
  config.objective.noise_std = 0.5;
  config.master_seed = 7;
  return config;
}

}  // namespace

int main() {
  swarm::SimConfig raw = base_config();
  raw.variant = swarm::Variant::nonblocking;

  swarm::SimConfig quantized = base_config();
  quantized.variant = swarm::Variant::quantized;

  const swarm::RunOutput raw_out = swarm::run_simulation(raw);
  const swarm::RunOutput quant_out = swarm::run_simulation(quantized);

  const swarm::RunSummary& a = raw_out.replicas.front();
  const swarm::RunSummary& b = quant_out.replicas.front();

  std::printf("%-14s %14s %14s %18s\n", "variant", "final gap", "gamma",
              "bits/interaction");
  std::printf("%-14s %14.6e %14.6e %18.1f\n", "non_blocking",
              a.final_f_gap.value_or(0.0), a.mean_gamma,
              static_cast<double>(a.cum_bits) / raw.total_t);
  std::printf("%-14s %14.6e %14.6e %18.1f\n", "quantized",
              b.final_f_gap.value_or(0.0), b.mean_gamma,
              static_cast<double>(b.cum_bits) / quantized.total_t);

  if (quant_out.quantizer.has_value()) {
    std::printf("\nlattice step %.4g, %llu cells, %lld decode failures\n",
                quant_out.quantizer->step,
                static_cast<unsigned long long>(
                    quant_out.quantizer->range_cells),
                static_cast<long long>(b.quantize_failures));
  }
  std::printf("gap ratio quantized/raw: %.3f\n",
              b.final_f_gap.value_or(0.0) / a.final_f_gap.value_or(1.0));
  return 0;
}
