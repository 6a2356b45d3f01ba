#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uplift/data_model.hpp"
#include "uplift/hash.hpp"
#include "uplift/rng.hpp"

namespace uplift {

// Seeded stand-in for the germination dataset with a known response:
//   uplift = offset + saturating(power) + bell(voltage) + bell(time)
//          + vigor * (1 - baseline/100) * bell(time) + N(0, noise_sd)
// gas_flow_lpm is drawn independently of everything else (pure noise).
struct HormeticSpec {
  std::size_t n = 500;
  double noise_sd = 2.0;
  double offset = -5.0;
  double power_gain = 12.0, power_scale = 50.0;
  double voltage_gain = 12.0, voltage_peak = 11.0, voltage_width = 4.0;
  double time_gain = 12.0, time_peak = 350.0, time_width = 150.0;
  double vigor_gain = 25.0;
  double voltage_lo = 2.0, voltage_hi = 25.0;
  double time_lo = 30.0, time_hi = 900.0;
  double power_lo = 20.0, power_hi = 200.0;
  double baseline_lo = 15.0, baseline_hi = 50.0;
};

inline double bell(double x, double peak, double width) {
  const double z = (x - peak) / width;
  return std::exp(-0.5 * z * z);
}

/// Noise-free planted response.
inline double hormetic_response(const HormeticSpec& s, double power, double voltage, double time, double baseline) {
  return s.offset + s.power_gain * (1.0 - std::exp(-power / s.power_scale)) +
         s.voltage_gain * bell(voltage, s.voltage_peak, s.voltage_width) +
         s.time_gain * bell(time, s.time_peak, s.time_width) +
         s.vigor_gain * (1.0 - baseline / 100.0) * bell(time, s.time_peak, s.time_width);
}

inline constexpr Numeric kSyntheticNoiseColumn = Numeric::gas_flow_lpm;

inline const std::vector<Numeric>& synthetic_signal_columns() {
  static const std::vector<Numeric> cols = {Numeric::power_w, Numeric::voltage_kv, Numeric::plasma_time_s,
                                            Numeric::baseline_germination_pct};
  return cols;
}

inline Dataset make_hormetic_dataset(std::uint64_t seed, const HormeticSpec& s = {}) {
  static const char* const species[] = {"wheat", "barley", "pea"};
  Rng rng(derive_seed(seed, "hormetic"));
  Dataset ds;
  ds.records.reserve(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    SeedRecord r;
    const std::size_t sp = rng.below(3);
    r.species = species[sp];
    r.cultivar = r.species + "-" + std::to_string(1 + rng.below(3));
    r.gas = static_cast<GasType>(rng.below(kGasCount));

    const double power = rng.uniform(s.power_lo, s.power_hi);
    const double voltage = rng.uniform(s.voltage_lo, s.voltage_hi);
    const double time = rng.uniform(s.time_lo, s.time_hi);
    const double baseline = rng.uniform(s.baseline_lo, s.baseline_hi);
    r[Numeric::power_w] = power;
    r[Numeric::voltage_kv] = voltage;
    r[Numeric::plasma_time_s] = time;
    r[Numeric::baseline_germination_pct] = baseline;

    r[Numeric::seed_size_mm] = rng.uniform(2.0, 9.0);
    r[Numeric::seed_weight_g] = rng.uniform(0.01, 0.4);
    r[Numeric::baseline_sod] = rng.uniform(50.0, 300.0);
    r[Numeric::germination_potential_pct] = rng.uniform(10.0, 60.0);
    r[Numeric::germination_index] = rng.uniform(1.0, 20.0);
    r[Numeric::germination_days] = std::round(rng.uniform(3.0, 14.0));
    r[Numeric::plate_length_cm] = rng.uniform(5.0, 30.0);
    r[Numeric::plate_width_cm] = rng.uniform(5.0, 30.0);
    r[Numeric::plate_thickness_cm] = rng.uniform(0.1, 1.0);
    r[Numeric::plasma_temp_c] = rng.uniform(20.0, 60.0);
    r[Numeric::electrode_distance_cm] = rng.uniform(0.2, 3.0);
    r[Numeric::frequency_khz] = rng.uniform(1.0, 50.0);
    r[Numeric::pressure_kpa] = rng.uniform(0.1, 101.3);
    r[kSyntheticNoiseColumn] = rng.uniform(0.0, 10.0);
    r[Numeric::growing_temp_c] = rng.uniform(18.0, 30.0);
    r[Numeric::water_per_seed] = rng.uniform(0.1, 2.0);

    const double mean = hormetic_response(s, power, voltage, time, baseline);
    double uplift = mean + s.noise_sd * rng.normal();
    // Redraw the noise until the treated percentage is physically valid.
    while (baseline + uplift < 0.0 || baseline + uplift > 100.0) uplift = mean + s.noise_sd * rng.normal();
    r.treated_germination_pct = baseline + uplift;
    r.uplift_pct = compute_uplift(baseline + uplift, baseline);
    ds.records.push_back(std::move(r));
  }
  ds.fingerprint = sha256_hex(to_csv(ds));
  return ds;
}

}  // namespace uplift
