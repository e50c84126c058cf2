#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qkdlab/topology.hpp"

namespace qkdlab {

enum class Medium { fiber, free_space };

const char* medium_name(Medium m);
Medium medium_from_name(const std::string& name);

/// BB84 physical-layer configuration for one link simulation.
struct ChannelParams {
  double wavelength_nm = 1550.0;
  double fiber_loss_db_per_km = 0.2;
  double detector_efficiency = 0.10;
  double dark_count_prob = 1e-6;  ///< per pulse, per detector
  double mean_photon_number = 0.1;
  long pulses_per_measurement = 10000;
  double pulse_rate_hz = 1e6;
  double misalignment_error = 0.05;
  double free_space_probability = 0.2;
  double visibility_km = 20.0;
  double error_correction_efficiency = 1.1;
  double security_sample_fraction = 0.5;

  void validate() const;
};

/// Per-link simulation outputs.
struct ChannelMetrics {
  double distance_km = 0.0;
  double loss_db = 0.0;
  double transmittance = 1.0;
  double qber = 0.0;
  double sifted_rate_bps = 0.0;
  double secure_key_rate_bps = 0.0;
  Medium medium = Medium::fiber;
  bool no_key = false;  ///< zero sifted bits; qber holds the 0.5 sentinel
};

/// Binary entropy h2(p) = -p log2 p - (1-p) log2 (1-p), h2(0) = h2(1) = 0.
double binary_entropy(double p);

/// Kruse atmospheric attenuation in dB/km at the given wavelength and
/// visibility (2% contrast constant, piecewise size-distribution exponent).
double kruse_attenuation_db_per_km(double wavelength_nm, double visibility_km);

/// Fiber: fiber_loss_db_per_km × distance. Free space: Kruse coefficient ×
/// distance. Throws on negative distance.
double link_loss_db(double distance_km, Medium medium, const ChannelParams& p);

/// Probability that a pulse produces a click on Bob's side:
/// p_signal + p_dark_total - p_signal·p_dark_total with
/// p_signal = 1 - exp(-mu·T·eta) and p_dark_total = 2·dark_count_prob.
double detection_probability(double distance_km, Medium medium,
                             const ChannelParams& p);

/// Closed-form per-pulse quantities; the Monte-Carlo estimates in
/// simulate_bb84 concentrate around these.
struct ExpectedChannel {
  double loss_db;
  double transmittance;
  double p_signal;
  double p_dark_total;
  double p_click;
  double error_prob;  ///< per sifted click
  double qber;
  double sifted_rate_bps;
  double secure_key_rate_bps;
};
ExpectedChannel expected_metrics(double distance_km, Medium medium,
                                 const ChannelParams& p);

/// Monte-Carlo BB84 over pulses_per_measurement pulses; deterministic per
/// (params, distance, medium, seed). Zero sifted bits yields the no-key
/// sentinel (qber 0.5, zero rates).
ChannelMetrics simulate_bb84(double distance_km, Medium medium,
                             const ChannelParams& p, std::uint64_t seed);

/// Bernoulli(free_space_probability) per edge, derived from (seed, u, v) so
/// the draw does not depend on edge enumeration order.
Medium assign_medium(int u, int v, const ChannelParams& p, std::uint64_t seed);

/// A topology whose links carry channel metrics.
struct QkdNetwork {
  NetworkTopology topology;
  std::vector<ChannelMetrics> link_metrics;  ///< aligned with topology.links
  ChannelParams channel;
  std::uint64_t channel_seed = 0;

  double total_key_rate_bps() const;
};

QkdNetwork simulate_network(NetworkTopology topology, const ChannelParams& p,
                            std::uint64_t seed);

std::string network_to_json_string(const QkdNetwork& n);
void save_network_json(const std::string& path, const QkdNetwork& n);
QkdNetwork load_network_json(const std::string& path);

}  // namespace qkdlab
