#include "qkdlab/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json_io.hpp"
#include "qkdlab/rng.hpp"

namespace qkdlab {

const char* medium_name(Medium m) {
  return m == Medium::fiber ? "fiber" : "free_space";
}

Medium medium_from_name(const std::string& name) {
  if (name == "fiber") return Medium::fiber;
  if (name == "free_space") return Medium::free_space;
  throw std::invalid_argument("unknown medium: " + name);
}

void ChannelParams::validate() const {
  if (!(wavelength_nm > 0.0)) throw std::invalid_argument("channel: wavelength_nm must be positive");
  if (!(fiber_loss_db_per_km >= 0.0)) throw std::invalid_argument("channel: fiber loss must be >= 0");
  if (!(detector_efficiency > 0.0 && detector_efficiency <= 1.0))
    throw std::invalid_argument("channel: detector_efficiency must lie in (0,1]");
  if (!(dark_count_prob >= 0.0 && dark_count_prob < 1.0))
    throw std::invalid_argument("channel: dark_count_prob must lie in [0,1)");
  if (!(mean_photon_number > 0.0))
    throw std::invalid_argument("channel: mean_photon_number must be positive");
  if (pulses_per_measurement < 1)
    throw std::invalid_argument("channel: pulses_per_measurement must be >= 1");
  if (!(pulse_rate_hz > 0.0)) throw std::invalid_argument("channel: pulse_rate_hz must be positive");
  if (!(misalignment_error >= 0.0 && misalignment_error < 0.5))
    throw std::invalid_argument("channel: misalignment_error must lie in [0,0.5)");
  if (!(free_space_probability >= 0.0 && free_space_probability <= 1.0))
    throw std::invalid_argument("channel: free_space_probability must lie in [0,1]");
  if (!(visibility_km > 0.0)) throw std::invalid_argument("channel: visibility_km must be positive");
  if (!(error_correction_efficiency >= 1.0))
    throw std::invalid_argument("channel: error_correction_efficiency must be >= 1");
  if (!(security_sample_fraction > 0.0 && security_sample_fraction < 1.0))
    throw std::invalid_argument("channel: security_sample_fraction must lie in (0,1)");
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double kruse_attenuation_db_per_km(double wavelength_nm, double visibility_km) {
  // Size-distribution exponent: 1.6 for high visibility, 1.3 for average,
  // 0.585 V^(1/3) below 6 km.
  double q;
  if (visibility_km > 50.0)
    q = 1.6;
  else if (visibility_km > 6.0)
    q = 1.3;
  else
    q = 0.585 * std::cbrt(visibility_km);
  // 17/V dB/km at the 550 nm reference (2% contrast visibility).
  return (17.0 / visibility_km) * std::pow(wavelength_nm / 550.0, -q);
}

double link_loss_db(double distance_km, Medium medium, const ChannelParams& p) {
  if (distance_km < 0.0) throw std::invalid_argument("link_loss: negative distance");
  double coeff = medium == Medium::fiber
                     ? p.fiber_loss_db_per_km
                     : kruse_attenuation_db_per_km(p.wavelength_nm, p.visibility_km);
  return coeff * distance_km;
}

ExpectedChannel expected_metrics(double distance_km, Medium medium,
                                 const ChannelParams& p) {
  p.validate();
  ExpectedChannel e;
  e.loss_db = link_loss_db(distance_km, medium, p);
  e.transmittance = std::pow(10.0, -e.loss_db / 10.0);
  // Poisson emission thinned by transmittance × efficiency: at least one
  // surviving photon with probability 1 - exp(-mu·T·eta).
  e.p_signal = 1.0 - std::exp(-p.mean_photon_number * e.transmittance *
                              p.detector_efficiency);
  e.p_dark_total = std::min(1.0, 2.0 * p.dark_count_prob);
  e.p_click = e.p_signal + e.p_dark_total - e.p_signal * e.p_dark_total;
  if (e.p_click > 0.0) {
    e.error_prob = (0.5 * e.p_dark_total + p.misalignment_error * e.p_signal) / e.p_click;
    e.error_prob = std::clamp(e.error_prob, 0.0, 0.5);
  } else {
    e.error_prob = 0.0;
  }
  e.qber = e.error_prob;
  e.sifted_rate_bps = p.pulse_rate_hz * e.p_click * 0.5;
  double secure_fraction =
      std::max(0.0, 1.0 - (1.0 + p.error_correction_efficiency) * binary_entropy(e.qber));
  e.secure_key_rate_bps = e.sifted_rate_bps * secure_fraction;
  return e;
}

double detection_probability(double distance_km, Medium medium,
                             const ChannelParams& p) {
  return expected_metrics(distance_km, medium, p).p_click;
}

ChannelMetrics simulate_bb84(double distance_km, Medium medium,
                             const ChannelParams& p, std::uint64_t seed) {
  const ExpectedChannel exp = expected_metrics(distance_km, medium, p);

  Rng rng(seed);
  long sifted = 0;
  long errors_total = 0;
  long compared = 0;
  long discordant = 0;
  for (long pulse = 0; pulse < p.pulses_per_measurement; ++pulse) {
    if (!rng.bernoulli(exp.p_click)) continue;
    if (!rng.bernoulli(0.5)) continue;  // basis reconciliation
    ++sifted;
    bool err = rng.bernoulli(exp.error_prob);
    errors_total += err;
    if (rng.bernoulli(p.security_sample_fraction)) {
      ++compared;
      discordant += err;
    }
  }

  ChannelMetrics m;
  m.distance_km = distance_km;
  m.loss_db = exp.loss_db;
  m.transmittance = exp.transmittance;
  m.medium = medium;
  if (sifted == 0) {
    m.no_key = true;
    m.qber = 0.5;
    m.sifted_rate_bps = 0.0;
    m.secure_key_rate_bps = 0.0;
    return m;
  }
  // QBER over the compared sample; when the sample came out empty, fall back
  // to comparing every sifted bit.
  m.qber = compared > 0 ? static_cast<double>(discordant) / compared
                        : static_cast<double>(errors_total) / sifted;
  m.sifted_rate_bps =
      p.pulse_rate_hz * static_cast<double>(sifted) / p.pulses_per_measurement;
  double secure_fraction =
      std::max(0.0, 1.0 - (1.0 + p.error_correction_efficiency) * binary_entropy(m.qber));
  m.secure_key_rate_bps = m.sifted_rate_bps * secure_fraction;
  return m;
}

Medium assign_medium(int u, int v, const ChannelParams& p, std::uint64_t seed) {
  Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(u), static_cast<std::uint64_t>(v)));
  return rng.bernoulli(p.free_space_probability) ? Medium::free_space : Medium::fiber;
}

double QkdNetwork::total_key_rate_bps() const {
  double total = 0.0;
  for (const ChannelMetrics& m : link_metrics) total += m.secure_key_rate_bps;
  return total;
}

QkdNetwork simulate_network(NetworkTopology topology, const ChannelParams& p,
                            std::uint64_t seed) {
  p.validate();
  QkdNetwork net;
  net.channel = p;
  net.channel_seed = seed;
  net.link_metrics.reserve(topology.links.size());
  for (const Link& l : topology.links) {
    Medium medium = assign_medium(l.u, l.v, p, seed);
    std::uint64_t link_seed = Rng::mix(seed, static_cast<std::uint64_t>(l.u),
                                       static_cast<std::uint64_t>(l.v) + 0x51edULL);
    net.link_metrics.push_back(simulate_bb84(l.distance_km, medium, p, link_seed));
  }
  net.topology = std::move(topology);
  return net;
}

namespace {

nlohmann::json channel_params_to_json(const ChannelParams& p) {
  return nlohmann::json{
      {"wavelength_nm", p.wavelength_nm},
      {"fiber_loss_db_per_km", p.fiber_loss_db_per_km},
      {"detector_efficiency", p.detector_efficiency},
      {"dark_count_prob", p.dark_count_prob},
      {"mean_photon_number", p.mean_photon_number},
      {"pulses_per_measurement", p.pulses_per_measurement},
      {"pulse_rate_hz", p.pulse_rate_hz},
      {"misalignment_error", p.misalignment_error},
      {"free_space_probability", p.free_space_probability},
      {"visibility_km", p.visibility_km},
      {"error_correction_efficiency", p.error_correction_efficiency},
      {"security_sample_fraction", p.security_sample_fraction},
  };
}

ChannelParams channel_params_from_json(const nlohmann::json& j) {
  ChannelParams p;
  p.wavelength_nm = j.value("wavelength_nm", p.wavelength_nm);
  p.fiber_loss_db_per_km = j.value("fiber_loss_db_per_km", p.fiber_loss_db_per_km);
  p.detector_efficiency = j.value("detector_efficiency", p.detector_efficiency);
  p.dark_count_prob = j.value("dark_count_prob", p.dark_count_prob);
  p.mean_photon_number = j.value("mean_photon_number", p.mean_photon_number);
  p.pulses_per_measurement = j.value("pulses_per_measurement", p.pulses_per_measurement);
  p.pulse_rate_hz = j.value("pulse_rate_hz", p.pulse_rate_hz);
  p.misalignment_error = j.value("misalignment_error", p.misalignment_error);
  p.free_space_probability = j.value("free_space_probability", p.free_space_probability);
  p.visibility_km = j.value("visibility_km", p.visibility_km);
  p.error_correction_efficiency =
      j.value("error_correction_efficiency", p.error_correction_efficiency);
  p.security_sample_fraction =
      j.value("security_sample_fraction", p.security_sample_fraction);
  return p;
}

}  // namespace

nlohmann::json channel_params_json(const ChannelParams& p) {
  return channel_params_to_json(p);
}

ChannelParams channel_params_from(const nlohmann::json& j) {
  return channel_params_from_json(j);
}

std::string network_to_json_string(const QkdNetwork& n) {
  nlohmann::json j = topology_to_json(n.topology);
  j["meta"]["channel"] = channel_params_to_json(n.channel);
  j["meta"]["channel_seed"] = n.channel_seed;
  auto& edges = j["edges"];
  for (std::size_t i = 0; i < n.link_metrics.size(); ++i) {
    const ChannelMetrics& m = n.link_metrics[i];
    edges[i]["loss_db"] = m.loss_db;
    edges[i]["qber"] = m.qber;
    edges[i]["key_rate_bps"] = m.secure_key_rate_bps;
    edges[i]["sifted_rate_bps"] = m.sifted_rate_bps;
    edges[i]["medium"] = medium_name(m.medium);
    edges[i]["no_key"] = m.no_key;
  }
  return j.dump(2) + "\n";
}

void save_network_json(const std::string& path, const QkdNetwork& n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << network_to_json_string(n);
}

QkdNetwork load_network_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  in >> j;

  QkdNetwork net;
  net.topology = topology_from_json(j);
  const auto& meta = j.at("meta");
  if (!meta.contains("channel"))
    throw std::invalid_argument("network json: missing channel metrics; run simulate first");
  net.channel = channel_params_from_json(meta.at("channel"));
  net.channel_seed = meta.value("channel_seed", std::uint64_t{0});

  net.link_metrics.resize(net.topology.links.size());
  for (const auto& e : j.at("edges")) {
    int u = e.at("u").get<int>();
    int v = e.at("v").get<int>();
    int idx = net.topology.link_index(u, v);
    if (idx < 0) continue;
    ChannelMetrics m;
    m.distance_km = net.topology.links[idx].distance_km;
    m.loss_db = e.at("loss_db").get<double>();
    m.transmittance = std::pow(10.0, -m.loss_db / 10.0);
    m.qber = e.at("qber").get<double>();
    m.secure_key_rate_bps = e.at("key_rate_bps").get<double>();
    m.sifted_rate_bps = e.value("sifted_rate_bps", 0.0);
    m.medium = medium_from_name(e.at("medium").get<std::string>());
    m.no_key = e.value("no_key", false);
    net.link_metrics[idx] = m;
  }
  return net;
}

}  // namespace qkdlab
