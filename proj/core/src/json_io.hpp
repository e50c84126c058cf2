#pragma once

// Internal JSON helpers shared between core translation units. The public
// headers expose only path/string based I/O.

#include <json.hpp>

#include "qkdlab/channel.hpp"
#include "qkdlab/topology.hpp"

namespace qkdlab {

nlohmann::json topology_to_json(const NetworkTopology& t);
NetworkTopology topology_from_json(const nlohmann::json& j);

nlohmann::json channel_params_json(const ChannelParams& p);
ChannelParams channel_params_from(const nlohmann::json& j);

}  // namespace qkdlab
