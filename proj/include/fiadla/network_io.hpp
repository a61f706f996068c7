#pragma once

// Structured-text (JSON) serialization of Network. Schema in docs/formats.md.

#include <filesystem>
#include <string>

#include "fiadla/fxp.hpp"
#include "json.hpp"

namespace fiadla {

inline constexpr const char* kNetworkFormat = "fiadla-network/1";

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

Network load_network(const std::filesystem::path& path);
void save_network(const Network& net, const std::filesystem::path& path);

nlohmann::json to_json(const FxpTensor& t);
FxpTensor tensor_from_json(const nlohmann::json& j);

}  // namespace fiadla
