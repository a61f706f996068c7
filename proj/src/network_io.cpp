#include "fiadla/network_io.hpp"

#include <fstream>

namespace fiadla {

using nlohmann::json;

json to_json(const FxpTensor& t) {
  json data = json::array();
  for (auto v : t.data) data.push_back(static_cast<int>(v));
  return json{{"dims", t.dims}, {"frac_bits", t.frac_bits}, {"data", std::move(data)}};
}

FxpTensor tensor_from_json(const json& j) {
  std::vector<std::int8_t> data;
  for (const auto& v : j.at("data")) {
    const int x = v.get<int>();
    if (x < -128 || x > 127) throw ShapeError("tensor element " + std::to_string(x) + " outside int8");
    data.push_back(static_cast<std::int8_t>(x));
  }
  return FxpTensor(j.at("dims").get<std::vector<int>>(), std::move(data),
                   j.at("frac_bits").get<int>());
}

json to_json(const Network& net) {
  json layers = json::array();
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    json entry{{"kind", to_string(l.kind)},
               {"kernel", l.kernel},
               {"stride", l.stride},
               {"padding", l.padding},
               {"in_channels", l.in_channels},
               {"out_channels", l.out_channels},
               {"activation", to_string(l.activation)},
               {"requant_shift", l.requant_shift},
               {"weights", to_json(net.weights[i])}};
    const auto bias = net.bias(i);
    if (!bias.empty()) entry["bias"] = std::vector<std::int32_t>(bias.begin(), bias.end());
    layers.push_back(std::move(entry));
  }
  return json{{"format", kNetworkFormat},
              {"name", net.name},
              {"input", {{"dims", net.input_dims}, {"frac_bits", net.input_frac_bits}}},
              {"layers", std::move(layers)}};
}

Network network_from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != kNetworkFormat) {
      throw ShapeError(std::string("network file format must be '") + kNetworkFormat + "'");
    }
    Network net;
    net.name = j.at("name").get<std::string>();
    net.input_dims = j.at("input").at("dims").get<std::vector<int>>();
    net.input_frac_bits = j.at("input").at("frac_bits").get<int>();
    bool any_bias = false;
    for (const auto& e : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(e.at("kind").get<std::string>());
      l.kernel = e.value("kernel", 1);
      l.stride = e.value("stride", 1);
      l.padding = e.value("padding", 0);
      l.in_channels = e.at("in_channels").get<int>();
      l.out_channels = e.at("out_channels").get<int>();
      l.activation = activation_from_string(e.value("activation", std::string("none")));
      l.requant_shift = e.value("requant_shift", 0);
      net.layers.push_back(l);
      net.weights.push_back(tensor_from_json(e.at("weights")));
      net.biases.push_back(e.value("bias", std::vector<std::int32_t>{}));
      any_bias = any_bias || !net.biases.back().empty();
    }
    if (!any_bias) net.biases.clear();
    net.validate();
    return net;
  } catch (const json::exception& e) {
    throw ShapeError(std::string("malformed network description: ") + e.what());
  }
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return network_from_json(j);
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write network file " + path.string());
  out << to_json(net).dump(1) << '\n';
}

}  // namespace fiadla
