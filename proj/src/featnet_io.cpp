#include "lkreg/featnet.hpp"

#include "lkreg/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace lkreg {

namespace {

using nlohmann::json;

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j, const std::string& field, Eigen::Index expected) {
  if (!j.is_array()) throw ConfigError(field + " must be an array");
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != expected)
    throw ConfigError(field + " has " + std::to_string(values.size()) + " entries, expected " +
                      std::to_string(expected));
  return Eigen::Map<const Eigen::VectorXd>(values.data(), expected);
}

}  // namespace

std::string weights_to_json(const FeatureNet& net) {
  json j;
  j["format_version"] = kWeightFormatVersion;
  j["widths"] = net.widths();
  j["K"] = net.feature_dim();
  j["mode"] = net.mode() == NetMode::kTrain ? "train" : "inference";
  json layers = json::array();
  for (const Layer& l : net.layers()) {
    std::vector<double> a;
    a.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.out(); ++r)
      for (Eigen::Index c = 0; c < l.in(); ++c) a.push_back(l.weight(r, c));
    layers.push_back({{"A", a},
                      {"b", vec_json(l.bias)},
                      {"bn_scale", vec_json(l.bn_scale)},
                      {"bn_shift", vec_json(l.bn_shift)},
                      {"bn_mean", vec_json(l.bn_mean)},
                      {"bn_var", vec_json(l.bn_var)}});
  }
  j["layers"] = layers;
  return j.dump();
}

FeatureNet weights_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("weight file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.contains("format_version") || j["format_version"].get<int>() != kWeightFormatVersion)
      throw ConfigError("unsupported weight format_version");
    const auto widths = j.at("widths").get<std::vector<int>>();
    const auto& layers_json = j.at("layers");
    if (widths.size() != layers_json.size() + 1) throw ConfigError("widths do not match layer count");
    if (j.contains("K") && j["K"].get<long>() != widths.back()) throw ConfigError("K does not match widths");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l < layers_json.size(); ++l) {
      const json& lj = layers_json[l];
      const std::string at = "layers[" + std::to_string(l) + "].";
      const Eigen::Index in = widths[l], out = widths[l + 1];
      Layer layer;
      const Eigen::VectorXd a = vec_from(lj.at("A"), at + "A", in * out);
      layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          a.data(), out, in);
      layer.bias = vec_from(lj.at("b"), at + "b", out);
      layer.bn_scale = vec_from(lj.at("bn_scale"), at + "bn_scale", out);
      layer.bn_shift = vec_from(lj.at("bn_shift"), at + "bn_shift", out);
      layer.bn_mean = vec_from(lj.at("bn_mean"), at + "bn_mean", out);
      layer.bn_var = vec_from(lj.at("bn_var"), at + "bn_var", out);
      layers.push_back(std::move(layer));
    }
    const std::string mode = j.value("mode", "inference");
    if (mode != "train" && mode != "inference") throw ConfigError("mode must be train or inference");
    return FeatureNet(std::move(layers), mode == "train" ? NetMode::kTrain : NetMode::kInference);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed weight file: ") + e.what());
  }
}

void save_weights(const FeatureNet& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << weights_to_json(net) << '\n';
}

FeatureNet load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return weights_from_json(ss.str());
}

}  // namespace lkreg
