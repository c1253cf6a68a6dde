#include "binarray/network.hpp"

#include <fstream>

#include "binarray/error.hpp"

namespace binarray {

using nlohmann::json;

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDense: return "dense";
    case LayerKind::kDepthwise: return "depthwise";
    case LayerKind::kUnsupported: break;
  }
  return "unsupported";
}

namespace {

std::string where(const LayerSpec& l) { return "layer '" + l.name + "'"; }

std::size_t conv_extent(const LayerSpec& l, std::size_t in, std::size_t kernel, const char* axis) {
  const std::size_t padded = in + 2 * l.padding;
  if (kernel > padded) {
    throw ConfigError(where(l) + ": kernel " + axis + " " + std::to_string(kernel) +
                      " exceeds padded input " + std::to_string(padded));
  }
  if ((padded - kernel) % l.stride != 0) {
    throw ConfigError(where(l) + ": output " + axis + " (" + std::to_string(padded - kernel) + ")/" +
                      std::to_string(l.stride) + "+1 is not an integer");
  }
  return (padded - kernel) / l.stride + 1;
}

}  // namespace

std::size_t LayerSpec::out_width() const {
  if (!is_conv_like()) return 1;
  return conv_extent(*this, in_width, kernel_width, "width");
}

std::size_t LayerSpec::out_height() const {
  if (!is_conv_like()) return 1;
  return conv_extent(*this, in_height, kernel_height, "height");
}

std::size_t LayerSpec::coeffs_per_filter() const {
  switch (kind) {
    case LayerKind::kConv: return in_channels * kernel_width * kernel_height;
    case LayerKind::kDepthwise: return kernel_width * kernel_height;
    case LayerKind::kDense: return in_width * in_height * in_channels;
    case LayerKind::kUnsupported: break;
  }
  return 0;
}

void LayerSpec::validate() const {
  if (kind == LayerKind::kUnsupported) {
    throw ConfigError(where(*this) + ": unsupported layer kind '" + kind_text + "'");
  }
  for (const std::size_t v : {in_width, in_height, in_channels, kernel_width, kernel_height, out_channels,
                              stride, pool_width, pool_height, levels}) {
    if (v == 0) throw ConfigError(where(*this) + ": dimensions, stride, pooling and M must be >= 1");
  }
  in_format.validate();
  out_format.validate();
  if (kind == LayerKind::kDepthwise && out_channels != in_channels) {
    throw ConfigError(where(*this) + ": depth-wise layer needs D == C_I");
  }
  if (kind == LayerKind::kDense && (pool_width != 1 || pool_height != 1)) {
    throw ConfigError(where(*this) + ": dense layers cannot pool");
  }
  const std::size_t u = out_width();
  const std::size_t v = out_height();
  if (u % pool_width != 0 || v % pool_height != 0) {
    throw ConfigError(where(*this) + ": pooling " + std::to_string(pool_width) + "x" +
                      std::to_string(pool_height) + " does not divide conv output " + std::to_string(u) + "x" +
                      std::to_string(v) + " (downsampling only)");
  }
  const int shift = requant_shift();
  if (shift < 0 || shift > fxp::kMaxShift) {
    throw ConfigError(where(*this) + ": requantize shift " + std::to_string(shift) + " outside [0, 27]");
  }
}

void NetworkSpec::chain() {
  std::size_t w = in_width, h = in_height, c = in_channels;
  fxp::QFormat fmt = input_format;
  for (LayerSpec& l : layers) {
    l.in_format = fmt;
    if (l.kind == LayerKind::kDense) {
      l.in_width = 1;
      l.in_height = 1;
      l.in_channels = w * h * c;
    } else {
      l.in_width = w;
      l.in_height = h;
      l.in_channels = c;
    }
    if (l.kind == LayerKind::kDepthwise) l.out_channels = l.in_channels;
    if (l.kind == LayerKind::kUnsupported) continue;  // shape passes through
    if (l.is_conv_like()) {
      w = l.pooled_width();
      h = l.pooled_height();
    } else {
      w = 1;
      h = 1;
    }
    c = l.out_channels;
    fmt = l.out_format;
  }
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ConfigError("network '" + name + "' has no layers");
  if (in_width == 0 || in_height == 0 || in_channels == 0) throw ConfigError("network input dims must be >= 1");
  input_format.validate();
  for (const LayerSpec& l : layers) l.validate();
}

namespace {

fxp::QFormat parse_format(const json& j, fxp::QFormat fallback) {
  if (j.is_null()) return fallback;
  fxp::QFormat f;
  f.total_bits = j.value("bits", fxp::kDataWidth);
  f.frac_bits = j.value("frac", 0);
  f.validate();
  return f;
}

json format_json(fxp::QFormat f) { return {{"bits", f.total_bits}, {"frac", f.frac_bits}}; }

std::pair<std::size_t, std::size_t> parse_pair(const json& j, std::size_t fallback) {
  if (j.is_null()) return {fallback, fallback};
  if (j.is_number_unsigned()) return {j.get<std::size_t>(), j.get<std::size_t>()};
  if (j.is_array() && j.size() == 2) return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
  throw FormatError("expected an integer or [width, height] pair, got " + j.dump());
}

LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "dense") return LayerKind::kDense;
  if (s == "depthwise") return LayerKind::kDepthwise;
  return LayerKind::kUnsupported;
}

}  // namespace

NetworkSpec parse_network(const json& j) {
  try {
    NetworkSpec net;
    net.name = j.value("name", std::string("network"));
    const json& in = j.at("input");
    net.in_width = in.at("width").get<std::size_t>();
    net.in_height = in.at("height").get<std::size_t>();
    net.in_channels = in.at("channels").get<std::size_t>();
    net.input_format = parse_format(in.value("format", json()), fxp::QFormat::activation(7));

    std::size_t index = 0;
    for (const json& lj : j.at("layers")) {
      LayerSpec l;
      l.name = lj.value("name", "layer" + std::to_string(index));
      l.kind_text = lj.at("kind").get<std::string>();
      l.kind = parse_kind(l.kind_text);
      const auto [kw, kh] = parse_pair(lj.value("kernel", json()), 1);
      l.kernel_width = kw;
      l.kernel_height = kh;
      const auto [pw, ph] = parse_pair(lj.value("pool", json()), 1);
      l.pool_width = pw;
      l.pool_height = ph;
      l.stride = lj.value("stride", std::size_t{1});
      l.padding = lj.value("padding", std::size_t{0});
      l.levels = lj.value("levels", std::size_t{2});
      if (l.kind == LayerKind::kDense) {
        l.out_channels = lj.at("units").get<std::size_t>();
      } else if (l.kind == LayerKind::kConv) {
        l.out_channels = lj.at("filters").get<std::size_t>();
      }
      const std::string act = lj.value("activation", std::string(l.kind == LayerKind::kDense ? "none" : "relu"));
      if (act == "relu") {
        l.activation = Activation::kRelu;
      } else if (act == "none") {
        l.activation = Activation::kNone;
      } else {
        throw FormatError("layer '" + l.name + "': unknown activation '" + act + "'");
      }
      l.out_format = parse_format(lj.value("format", json()), fxp::QFormat::activation(7));
      l.alpha_frac = lj.value("alpha_frac", 6);
      net.layers.push_back(std::move(l));
      ++index;
    }
    net.chain();
    return net;
  } catch (const json::exception& e) {
    throw FormatError(std::string("network spec: ") + e.what());
  }
}

json to_json(const NetworkSpec& net) {
  json layers = json::array();
  for (const LayerSpec& l : net.layers) {
    json lj;
    lj["name"] = l.name;
    lj["kind"] = l.kind == LayerKind::kUnsupported ? l.kind_text : std::string(layer_kind_name(l.kind));
    if (l.kind == LayerKind::kDense) {
      lj["units"] = l.out_channels;
    } else {
      lj["kernel"] = {l.kernel_width, l.kernel_height};
      if (l.kind == LayerKind::kConv) lj["filters"] = l.out_channels;
      lj["stride"] = l.stride;
      lj["padding"] = l.padding;
      lj["pool"] = {l.pool_width, l.pool_height};
    }
    lj["levels"] = l.levels;
    lj["activation"] = l.activation == Activation::kRelu ? "relu" : "none";
    lj["format"] = format_json(l.out_format);
    lj["alpha_frac"] = l.alpha_frac;
    layers.push_back(std::move(lj));
  }
  return {{"name", net.name},
          {"input",
           {{"width", net.in_width},
            {"height", net.in_height},
            {"channels", net.in_channels},
            {"format", format_json(net.input_format)}}},
          {"layers", std::move(layers)}};
}

NetworkSpec load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open network file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return parse_network(j);
}

void save_network(const NetworkSpec& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << to_json(net).dump(2) << "\n";
}

}  // namespace binarray
