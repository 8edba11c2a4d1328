#include "omniscan/net/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace omniscan::net {

namespace fields {

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(out))
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument(key + ": expected true/false, got '" + v + "'");
}

std::string format(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace fields

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void NetConfig::validate() const {
  require(input_size >= 32 && input_size % 32 == 0,
          "input_size must be a positive multiple of 32, got " + std::to_string(input_size));
  require(width > 0 && std::isfinite(width), "width must be positive");
  require(class_count >= 1, "class_count must be at least 1");
  require(states >= 1, "states must be at least 1");
  require(hidden() >= 1, "head_width must be positive");
  require(iou_weight >= 0 && obj_weight >= 0 && cls_weight >= 0, "loss weights must be non-negative");
  require(conf_threshold >= 0 && conf_threshold <= 1, "conf_threshold must lie in [0, 1]");
  require(nms_iou >= 0 && nms_iou <= 1, "nms_iou must lie in [0, 1]");
}

std::array<std::size_t, 5> NetConfig::widths() const {
  const auto stem = static_cast<std::size_t>(std::max(1.0, std::round(32.0 * width / 4.0))) * 4;
  return {stem, 2 * stem, 4 * stem, 8 * stem, 16 * stem};
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.input_size = 160;
  c.width = 0.25;
  c.states = 4;
  return c;
}

std::vector<std::pair<std::string, std::string>> config_fields(const NetConfig& c) {
  return {{"input_size", std::to_string(c.input_size)},
          {"width", fields::format(c.width)},
          {"csp_depth", std::to_string(c.csp_depth)},
          {"states", std::to_string(c.states)},
          {"class_count", std::to_string(c.class_count)},
          {"head_width", std::to_string(c.head_width)},
          {"vss_p3", c.vss_p3 ? "true" : "false"},
          {"vss_p4", c.vss_p4 ? "true" : "false"},
          {"vss_p5", c.vss_p5 ? "true" : "false"},
          {"scan_chunk", std::to_string(c.scan_chunk)},
          {"iou_weight", fields::format(c.iou_weight)},
          {"obj_weight", fields::format(c.obj_weight)},
          {"cls_weight", fields::format(c.cls_weight)},
          {"conf_threshold", fields::format(c.conf_threshold)},
          {"nms_iou", fields::format(c.nms_iou)},
          {"seed", std::to_string(c.seed)}};
}

bool set_config_field(NetConfig& c, const std::string& key, const std::string& value) {
  if (key == "input_size") c.input_size = fields::parse_size(key, value);
  else if (key == "width") c.width = fields::parse_double(key, value);
  else if (key == "csp_depth") c.csp_depth = fields::parse_size(key, value);
  else if (key == "states") c.states = fields::parse_size(key, value);
  else if (key == "class_count") c.class_count = fields::parse_size(key, value);
  else if (key == "head_width") c.head_width = fields::parse_size(key, value);
  else if (key == "vss_p3") c.vss_p3 = fields::parse_bool(key, value);
  else if (key == "vss_p4") c.vss_p4 = fields::parse_bool(key, value);
  else if (key == "vss_p5") c.vss_p5 = fields::parse_bool(key, value);
  else if (key == "scan_chunk") c.scan_chunk = fields::parse_size(key, value);
  else if (key == "iou_weight") c.iou_weight = fields::parse_double(key, value);
  else if (key == "obj_weight") c.obj_weight = fields::parse_double(key, value);
  else if (key == "cls_weight") c.cls_weight = fields::parse_double(key, value);
  else if (key == "conf_threshold") c.conf_threshold = fields::parse_double(key, value);
  else if (key == "nms_iou") c.nms_iou = fields::parse_double(key, value);
  else if (key == "seed") c.seed = fields::parse_size(key, value);
  else return false;
  return true;
}

bool operator==(const NetConfig& a, const NetConfig& b) { return config_fields(a) == config_fields(b); }

}  // namespace omniscan::net
