#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace omniscan::net {

inline constexpr std::array<std::size_t, 3> kStrides{8, 16, 32};

struct NetConfig {
  std::size_t input_size = 320;
  double width = 1.0;          // scales the {32, 64, 128, 256, 512} stage widths
  std::size_t csp_depth = 1;   // bottlenecks per CSP block
  std::size_t states = 8;      // SSM state size inside every VSS block
  std::size_t class_count = 7;
  std::size_t head_width = 0;  // 0: the stride-8 channel count
  bool vss_p3 = true, vss_p4 = true, vss_p5 = true;
  std::size_t scan_chunk = 0;  // 0: scan_vectorized
  double iou_weight = 1.0, obj_weight = 1.0, cls_weight = 1.0;
  double conf_threshold = 0.5, nms_iou = 0.5;
  unsigned long long seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Stem and the four stage widths; each a multiple of 4 and doubling per stage.
  std::array<std::size_t, 5> widths() const;
  std::size_t hidden() const { return head_width ? head_width : widths()[2]; }

  static NetConfig tiny();
};

/// key=value view of every field, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_fields(const NetConfig& c);

/// Sets one field from its text form. Returns false for an unknown key;
/// throws std::invalid_argument for a malformed value.
bool set_config_field(NetConfig& c, const std::string& key, const std::string& value);

bool operator==(const NetConfig& a, const NetConfig& b);

/// Text parsers shared by the flat config formats; errors name the key.
namespace fields {
std::size_t parse_size(const std::string& key, const std::string& v);
double parse_double(const std::string& key, const std::string& v);
bool parse_bool(const std::string& key, const std::string& v);
/// Round-trippable decimal form.
std::string format(double v);
}  // namespace fields

}  // namespace omniscan::net
