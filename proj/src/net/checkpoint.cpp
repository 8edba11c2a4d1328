#include "omniscan/net/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace omniscan::net {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_string(std::istream& is, std::uint32_t limit) {
  const auto n = get_u32(is);
  if (n > limit) throw FormatError("checkpoint string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw FormatError("checkpoint truncated");
  return s;
}

std::string config_text(const NetConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_fields(c)) out += k + "=" + v + "\n";
  return out;
}

NetConfig parse_config_text(const std::string& text) {
  NetConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint config line without '=': " + line);
    try {
      if (!set_config_field(c, line.substr(0, eq), line.substr(eq + 1)))
        throw FormatError("checkpoint config has unknown key " + line.substr(0, eq));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("checkpoint config: ") + e.what());
    }
  }
  return c;
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".manifest";
  return p;
}

void save_checkpoint(const std::filesystem::path& path, Detector<float>& model) {
  const auto params = model.parameters();
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    const auto text = config_text(model.config());
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      put_u32(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      write_tensor(os, p.var->value());
    }
    if (!os) throw FormatError("failed writing " + path.string());
  }
  std::ofstream m(manifest_path(path));
  if (!m) throw FormatError("cannot open " + manifest_path(path).string() + " for writing");
  m << "# config\n" << config_text(model.config()) << "# parameters (" << params.size() << ", "
    << count_params(params) << " values)\n";
  for (const auto& p : params) m << p.name << ' ' << shape_str(p.var->shape()) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  Checkpoint ck;
  ck.config = parse_config_text(get_string(is, 1 << 16));
  const auto count = get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = get_string(is, 1 << 12);
    auto t = read_tensor(is);
    if (!ck.tensors.emplace(name, std::move(t)).second) throw FormatError("duplicate checkpoint entry " + name);
  }
  return ck;
}

void apply_checkpoint(Detector<float>& model, const Checkpoint& ck) {
  auto params = model.parameters();
  std::set<std::string> used;
  for (auto& p : params) {
    auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) throw FormatError("checkpoint/config mismatch: missing entry " + p.name);
    if (it->second.shape() != p.var->shape())
      throw FormatError("checkpoint/config mismatch: " + p.name + " has shape " + shape_str(it->second.shape()) +
                        ", model expects " + shape_str(p.var->shape()));
    p.var->mutable_value() = it->second;
    used.insert(p.name);
  }
  if (used.size() != ck.tensors.size()) {
    for (const auto& [name, t] : ck.tensors)
      if (!used.count(name)) throw FormatError("checkpoint/config mismatch: unexpected entry " + name);
  }
}

Detector<float> load_detector(const std::filesystem::path& path) {
  const auto ck = load_checkpoint(path);
  Detector<float> model(ck.config);
  apply_checkpoint(model, ck);
  return model;
}

}  // namespace omniscan::net
