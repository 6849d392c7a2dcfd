#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trajnet/model.hpp"
#include "trajnet/text.hpp"

// Layout:
//   TRAJNET-CHECKPOINT version=1 key=value ...\n
//   per parameter: "<name> <d0> [<d1> ...]\n" then 8 bytes per value
//   (little-endian IEEE-754 binary64), then "\n"
//   end\n

namespace trajnet {

namespace {

constexpr std::string_view kMagic = "TRAJNET-CHECKPOINT";

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw CheckpointError("malformed checkpoint: truncated at byte " + std::to_string(pos_));
    auto out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("malformed checkpoint: parameter data truncated");
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model& model) {
  std::string out(kMagic);
  out += " version=" + std::to_string(kCheckpointVersion);
  for (const auto& [k, v] : model.config().to_pairs()) out += " " + k + "=" + v;
  out += '\n';
  for (const auto& p : model.parameters()) {
    out += p.name;
    for (auto d : p.value.shape()) out += " " + std::to_string(d);
    out += '\n';
    for (double v : p.value.data()) put_le(out, v);
    out += '\n';
  }
  out += "end\n";
  return out;
}

Model decode_checkpoint(std::string_view bytes) {
  Reader in(bytes);
  const auto header = text::split(in.line(), ' ');
  if (header.empty() || header[0] != kMagic) throw CheckpointError("malformed checkpoint: missing header");
  std::map<std::string, std::string> pairs;
  std::optional<std::string> version;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto eq = header[i].find('=');
    if (eq == std::string_view::npos) throw CheckpointError("malformed checkpoint: bad header field '" + std::string(header[i]) + "'");
    std::string key(header[i].substr(0, eq)), value(header[i].substr(eq + 1));
    if (key == "version") version = value;
    else pairs[key] = value;
  }
  if (!version) throw CheckpointError("malformed checkpoint: header has no version");
  if (*version != std::to_string(kCheckpointVersion)) {
    throw CheckpointError("checkpoint version " + *version + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_pairs(pairs);
    cfg.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }

  std::vector<Parameter> params;
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    const auto fields = text::split(in.line(), ' ');
    Shape got;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      auto d = text::parse_uint(fields[i]);
      if (!d || *d == 0) throw CheckpointError("malformed checkpoint: bad shape for '" + std::string(fields[0]) + "'");
      got.push_back(*d);
    }
    if (fields[0] != name || got != shape) {
      throw CheckpointError("checkpoint parameter '" + std::string(fields[0]) + "' " + to_string(got) +
                            " does not match config layout '" + name + "' " + to_string(shape));
    }
    Tensor value(shape);
    const auto raw = in.take(value.size() * 8);
    for (std::size_t i = 0; i < value.size(); ++i) value[i] = get_le(raw.data() + 8 * i);
    if (in.take(1) != "\n") throw CheckpointError("malformed checkpoint: missing block terminator after '" + name + "'");
    params.emplace_back(name, std::move(value));
  }
  if (in.line() != "end" || !in.done()) throw CheckpointError("malformed checkpoint: unexpected trailing content");
  return Model(cfg, std::move(params));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace trajnet
