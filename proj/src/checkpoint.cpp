#include <cstring>

#include "membridge/detail/bytes.hpp"
#include "membridge/error.hpp"
#include "membridge/memory_bridge.hpp"

namespace membridge {

namespace {
constexpr char kCheckpointMagic[4] = {'M', 'B', 'C', 'K'};
}  // namespace

std::vector<std::uint8_t> write_checkpoint(const ParamStore& params) {
  detail::ByteWriter w;
  w.put_tag(kCheckpointMagic);
  w.put_uint<std::uint16_t>(kCheckpointVersion);
  w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    for (char c : name) w.put_uint<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.put_uint<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.put_uint<std::uint64_t>(e);
    for (double v : t.values()) w.put_f64(v);
  }
  return w.take();
}

ParamStore read_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorKind::Format, "not a checkpoint");
  detail::ByteReader r(bytes.subspan(4));
  if (r.get_uint<std::uint16_t>() != kCheckpointVersion)
    fail(ErrorKind::Format, "unsupported version");
  const auto count = r.get_uint<std::uint32_t>();
  ParamStore params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get_uint<std::uint32_t>();
    const auto raw = r.get_bytes(name_len);
    std::string name(raw.begin(), raw.end());
    const auto rank = r.get_uint<std::uint32_t>();
    require(rank <= 8, ErrorKind::Format, "implausible tensor rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.get_uint<std::uint64_t>();
    const std::size_t n = element_count(shape);
    if (n > r.remaining() / 8) fail(ErrorKind::Format, "truncated");
    Tensor t(shape, 0.0);
    for (double& v : t.values()) v = r.get_f64();
    params.add(name, std::move(t));
  }
  require(r.exhausted(), ErrorKind::Format, "trailing bytes after checkpoint");
  return params;
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
  write_file_bytes(path, write_checkpoint(params));
}

ParamStore load_checkpoint(const std::string& path) {
  return read_checkpoint(read_file_bytes(path));
}

}  // namespace membridge
