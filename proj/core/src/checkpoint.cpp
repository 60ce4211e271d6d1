#include "wavevit/checkpoint.hpp"

#include <array>
#include <fstream>
#include <unordered_map>

#include "wavevit/binary_io.hpp"

namespace wavevit {

namespace {
constexpr std::array<char, 4> kMagic{'W', 'V', 'C', 'K'};
// Names longer than this are treated as corruption.
constexpr std::uint32_t kMaxNameLength = 4096;
}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint32_t>(os, kWvckVersion);
  detail::write_le<std::uint64_t>(os, ckpt.size());
  for (const auto& entry : ckpt) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entry.name.size()));
    os.write(entry.name.data(), static_cast<std::streamsize>(entry.name.size()));
    std::visit(
        [&](const auto& t) {
          using T = typename std::decay_t<decltype(t)>::value_type;
          detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
          detail::write_le<std::uint8_t>(os, 4);
          for (std::size_t d : t.shape().dims()) detail::write_le<std::uint64_t>(os, d);
          detail::write_payload(os, t);
        },
        entry.tensor);
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("not a WVCK checkpoint: bad magic (expected 'WVCK')");
  }
  const auto version = detail::read_le<std::uint32_t>(is, "WVCK version");
  if (version != kWvckVersion) {
    throw FormatError("unsupported WVCK version " + std::to_string(version) + " (expected 1)");
  }
  const auto count = detail::read_le<std::uint64_t>(is, "WVCK tensor count");
  Checkpoint ckpt;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::read_le<std::uint32_t>(is, "WVCK name length");
    if (len > kMaxNameLength) {
      throw FormatError("WVCK tensor " + std::to_string(i) + ": name length " + std::to_string(len) + " is implausible");
    }
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated WVCK tensor name");
    const auto code = detail::read_le<std::uint8_t>(is, "WVCK dtype");
    const auto rank = detail::read_le<std::uint8_t>(is, "WVCK rank");
    if (rank != 4) throw FormatError("WVCK tensor '" + name + "': rank must be 4, found " + std::to_string(rank));
    Shape4 s;
    s.n = detail::read_le<std::uint64_t>(is, "WVCK dims");
    s.c = detail::read_le<std::uint64_t>(is, "WVCK dims");
    s.h = detail::read_le<std::uint64_t>(is, "WVCK dims");
    s.w = detail::read_le<std::uint64_t>(is, "WVCK dims");
    if (code == static_cast<std::uint8_t>(DType::f64)) {
      Tensor4<double> t(s);
      detail::read_payload(is, t, "WVCK");
      ckpt.push_back({std::move(name), std::move(t)});
    } else if (code == static_cast<std::uint8_t>(DType::f32)) {
      Tensor4<float> t(s);
      detail::read_payload(is, t, "WVCK");
      ckpt.push_back({std::move(name), std::move(t)});
    } else {
      throw FormatError("WVCK tensor '" + name + "': dtype code " + std::to_string(code) + " unknown");
    }
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_checkpoint(os, ckpt);
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path.string() + "': no such file or not readable");
  try {
    return read_checkpoint(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
Checkpoint to_checkpoint(const Model<T>& model) {
  Checkpoint ckpt;
  for (const auto& [name, v] : model.parameters()) ckpt.push_back({name, v.value()});
  return ckpt;
}

template <typename T>
void load_into(Model<T>& model, const Checkpoint& ckpt) {
  std::unordered_map<std::string, const AnyTensor*> by_name;
  for (const auto& e : ckpt) by_name[e.name] = &e.tensor;
  for (auto& [name, v] : model.parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing parameter '" + name + "'");
    Tensor4<T> t = std::visit([](const auto& src) { return src.template cast<T>(); }, *it->second);
    if (t.shape() != v.shape()) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " + t.shape().str() + ", model expects " +
                        v.shape().str());
    }
    v.mutable_value() = std::move(t);
  }
}

template Checkpoint to_checkpoint(const Model<float>&);
template Checkpoint to_checkpoint(const Model<double>&);
template void load_into(Model<float>&, const Checkpoint&);
template void load_into(Model<double>&, const Checkpoint&);

}  // namespace wavevit
