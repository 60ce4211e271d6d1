#include "wavevit/tensor_io.hpp"

#include <array>
#include <fstream>

#include "wavevit/binary_io.hpp"

namespace wavevit {

namespace {
constexpr std::array<char, 4> kMagic{'W', 'T', '4', 'D'};
}

template <typename T>
void write_wt4d(std::ostream& os, const Tensor4<T>& t) {
  os.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint32_t>(os, kWt4dVersion);
  detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
  detail::write_le<std::uint8_t>(os, 4);
  for (std::size_t d : t.shape().dims()) detail::write_le<std::uint64_t>(os, d);
  detail::write_payload(os, t);
}

AnyTensor read_wt4d(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("not a WT4D file: bad magic (expected 'WT4D')");
  }
  const auto version = detail::read_le<std::uint32_t>(is, "WT4D version");
  if (version != kWt4dVersion) {
    throw FormatError("unsupported WT4D version " + std::to_string(version) + " (expected 1)");
  }
  const auto code = detail::read_le<std::uint8_t>(is, "WT4D dtype");
  const auto rank = detail::read_le<std::uint8_t>(is, "WT4D rank");
  if (rank != 4) throw FormatError("WT4D rank must be 4, found " + std::to_string(rank));
  Shape4 s;
  s.n = detail::read_le<std::uint64_t>(is, "WT4D dims");
  s.c = detail::read_le<std::uint64_t>(is, "WT4D dims");
  s.h = detail::read_le<std::uint64_t>(is, "WT4D dims");
  s.w = detail::read_le<std::uint64_t>(is, "WT4D dims");
  switch (code) {
    case static_cast<std::uint8_t>(DType::f64): {
      Tensor4<double> t(s);
      detail::read_payload(is, t, "WT4D");
      return t;
    }
    case static_cast<std::uint8_t>(DType::f32): {
      Tensor4<float> t(s);
      detail::read_payload(is, t, "WT4D");
      return t;
    }
    default:
      throw FormatError("WT4D dtype code " + std::to_string(code) + " unknown (0 = binary64, 1 = binary32)");
  }
}

template <typename T>
void save_wt4d(const std::filesystem::path& path, const Tensor4<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_wt4d(os, t);
  if (!os) throw std::runtime_error("write to '" + path.string() + "' failed");
}

AnyTensor load_wt4d(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "': no such file or not readable");
  try {
    return read_wt4d(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

template <typename T>
Tensor4<T> load_wt4d_as(const std::filesystem::path& path) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, load_wt4d(path));
}

DType dtype_of(const AnyTensor& t) { return t.index() == 0 ? DType::f64 : DType::f32; }

template void write_wt4d(std::ostream&, const Tensor4<float>&);
template void write_wt4d(std::ostream&, const Tensor4<double>&);
template void save_wt4d(const std::filesystem::path&, const Tensor4<float>&);
template void save_wt4d(const std::filesystem::path&, const Tensor4<double>&);
template Tensor4<float> load_wt4d_as(const std::filesystem::path&);
template Tensor4<double> load_wt4d_as(const std::filesystem::path&);

}  // namespace wavevit
