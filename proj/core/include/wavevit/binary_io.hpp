#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "wavevit/tensor.hpp"

namespace wavevit::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U byteswap_if_big(U v) {
  static_assert(std::is_unsigned_v<U>);
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
    }
    return out;
  } else {
    return v;
  }
}

template <typename U>
void write_le(std::ostream& os, U v) {
  v = byteswap_if_big(v);
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  os.write(buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& is, const char* what) {
  char buf[sizeof(U)];
  if (!is.read(buf, sizeof(U))) {
    throw FormatError(std::string("truncated input while reading ") + what);
  }
  U v;
  std::memcpy(&v, buf, sizeof(U));
  return byteswap_if_big(v);
}

/// Raw IEEE payload, little-endian.
template <typename T>
void write_payload(std::ostream& os, const Tensor4<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(T)));
  } else {
    for (T v : t.data()) write_le(os, std::bit_cast<Bits>(v));
  }
}

template <typename T>
void read_payload(std::istream& is, Tensor4<T>& t, const char* what) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(t.data().data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(T)))) {
      throw FormatError(std::string("truncated payload in ") + what);
    }
  } else {
    for (auto& v : t.data()) v = std::bit_cast<T>(read_le<Bits>(is, what));
  }
}

}  // namespace wavevit::detail
