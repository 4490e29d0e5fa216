#include "vqc/digest.h"

#include <array>
#include <fstream>

#include "vqc/error.h"

namespace vqc {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kClient: return "client_error";
    case ErrorCode::kCapability: return "capability";
    case ErrorCode::kNonConvergence: return "non_convergence";
    case ErrorCode::kDegenerate: return "degenerate";
  }
  return "unknown";
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::string digest_hex(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

std::string digest_ordered(std::span<const std::string> parts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : parts) {
    h = fnv1a64(p, h);
    h = fnv1a64("\x1f", h);
  }
  return hex64(h);
}

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h = fnv1a64(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

}  // namespace vqc
