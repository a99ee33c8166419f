#pragma once

// On-disk cache of Gram matrices.
//
// File layout (all integers and floats little-endian):
//   bytes 0..3    magic "GRAM"
//   bytes 4..7    u32 version (1)
//   bytes 8..11   u32 N
//   bytes 12..15  u32 reserved (0)
//   then N*N f64, row-major.
//
// Files are named <task>_<hash>.gram where <hash> is a 64-bit FNV-1a digest of
// the feature bytes and the kernel spec.

#include "conicmtl/kernel_engine.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace conicmtl {

inline constexpr std::uint32_t kGramFormatVersion = 1;

namespace detail {

class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void update_le(T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    update(buf, sizeof(T));
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw ParseError("truncated gram file", 0);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

/// Content hash of a feature matrix (row-major values, shape) and a kernel spec.
inline std::uint64_t gram_content_hash(const Matrix& x, const KernelSpec& spec) {
  detail::Fnv1a h;
  h.update_le(static_cast<std::uint64_t>(x.rows()));
  h.update_le(static_cast<std::uint64_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) h.update_le(x(i, j));
  const std::string name = spec.name();
  h.update(name.data(), name.size());
  return h.digest();
}

inline void write_gram_file(const std::filesystem::path& path, const Matrix& gram) {
  if (gram.rows() != gram.cols()) throw std::invalid_argument("gram cache stores square matrices only");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write("GRAM", 4);
  detail::write_le<std::uint32_t>(os, kGramFormatVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(gram.rows()));
  detail::write_le<std::uint32_t>(os, 0);
  for (Eigen::Index i = 0; i < gram.rows(); ++i)
    for (Eigen::Index j = 0; j < gram.cols(); ++j) detail::write_le<double>(os, gram(i, j));
  if (!os) throw Error("failed writing " + path.string());
}

inline Matrix read_gram_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || std::memcmp(magic.data(), "GRAM", 4) != 0)
    throw ParseError(path.string() + ": bad gram magic", 0);
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kGramFormatVersion)
    throw ParseError(path.string() + ": unsupported gram version " + std::to_string(version), 0);
  const auto n = static_cast<Eigen::Index>(detail::read_le<std::uint32_t>(is));
  (void)detail::read_le<std::uint32_t>(is);
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = detail::read_le<double>(is);
  return g;
}

/// Directory-backed cache; a miss computes the Gram and writes it.
class GramCache {
 public:
  explicit GramCache(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  std::filesystem::path path_for(const std::string& task_id, const Matrix& x, const KernelSpec& spec) const {
    std::ostringstream name;
    name << task_id << '_' << std::hex << std::setw(16) << std::setfill('0') << gram_content_hash(x, spec) << ".gram";
    return dir_ / name.str();
  }

  Matrix get_or_compute(const std::string& task_id, const KernelSpec& spec, const Matrix& x) {
    const auto path = path_for(task_id, x, spec);
    if (std::filesystem::exists(path)) {
      Matrix g = read_gram_file(path);
      if (g.rows() == x.rows()) {
        ++hits_;
        return g;
      }
    }
    ++misses_;
    Matrix g = compute_gram(spec, x);
    write_gram_file(path, g);
    return g;
  }

  GramStack build_stack(const std::string& task_id, const std::vector<KernelSpec>& specs, const Matrix& x) {
    std::vector<Matrix> grams;
    grams.reserve(specs.size());
    for (const auto& s : specs) grams.push_back(get_or_compute(task_id, s, x));
    return GramStack(task_id, std::move(grams));
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::filesystem::path dir_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace conicmtl
