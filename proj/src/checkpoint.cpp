#include "infune/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "infune/error.hpp"

namespace infune {
namespace {

constexpr std::array<char, 8> kMagic{'I', 'N', 'F', 'U', 'N', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), bytes.size())) throw DataError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("truncated checkpoint");
  return s;
}

void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
}

Matrix get_matrix(std::istream& in, std::uint64_t rows, std::uint64_t cols) {
  Matrix m(rows, cols);
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) m(r, c) = get<double>(in);
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const std::string& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, params.step());
  put<std::uint64_t>(out, params.seed());
  put_string(out, meta);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (ParamStore::Id id = 0; id < params.size(); ++id) {
    const Matrix& v = params.value(id);
    put_string(out, params.name(id));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(v.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(v.cols()));
    put_matrix(out, v);
    put_matrix(out, params.first_moment(id));
    put_matrix(out, params.second_moment(id));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw DataError("not an infune checkpoint: " + path.string());
  if (auto version = get<std::uint32_t>(in); version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.params.set_step(get<std::uint64_t>(in));
  ck.params.set_seed(get<std::uint64_t>(in));
  ck.meta = get_string(in);
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = get_string(in);
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    auto id = ck.params.add(name, get_matrix(in, rows, cols));
    ck.params.first_moment(id) = get_matrix(in, rows, cols);
    ck.params.second_moment(id) = get_matrix(in, rows, cols);
  }
  return ck;
}

}  // namespace infune
