#include "qarm/embedding.hpp"

#include <cstring>
#include <fstream>
#include <unordered_set>

namespace qarm {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw std::invalid_argument("QEMB: truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                      (static_cast<std::uint16_t>(
                           static_cast<std::uint8_t>(buf[pos + 1]))
                       << 8);
    pos += 2;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i]))
           << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    need(4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i)
      bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i]))
              << (8 * i);
    pos += 4;
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void EmbeddingMatrix::validate() const {
  if (data.rows == 0 || data.cols == 0)
    throw std::invalid_argument("EmbeddingMatrix: empty shape");
  if (ids.size() != data.rows)
    throw std::invalid_argument("EmbeddingMatrix: id list does not match rows");
  if (!data.all_finite())
    throw std::invalid_argument("EmbeddingMatrix: non-finite value");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second)
      throw std::invalid_argument("EmbeddingMatrix: duplicate item id " + id);
}

void save_qemb(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  m.validate();
  std::string out;
  out.reserve(32 + m.rows() * (m.cols() * 4 + 10));
  out += "QEMB";
  put_u16(out, 1);
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (const auto& id : m.ids) {
    if (id.size() > 0xffff)
      throw std::invalid_argument("QEMB: item id too long");
    put_u16(out, static_cast<std::uint16_t>(id.size()));
    out += id;
  }
  for (double v : m.data.a) put_f32(out, static_cast<float>(v));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("QEMB: cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("QEMB: write failed for " + path.string());
}

EmbeddingMatrix load_qemb(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("QEMB: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Reader r{buf};
  if (r.str(4) != "QEMB") throw std::invalid_argument("QEMB: bad magic");
  const std::uint16_t version = r.u16();
  if (version != 1)
    throw std::invalid_argument("QEMB: unsupported version " +
                                std::to_string(version));
  const std::uint64_t n = r.u64();
  const std::uint64_t d = r.u64();

  EmbeddingMatrix m;
  m.ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint16_t len = r.u16();
    m.ids.push_back(r.str(len));
  }
  m.data = Mat(n, d);
  for (std::uint64_t i = 0; i < n * d; ++i) m.data.a[i] = r.f32();
  if (r.pos != buf.size())
    throw std::invalid_argument("QEMB: trailing bytes");
  m.validate();
  return m;
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t content_checksum(const EmbeddingMatrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& id : m.ids) h = fnv1a(id.data(), id.size(), h);
  for (double v : m.data.a) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    h = fnv1a(&bits, 4, h);
  }
  h = fnv1a(&m.data.rows, sizeof(m.data.rows), h);
  h = fnv1a(&m.data.cols, sizeof(m.data.cols), h);
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error("checksum: cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return fnv1a(buf.data(), buf.size());
}

}  // namespace qarm
