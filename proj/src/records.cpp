#include "promptforge/records.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace pf::records {

namespace {

void fail_truncated() { throw std::runtime_error("record stream truncated"); }

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64(out, bits);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) fail_truncated();
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) fail_truncated();
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void write_text_block(std::ostream& out, const std::string& text) {
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text_block(std::istream& in) {
  const std::uint64_t len = read_u64(in);
  if (len > (1ULL << 30)) throw std::runtime_error("record stream corrupt: oversized text block");
  std::string text(static_cast<std::size_t>(len), '\0');
  if (len && !in.read(text.data(), static_cast<std::streamsize>(len))) fail_truncated();
  return text;
}

void write_tensor_record(std::ostream& out, const std::string& name, std::uint8_t flag, const Tensor& t) {
  write_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  out.put(static_cast<char>(flag));
  write_u64(out, static_cast<std::uint64_t>(t.rank()));
  for (auto e : t.shape) write_u64(out, static_cast<std::uint64_t>(e));
  for (double v : t.data) write_f64(out, v);
}

TensorRecord read_tensor_record(std::istream& in) {
  TensorRecord rec;
  const std::uint64_t name_len = read_u64(in);
  if (name_len > (1ULL << 20)) throw std::runtime_error("record stream corrupt: oversized name");
  rec.name.assign(static_cast<std::size_t>(name_len), '\0');
  if (name_len && !in.read(rec.name.data(), static_cast<std::streamsize>(name_len))) fail_truncated();
  const int flag = in.get();
  if (flag == EOF) fail_truncated();
  rec.flag = static_cast<std::uint8_t>(flag);
  const std::uint64_t rank = read_u64(in);
  if (rank > 8) throw std::runtime_error("record stream corrupt: rank " + std::to_string(rank));
  Shape shape;
  for (std::uint64_t i = 0; i < rank; ++i) {
    const std::uint64_t e = read_u64(in);
    if (e == 0 || e > (1ULL << 32)) throw std::runtime_error("record stream corrupt: bad extent");
    shape.push_back(static_cast<std::int64_t>(e));
  }
  Tensor t(shape);
  for (double& v : t.data) v = read_f64(in);
  rec.tensor = std::move(t);
  return rec;
}

}  // namespace pf::records
