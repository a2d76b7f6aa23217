#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "promptforge/tensor.hpp"

namespace pf::records {

// Little-endian primitives, written byte by byte so files are host-order
// independent.
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

// Length-prefixed UTF-8 text block.
void write_text_block(std::ostream& out, const std::string& text);
std::string read_text_block(std::istream& in);

// One tensor record: name-length u64, name bytes, flag byte, rank u64,
// extents u64 each, values f64 each.
struct TensorRecord {
  std::string name;
  std::uint8_t flag = 0;
  Tensor tensor;
};

void write_tensor_record(std::ostream& out, const std::string& name, std::uint8_t flag, const Tensor& t);
TensorRecord read_tensor_record(std::istream& in);

}  // namespace pf::records
