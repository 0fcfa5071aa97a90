// eda/tensor_io.hpp
//
// "EDAT" binary files. All integers little-endian.
//
//   char[4]  magic "EDAT"
//   u32      version (1)
//   u32      dtype code
//
// dtype 1 (float32 tensor):
//   u32 rank, u64 dims[rank], f32 data[prod(dims)] row-major
//
// dtype 16 (named container):
//   u32 n_meta,    { str key, str value } * n_meta
//   u32 n_tensors, { str name, u32 dtype(=1), u32 rank, u64 dims[rank],
//                    f32 data[] } * n_tensors
//
// where str is u32 byte length followed by the bytes.

#ifndef EDA_TENSOR_IO_HPP_
#define EDA_TENSOR_IO_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace eda::io {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;
inline constexpr std::uint32_t kDtypeContainer = 16;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t numel() const;
};

struct Archive {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor *find(const std::string &name) const;
  const Tensor &at(const std::string &name) const;  // throws IoError
  const std::string &meta_at(const std::string &key) const;
};

void write_tensor(const std::string &path, const Tensor &t);
Tensor read_tensor(const std::string &path);

void write_archive(const std::string &path, const Archive &a);
Archive read_archive(const std::string &path);

// Serialises to / parses from an in-memory byte string (same layout).
std::string encode_archive(const Archive &a);
Archive decode_archive(const std::string &bytes);

}  // namespace eda::io

#endif  // EDA_TENSOR_IO_HPP_
