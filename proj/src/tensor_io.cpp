// src/tensor_io.cpp

#include "eda/tensor_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "eda/errors.hpp"

namespace eda::io {

namespace {

constexpr char kMagic[4] = {'E', 'D', 'A', 'T'};

class Writer {
 public:
  void bytes(const void *p, std::size_t n) {
    out_.append(static_cast<const char *>(p), n);
  }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void str(const std::string &s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor_body(const Tensor &t) {
    if (t.data.size() != t.numel())
      throw IoError("tensor data length does not match dims");
    u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) u64(d);
    bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string &buf) : buf_(buf) {}
  void bytes(void *p, std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("EDAT: truncated file");
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    if (pos_ + n > buf_.size()) throw IoError("EDAT: truncated string");
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor_body() {
    Tensor t;
    const std::uint32_t rank = u32();
    if (rank > 16) throw IoError("EDAT: implausible rank");
    t.dims.resize(rank);
    for (auto &d : t.dims) d = u64();
    const std::uint64_t n = t.numel();
    if (n * sizeof(float) > buf_.size() - pos_)
      throw IoError("EDAT: tensor data truncated");
    t.data.resize(n);
    bytes(t.data.data(), n * sizeof(float));
    return t;
  }
  // Returns the dtype code after checking magic and version.
  std::uint32_t header() {
    char magic[4];
    bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("EDAT: bad magic");
    const std::uint32_t version = u32();
    if (version != kFormatVersion)
      throw IoError("EDAT: unsupported version " + std::to_string(version));
    return u32();
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string &buf_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::string &path, const std::string &bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void write_header(Writer &w, std::uint32_t dtype) {
  w.bytes(kMagic, 4);
  w.u32(kFormatVersion);
  w.u32(dtype);
}

}  // namespace

std::uint64_t Tensor::numel() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

const Tensor *Archive::find(const std::string &name) const {
  for (const auto &[n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

const Tensor &Archive::at(const std::string &name) const {
  const Tensor *t = find(name);
  if (!t) throw IoError("archive has no tensor '" + name + "'");
  return *t;
}

const std::string &Archive::meta_at(const std::string &key) const {
  auto it = meta.find(key);
  if (it == meta.end()) throw IoError("archive has no metadata '" + key + "'");
  return it->second;
}

void write_tensor(const std::string &path, const Tensor &t) {
  Writer w;
  write_header(w, kDtypeFloat32);
  w.tensor_body(t);
  dump(path, w.take());
}

Tensor read_tensor(const std::string &path) {
  const std::string buf = slurp(path);
  Reader r(buf);
  const std::uint32_t dtype = r.header();
  if (dtype != kDtypeFloat32)
    throw IoError(path + ": expected a float32 tensor, dtype " +
                  std::to_string(dtype));
  Tensor t = r.tensor_body();
  if (!r.done()) throw IoError(path + ": trailing bytes");
  return t;
}

std::string encode_archive(const Archive &a) {
  Writer w;
  write_header(w, kDtypeContainer);
  w.u32(static_cast<std::uint32_t>(a.meta.size()));
  for (const auto &[k, v] : a.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(a.tensors.size()));
  for (const auto &[name, t] : a.tensors) {
    w.str(name);
    w.u32(kDtypeFloat32);
    w.tensor_body(t);
  }
  return w.take();
}

Archive decode_archive(const std::string &bytes) {
  Reader r(bytes);
  if (r.header() != kDtypeContainer) throw IoError("EDAT: not a container");
  Archive a;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    a.meta[k] = r.str();
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    if (r.u32() != kDtypeFloat32)
      throw IoError("EDAT: unsupported tensor dtype in container");
    a.tensors.emplace_back(std::move(name), r.tensor_body());
  }
  if (!r.done()) throw IoError("EDAT: trailing bytes");
  return a;
}

void write_archive(const std::string &path, const Archive &a) {
  dump(path, encode_archive(a));
}

Archive read_archive(const std::string &path) {
  try {
    return decode_archive(slurp(path));
  } catch (const IoError &e) {
    throw IoError(path + ": " + e.what());
  }
}

}  // namespace eda::io
