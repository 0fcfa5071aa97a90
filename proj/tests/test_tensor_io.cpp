// tests/test_tensor_io.cpp

#include <doctest.h>

#include <fstream>

#include "eda/errors.hpp"
#include "eda/tensor_io.hpp"
#include "oracles.hpp"

using namespace eda::io;

TEST_CASE("a raw tensor file has the documented byte layout") {
  const std::string dir = oracle::tmp_dir("tensor_io");
  Tensor t{{2, 3}, {1, 2, 3, 4, 5, 6}};
  write_tensor(dir + "/t.bin", t);
  std::ifstream in(dir + "/t.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 2 * 8 + 6 * 4);
  CHECK(bytes.substr(0, 4) == "EDAT");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(static_cast<unsigned char>(bytes[8]) == kDtypeFloat32);
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);
  CHECK(static_cast<unsigned char>(bytes[16]) == 2);
  CHECK(static_cast<unsigned char>(bytes[24]) == 3);
  float f;
  std::memcpy(&f, bytes.data() + 32, 4);
  CHECK(f == 1.0f);
  const Tensor r = read_tensor(dir + "/t.bin");
  CHECK(r.dims == t.dims);
  CHECK(r.data == t.data);
}

TEST_CASE("archives round-trip bit-identically") {
  std::mt19937_64 rng(2);
  std::normal_distribution<float> g;
  Archive a;
  a.meta["kind"] = "test";
  a.meta["empty"] = "";
  for (int k = 0; k < 4; ++k) {
    Tensor t;
    t.dims = {static_cast<std::uint64_t>(k + 1), 5};
    for (std::uint64_t i = 0; i < t.numel(); ++i) t.data.push_back(g(rng));
    a.tensors.emplace_back("t" + std::to_string(k), t);
  }
  a.tensors.emplace_back("scalar", Tensor{{}, {3.5f}});
  const std::string bytes = encode_archive(a);
  const Archive b = decode_archive(bytes);
  CHECK(b.meta == a.meta);
  REQUIRE(b.tensors.size() == a.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(b.tensors[i].first == a.tensors[i].first);
    CHECK(b.tensors[i].second.dims == a.tensors[i].second.dims);
    CHECK(std::memcmp(b.tensors[i].second.data.data(), a.tensors[i].second.data.data(),
                      a.tensors[i].second.data.size() * sizeof(float)) == 0);
  }
  CHECK(encode_archive(b) == bytes);
  CHECK(b.at("scalar").data[0] == 3.5f);
  CHECK(b.find("missing") == nullptr);
  CHECK_THROWS_AS(b.at("missing"), eda::IoError);
}

TEST_CASE("corrupt or missing input raises IoError") {
  CHECK_THROWS_AS(decode_archive("EDAX"), eda::IoError);
  Archive a;
  a.tensors.emplace_back("x", Tensor{{3}, {1, 2, 3}});
  const std::string bytes = encode_archive(a);
  CHECK_THROWS_AS(decode_archive(bytes.substr(0, bytes.size() - 2)), eda::IoError);
  CHECK_THROWS_AS(read_archive("/nonexistent/dir/file"), eda::IoError);
}
