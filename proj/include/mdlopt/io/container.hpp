#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "mdlopt/errors.hpp"

namespace mdlopt::io {

using json = nlohmann::json;

// Versioned binary container used for datasets, demo corpora and model
// checkpoints. Layout:
//
//   magic "MDLC" | u16 format_version | u16 kind | u64 meta_len |
//   meta (JSON, UTF-8) | blob bytes (order given by meta["blobs"]) |
//   u32 crc32 over everything after the magic
//
// The JSON meta lists each blob's name, dtype and element count, so readers
// can validate sizes before touching payload bytes. Round-trips are
// byte-exact: blob order is the sorted name order and JSON keys serialize
// sorted.
enum class ContainerKind : uint16_t {
  kColorDataset = 1,
  kDemoCorpus = 2,
  kCheckpoint = 3,
  kMetricsTable = 4,
};

constexpr uint16_t kContainerVersion = 1;
constexpr char kContainerMagic[4] = {'M', 'D', 'L', 'C'};

class Container {
 public:
  explicit Container(ContainerKind kind) : kind_(kind) {}

  ContainerKind kind() const { return kind_; }
  json& meta() { return meta_; }
  const json& meta() const { return meta_; }

  void put_bytes(const std::string& name, std::string dtype, std::vector<uint8_t> bytes) {
    blobs_[name] = Blob{std::move(dtype), std::move(bytes)};
  }

  void put_f32(const std::string& name, const float* data, size_t n) {
    std::vector<uint8_t> b(n * sizeof(float));
    std::memcpy(b.data(), data, b.size());
    put_bytes(name, "f32", std::move(b));
  }
  void put_f32(const std::string& name, const std::vector<float>& v) {
    put_f32(name, v.data(), v.size());
  }
  void put_u8(const std::string& name, const std::vector<uint8_t>& v) {
    put_bytes(name, "u8", v);
  }
  void put_i32(const std::string& name, const std::vector<int32_t>& v) {
    std::vector<uint8_t> b(v.size() * 4);
    std::memcpy(b.data(), v.data(), b.size());
    put_bytes(name, "i32", std::move(b));
  }
  void put_u64(const std::string& name, const std::vector<uint64_t>& v) {
    std::vector<uint8_t> b(v.size() * 8);
    std::memcpy(b.data(), v.data(), b.size());
    put_bytes(name, "u64", std::move(b));
  }

  bool has_blob(const std::string& name) const { return blobs_.count(name) > 0; }

  const std::vector<uint8_t>& get_bytes(const std::string& name, const std::string& dtype) const {
    auto it = blobs_.find(name);
    if (it == blobs_.end()) throw CorruptFileError("container: missing blob '" + name + "'");
    if (it->second.dtype != dtype)
      throw CorruptFileError("container: blob '" + name + "' has dtype " + it->second.dtype +
                             ", expected " + dtype);
    return it->second.bytes;
  }

  std::vector<float> get_f32(const std::string& name) const {
    const auto& b = get_bytes(name, "f32");
    std::vector<float> v(b.size() / sizeof(float));
    std::memcpy(v.data(), b.data(), b.size());
    return v;
  }
  std::vector<uint8_t> get_u8(const std::string& name) const { return get_bytes(name, "u8"); }
  std::vector<int32_t> get_i32(const std::string& name) const {
    const auto& b = get_bytes(name, "i32");
    std::vector<int32_t> v(b.size() / 4);
    std::memcpy(v.data(), b.data(), b.size());
    return v;
  }
  std::vector<uint64_t> get_u64(const std::string& name) const {
    const auto& b = get_bytes(name, "u64");
    std::vector<uint64_t> v(b.size() / 8);
    std::memcpy(v.data(), b.data(), b.size());
    return v;
  }

  void write(const std::string& path) const {
    json meta = meta_;
    json blob_list = json::array();
    for (const auto& [name, blob] : blobs_) {
      blob_list.push_back({{"name", name}, {"dtype", blob.dtype}, {"bytes", blob.bytes.size()}});
    }
    meta["blobs"] = blob_list;
    std::string meta_str = meta.dump();

    std::string body;
    {
      uint16_t ver = kContainerVersion;
      uint16_t kind = static_cast<uint16_t>(kind_);
      uint64_t mlen = meta_str.size();
      append(body, &ver, 2);
      append(body, &kind, 2);
      append(body, &mlen, 8);
      body.append(meta_str);
      for (const auto& [name, blob] : blobs_)
        body.append(reinterpret_cast<const char*>(blob.bytes.data()), blob.bytes.size());
    }
    uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), body.size());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open for write: " + path);
    f.write(kContainerMagic, 4);
    f.write(body.data(), static_cast<std::streamsize>(body.size()));
    f.write(reinterpret_cast<const char*>(&crc), 4);
    if (!f) throw DataError("write failed: " + path);
  }

  static Container read(const std::string& path, ContainerKind expected_kind) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for read: " + path);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() < 4 + 12 + 4) throw CorruptFileError("container truncated: " + path);
    if (std::memcmp(raw.data(), kContainerMagic, 4) != 0)
      throw CorruptFileError("bad magic (not a container file): " + path);

    const char* body = raw.data() + 4;
    size_t body_len = raw.size() - 8;

    uint32_t stored_crc;
    std::memcpy(&stored_crc, raw.data() + raw.size() - 4, 4);
    uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(body), body_len);
    if (crc != stored_crc) throw CorruptFileError("checksum mismatch: " + path);

    uint16_t ver, kind;
    uint64_t mlen;
    std::memcpy(&ver, body, 2);
    std::memcpy(&kind, body + 2, 2);
    std::memcpy(&mlen, body + 4, 8);
    if (ver != kContainerVersion)
      throw VersionError("container version " + std::to_string(ver) + " unsupported (expected " +
                         std::to_string(kContainerVersion) + "): " + path);
    if (12 + mlen > body_len) throw CorruptFileError("meta length out of range: " + path);

    Container c(static_cast<ContainerKind>(kind));
    if (kind != static_cast<uint16_t>(expected_kind))
      throw DataError("container kind " + std::to_string(kind) + " where " +
                      std::to_string(static_cast<uint16_t>(expected_kind)) + " expected: " + path);

    json meta;
    try {
      meta = json::parse(body + 12, body + 12 + mlen);
    } catch (const json::exception& e) {
      throw CorruptFileError(std::string("bad container meta: ") + e.what());
    }

    size_t off = 12 + mlen;
    if (!meta.contains("blobs") || !meta["blobs"].is_array())
      throw CorruptFileError("container meta missing blob table: " + path);
    for (const auto& entry : meta["blobs"]) {
      std::string name = entry.at("name").get<std::string>();
      std::string dtype = entry.at("dtype").get<std::string>();
      size_t nbytes = entry.at("bytes").get<size_t>();
      if (off + nbytes > body_len) throw CorruptFileError("blob '" + name + "' truncated: " + path);
      std::vector<uint8_t> bytes(nbytes);
      std::memcpy(bytes.data(), body + off, nbytes);
      off += nbytes;
      c.blobs_[name] = Blob{dtype, std::move(bytes)};
    }
    if (off != body_len) throw CorruptFileError("trailing bytes in container: " + path);
    meta.erase("blobs");
    c.meta_ = std::move(meta);
    return c;
  }

 private:
  struct Blob {
    std::string dtype;
    std::vector<uint8_t> bytes;
  };

  static void append(std::string& s, const void* p, size_t n) {
    s.append(reinterpret_cast<const char*>(p), n);
  }

  ContainerKind kind_;
  json meta_;
  std::map<std::string, Blob> blobs_;  // sorted by name => stable layout
};

}  // namespace mdlopt::io
