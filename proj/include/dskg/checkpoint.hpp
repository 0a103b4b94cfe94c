#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "dskg/common.hpp"
#include "dskg/data.hpp"
#include "dskg/model.hpp"

namespace dskg {

// Layout: "DSKGCKPT", u8 version, u32 |E|, u32 |R'|, u32 k, u32 L, u8 arch,
// u64 vocabulary fingerprint, u32 tensor count, then every tensor of
// ModelParams::tensors() in order as little-endian float32.
inline constexpr char kCheckpointMagic[9] = "DSKGCKPT";
inline constexpr std::uint8_t kCheckpointVersion = 1;

// FNV-1a over all entity and relation labels in id order.
inline std::uint64_t vocab_fingerprint(const Vocabulary& v) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (const unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& l : v.entities.labels()) feed(l);
  for (const auto& l : v.relations.labels()) feed(l);
  return h;
}

struct CheckpointHeader {
  ModelShape shape;
  std::uint64_t fingerprint = 0;
};

template <typename T>
void save_checkpoint(std::ostream& out, const ModelParams<T>& p, std::uint64_t fingerprint) {
  using namespace binary;
  out.write(kCheckpointMagic, 8);
  write_le<std::uint8_t>(out, kCheckpointVersion);
  write_le<std::uint32_t>(out, p.shape.entities);
  write_le<std::uint32_t>(out, p.shape.relations);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.dim));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.layers));
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(p.shape.arch));
  write_le<std::uint64_t>(out, fingerprint);
  const auto tensors = p.tensors();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    for (const auto v : t.values) write_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw Error("io", "failed writing checkpoint");
}

inline CheckpointHeader read_checkpoint_header(std::istream& in) {
  using namespace binary;
  expect_magic(in, kCheckpointMagic);
  const auto version = read_le<std::uint8_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointHeader h;
  h.shape.entities = read_le<std::uint32_t>(in);
  h.shape.relations = read_le<std::uint32_t>(in);
  h.shape.dim = read_le<std::uint32_t>(in);
  h.shape.layers = read_le<std::uint32_t>(in);
  const auto arch = read_le<std::uint8_t>(in);
  if (arch > 1) throw FormatError("unknown architecture tag in checkpoint");
  h.shape.arch = static_cast<Architecture>(arch);
  h.fingerprint = read_le<std::uint64_t>(in);
  h.shape.validate();
  return h;
}

template <typename T>
ModelParams<T> load_checkpoint(std::istream& in, CheckpointHeader* header_out = nullptr) {
  const auto header = read_checkpoint_header(in);
  ModelParams<T> p(header.shape);
  auto tensors = p.tensors();
  const auto count = binary::read_le<std::uint32_t>(in);
  if (count != tensors.size()) throw FormatError("checkpoint tensor count mismatch");
  for (auto& t : tensors) {
    for (auto& v : t.values) v = static_cast<T>(binary::read_le<float>(in));
  }
  if (header_out) *header_out = header;
  return p;
}

template <typename T>
void save_checkpoint_file(const std::string& path, const ModelParams<T>& p,
                          std::uint64_t fingerprint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write checkpoint: " + path);
  save_checkpoint(out, p, fingerprint);
}

// Loads and checks the checkpoint against the dataset vocabulary.
template <typename T>
ModelParams<T> load_checkpoint_file(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open checkpoint: " + path);
  CheckpointHeader header;
  auto p = load_checkpoint<T>(in, &header);
  if (header.shape.entities != vocab.entity_count() ||
      header.shape.relations != vocab.relation_count() ||
      header.fingerprint != vocab_fingerprint(vocab)) {
    throw Error("mismatch", "checkpoint " + path + " does not match the dataset vocabulary");
  }
  return p;
}

}  // namespace dskg
