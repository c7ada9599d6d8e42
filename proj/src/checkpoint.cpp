// SPDX-License-Identifier: Apache-2.0
#include "uotlab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace uotlab {

namespace {

constexpr char kMagic[8] = {'U', 'O', 'T', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(sizeof(double) == 8, "checkpoint format requires 64-bit doubles");

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

template <class Vec>
void write_doubles(std::ostream& out, const Vec& values) {
  // x86-64/aarch64 are little-endian, which is the on-disk layout
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

template <class Vec>
void read_doubles(std::istream& in, Vec& values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  ckpt.spec.validate();
  nlohmann::json header;
  header["layer_widths"] = ckpt.spec.layer_widths;
  header["hidden_activation"] = activation_name(ckpt.spec.hidden_activation);
  header["output_activation"] = activation_name(ckpt.spec.output_activation);
  header["leaky_slope"] = ckpt.spec.leaky_slope;
  header["seed"] = ckpt.seed;
  header["step"] = ckpt.step;
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(strf("save_checkpoint: cannot open '%s' for writing", path.c_str()));
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (size_t l = 0; l < ckpt.params.weights.size(); ++l) {
    write_doubles(out, ckpt.params.weights[l].data);
    write_doubles(out, ckpt.params.biases[l].data);
  }
  if (!out) throw Error(strf("save_checkpoint: write failed for '%s'", path.c_str()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(strf("load_checkpoint: cannot open '%s'", path.c_str()));
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(strf("load_checkpoint: '%s' is not a checkpoint file", path.c_str()));
  }
  const uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw Error(strf("load_checkpoint: '%s' has version %u, expected %u", path.c_str(), version, kVersion));
  }
  const uint32_t header_len = read_u32(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  if (!in) throw Error(strf("load_checkpoint: truncated header in '%s'", path.c_str()));

  nlohmann::json header = nlohmann::json::parse(header_text);
  Checkpoint ckpt;
  ckpt.spec.layer_widths = header.at("layer_widths").get<std::vector<int>>();
  ckpt.spec.hidden_activation = activation_from_name(header.at("hidden_activation").get<std::string>());
  ckpt.spec.output_activation = activation_from_name(header.at("output_activation").get<std::string>());
  ckpt.spec.leaky_slope = header.at("leaky_slope").get<double>();
  ckpt.seed = header.at("seed").get<uint64_t>();
  ckpt.step = header.at("step").get<long>();
  ckpt.spec.validate();

  ckpt.params = ParamStore::zeros(ckpt.spec);
  for (size_t l = 0; l < ckpt.params.weights.size(); ++l) {
    read_doubles(in, ckpt.params.weights[l].data);
    read_doubles(in, ckpt.params.biases[l].data);
  }
  if (!in) throw Error(strf("load_checkpoint: truncated parameters in '%s'", path.c_str()));
  return ckpt;
}

}  // namespace uotlab
