#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdance/config.hpp"
#include "rdance/errors.hpp"
#include "rdance/motion.hpp"
#include "rdance/nn.hpp"

namespace rdance {

// ============================================================================
// Checkpoint file: magic "RDCK", u32 version, u32 header length, JSON header
// (param names + shapes in order, step, seed, config hash, full config,
// kernel thread count), then parameters as LE f32 in header order.
// ============================================================================

inline void save_checkpoint(const ModelParams<float>& params,
                            const RunConfig& cfg, uint64_t seed,
                            const std::string& path) {
  nlohmann::json header;
  header["step"] = params.step();
  header["seed"] = seed;
  header["config_hash"] = config_hash(cfg);
  header["config"] = run_config_to_json(cfg);
  header["threads"] = 1;  // kernels are single-threaded for determinism
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, t] : params.all())
    plist.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
  header["params"] = plist;
  std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  os.write("RDCK", 4);
  detail::write_u32(os, 1);
  detail::write_u32(os, uint32_t(hs.size()));
  os.write(hs.data(), std::streamsize(hs.size()));
  for (const auto& [name, t] : params.all())
    detail::write_f32s(os, t.data().data(), t.data().size());
  if (!os) throw Error(ErrorCode::kIoFailure, "write failed: " + path);
}

struct CheckpointInfo {
  int64_t step = 0;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  RunConfig config;
};

/// Reads header only (to build the model), without parameter payload.
inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RDCK", 4) != 0)
    throw Error(ErrorCode::kBadMagic, path);
  uint32_t version, hlen;
  if (!detail::read_u32(is, version) || !detail::read_u32(is, hlen))
    throw Error(ErrorCode::kTruncatedFile, path);
  if (version != 1) throw Error(ErrorCode::kBadMagic, "unsupported version");
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), hlen)) throw Error(ErrorCode::kTruncatedFile, path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kTruncatedFile, std::string("bad header: ") + e.what());
  }
  CheckpointInfo info;
  info.step = header.at("step").get<int64_t>();
  info.seed = header.at("seed").get<uint64_t>();
  info.config_hash = header.at("config_hash").get<uint64_t>();
  info.config = parse_run_config(header.at("config"));
  return info;
}

/// Fills an already-constructed parameter set (names and shapes must match).
inline CheckpointInfo load_checkpoint(ModelParams<float>& params,
                                      const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "RDCK", 4) != 0)
    throw Error(ErrorCode::kBadMagic, path);
  uint32_t version, hlen;
  if (!detail::read_u32(is, version) || !detail::read_u32(is, hlen))
    throw Error(ErrorCode::kTruncatedFile, path);
  if (version != 1) throw Error(ErrorCode::kBadMagic, "unsupported version");
  std::string hs(hlen, '\0');
  if (!is.read(hs.data(), hlen)) throw Error(ErrorCode::kTruncatedFile, path);
  nlohmann::json header = nlohmann::json::parse(hs);

  CheckpointInfo info;
  info.step = header.at("step").get<int64_t>();
  info.seed = header.at("seed").get<uint64_t>();
  info.config_hash = header.at("config_hash").get<uint64_t>();
  info.config = parse_run_config(header.at("config"));

  for (const auto& entry : header.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    int r = entry.at("shape")[0].get<int>();
    int c = entry.at("shape")[1].get<int>();
    if (!params.contains(name))
      throw Error(ErrorCode::kDimensionMismatch, "checkpoint param " + name +
                                                     " missing in model");
    Tensor<float>& t = params.get(name);
    if (t.rows() != r || t.cols() != c)
      throw Error(ErrorCode::kDimensionMismatch, "shape mismatch for " + name);
    if (!detail::read_f32s(is, t.data().data(), t.data().size()))
      throw Error(ErrorCode::kTruncatedFile, path);
    for (float v : t.data())
      if (!std::isfinite(v))
        throw Error(ErrorCode::kNonFiniteValue, "checkpoint param " + name);
  }
  params.set_step(info.step);
  return info;
}

}  // namespace rdance
