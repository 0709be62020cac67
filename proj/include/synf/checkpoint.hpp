#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "synf/field_model.hpp"

namespace synf {

// Checkpoint container "SYNF1": magic, little-endian u64 manifest length,
// JSON manifest, then one little-endian float32 array per tensor in
// registration order. Bit-exact round trip: load(save(x)) re-saves to
// identical bytes.
inline constexpr char kCheckpointMagic[6] = {'S', 'Y', 'N', 'F', '1', '\n'};

namespace detail {
inline nlohmann::json field_config_to_json(const FieldConfig& c) {
  return {{"family", family_name(c.family)},
          {"spatial_res", c.spatial_res},
          {"temporal_res", c.temporal_res},
          {"feature_dim", c.feature_dim},
          {"temporal_mlp_hidden", c.temporal_mlp_hidden},
          {"temporal_embed_dim", c.temporal_embed_dim},
          {"encode_order", c.encode_order},
          {"decoder_hidden", c.decoder_hidden},
          {"use_direction", c.use_direction},
          {"init_seed", c.init_seed}};
}
inline FieldConfig field_config_from_json(const nlohmann::json& j) {
  FieldConfig c;
  c.family = family_from_name(j.at("family").get<std::string>());
  c.spatial_res = j.at("spatial_res").get<int>();
  c.temporal_res = j.at("temporal_res").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.temporal_mlp_hidden = j.at("temporal_mlp_hidden").get<int>();
  c.temporal_embed_dim = j.at("temporal_embed_dim").get<int>();
  c.encode_order = j.at("encode_order").get<int>();
  c.decoder_hidden = j.at("decoder_hidden").get<int>();
  c.use_direction = j.at("use_direction").get<bool>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
  return c;
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const FieldModel& m) {
  nlohmann::json manifest;
  manifest["config"] = detail::field_config_to_json(m.cfg);
  manifest["time_map"] = {{"n_frames", m.time_map.n_frames},
                          {"fps", m.time_map.fps},
                          {"t_lo", m.time_map.t_lo},
                          {"t_hi", m.time_map.t_hi}};
  manifest["bounds"] = {m.bounds.lo.x, m.bounds.lo.y, m.bounds.lo.z,
                        m.bounds.hi.x, m.bounds.hi.y, m.bounds.hi.z};
  manifest["train_camera_ids"] = m.train_camera_ids;
  manifest["tensors"] = nlohmann::json::array();
  for (const TensorInfo& t : m.params.tensors())
    manifest["tensors"].push_back({{"name", t.name}, {"shape", t.shape}});
  const std::string mstr = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path.string());
  f.write(kCheckpointMagic, sizeof kCheckpointMagic);
  uint64_t mlen = mstr.size();
  uint8_t lenb[8];
  for (int i = 0; i < 8; ++i) lenb[i] = static_cast<uint8_t>(mlen >> (8 * i));
  f.write(reinterpret_cast<const char*>(lenb), 8);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  std::vector<float> buf;
  for (const TensorInfo& t : m.params.tensors()) {
    auto vals = m.params.tensor_values(
        m.params.find(t.name));
    buf.resize(vals.size());
    for (size_t i = 0; i < vals.size(); ++i)
      buf[i] = static_cast<float>(vals[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw DataError("checkpoint write failed: " + path.string());
}

inline FieldModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path.string());
  char magic[sizeof kCheckpointMagic];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw DataError("not a SYNF1 checkpoint: " + path.string());
  uint8_t lenb[8];
  f.read(reinterpret_cast<char*>(lenb), 8);
  uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i) mlen |= static_cast<uint64_t>(lenb[i]) << (8 * i);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw DataError("truncated checkpoint: " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mstr);
  } catch (const std::exception& e) {
    throw DataError(std::string("bad checkpoint manifest: ") + e.what());
  }

  const FieldConfig cfg = detail::field_config_from_json(manifest.at("config"));
  TimeMap tm;
  tm.n_frames = manifest.at("time_map").at("n_frames").get<int>();
  tm.fps = manifest.at("time_map").at("fps").get<double>();
  tm.t_lo = manifest.at("time_map").at("t_lo").get<double>();
  tm.t_hi = manifest.at("time_map").at("t_hi").get<double>();
  const auto b = manifest.at("bounds").get<std::vector<double>>();
  if (b.size() != 6) throw DataError("bad bounds in checkpoint");
  const Aabb bounds{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}};
  auto cam_ids = manifest.at("train_camera_ids").get<std::vector<int>>();

  FieldModel m = build_field_model(cfg, tm, bounds, std::move(cam_ids));
  const auto& jt = manifest.at("tensors");
  if (jt.size() != m.params.tensors().size())
    throw DataError("checkpoint tensor count mismatch");
  std::vector<float> buf;
  for (size_t i = 0; i < jt.size(); ++i) {
    const TensorInfo& t = m.params.tensors()[i];
    if (jt[i].at("name").get<std::string>() != t.name)
      throw DataError("checkpoint tensor order mismatch at '" + t.name + "'");
    if (jt[i].at("shape").get<std::vector<int64_t>>() != t.shape)
      throw DataError("checkpoint tensor shape mismatch at '" + t.name + "'");
    buf.resize(static_cast<size_t>(t.size));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw DataError("truncated tensor data in " + path.string());
    auto vals = m.params.tensor_values(static_cast<int>(i));
    for (size_t k = 0; k < buf.size(); ++k)
      vals[k] = static_cast<double>(buf[k]);
  }
  return m;
}

inline uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof buf);
    h = fnv1a(buf, static_cast<size_t>(f.gcount()), h);
  }
  return h;
}

}  // namespace synf
