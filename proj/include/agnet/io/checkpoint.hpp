#pragma once

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "agnet/error.hpp"
#include "agnet/io/config.hpp"
#include "agnet/io/image_io.hpp"
#include "agnet/net/params.hpp"
#include "agnet/numerics/sgd.hpp"
#include "agnet/training/trainer.hpp"

namespace agnet::io {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'A', 'G', 'N', 'E', 'T', '1', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t num_classes = 0;
  std::size_t channels = 0;
  int kappa = 0;
  int image_size = 0;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<std::string> class_names;
  RunConfig config;  // data paths and worker count are not persisted
};

struct Checkpoint {
  CheckpointMeta meta;
  ParamTensors<float> params;
  std::vector<Tensor<float>> velocity;  // empty when the optimizer state was not saved
};

namespace detail {

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : bytes_(b), end_(end) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw CheckpointError("checkpoint is truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline void write_record(Writer& w, const std::string& name, const Tensor<float>& t) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) w.u64(e);
  w.raw(t.data().data(), t.size() * sizeof(float));
}

inline std::uint32_t crc(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

inline nlohmann::json meta_to_json(const CheckpointMeta& m) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(m.config)) {
    if (k.rfind("data.", 0) == 0 || k == "train.workers") continue;
    cfg[k] = v;
  }
  return {{"num_classes", m.num_classes}, {"channels", m.channels}, {"kappa", m.kappa},
          {"image_size", m.image_size},   {"seed", m.seed},         {"epoch", m.epoch},
          {"classes", m.class_names},     {"config", cfg}};
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta m;
  try {
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.channels = j.at("channels").get<std::size_t>();
    m.kappa = j.at("kappa").get<int>();
    m.image_size = j.at("image_size").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epoch = j.at("epoch").get<int>();
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("config").items()) set_config_value(m.config, k, v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint metadata is malformed: ") + e.what());
  }
  return m;
}

}  // namespace detail

inline CheckpointMeta make_meta(const RunConfig& run, const ModelConfig& model, std::vector<std::string> class_names,
                                int epoch) {
  CheckpointMeta m;
  m.num_classes = model.num_classes;
  m.channels = model.channels;
  m.kappa = run.experiment.train.kappa;
  m.image_size = run.experiment.train.image_size;
  m.seed = run.experiment.train.seed;
  m.epoch = epoch;
  m.class_names = std::move(class_names);
  m.config = run;
  return m;
}

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  detail::Writer w;
  w.raw(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.str(detail::meta_to_json(ck.meta).dump());
  std::vector<std::pair<std::string, const Tensor<float>*>> records;
  ck.params.visit([&](const std::string& name, const Tensor<float>& t) { records.emplace_back(name, &t); });
  const std::size_t nparams = records.size();
  if (!ck.velocity.empty() && ck.velocity.size() != nparams) {
    throw CheckpointError("velocity count does not match parameter count");
  }
  for (std::size_t i = 0; i < ck.velocity.size(); ++i) records.emplace_back("velocity/" + records[i].first, &ck.velocity[i]);
  w.u32(static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, t] : records) detail::write_record(w, name, *t);
  const std::uint32_t sum = detail::crc(w.bytes.data(), w.bytes.size());
  w.u32(sum);
  return std::move(w.bytes);
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not an AG-Net checkpoint (bad magic)");
  }
  if (bytes.size() < 16) throw CheckpointError("checkpoint is truncated");
  detail::Reader header(bytes, bytes.size());
  std::uint8_t skip[8];
  header.raw(skip, 8);
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (detail::crc(bytes.data(), body) != stored) throw CheckpointError("checkpoint CRC mismatch (file is corrupt)");

  detail::Reader r(bytes, body);
  r.raw(skip, 8);
  r.u32();
  Checkpoint ck;
  try {
    ck.meta = detail::meta_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const ModelConfig model = ck.meta.config.experiment.model_config(ck.meta.num_classes);
  ck.params = zero_params<float>(model);

  std::vector<std::pair<std::string, Tensor<float>*>> slots;
  ck.params.visit([&](const std::string& name, Tensor<float>& t) { slots.emplace_back(name, &t); });
  const std::uint32_t count = r.u32();
  if (count != slots.size() && count != 2 * slots.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " records, expected " +
                          std::to_string(slots.size()));
  }
  if (count == 2 * slots.size()) {
    const std::size_t n = slots.size();
    for (std::size_t i = 0; i < n; ++i) ck.velocity.emplace_back(slots[i].second->shape());
    for (std::size_t i = 0; i < n; ++i) slots.emplace_back("velocity/" + slots[i].first, &ck.velocity[i]);
  }
  for (const auto& [expected, target] : slots) {
    const std::string name = r.str();
    if (name != expected) throw CheckpointError("unexpected record '" + name + "', expected '" + expected + "'");
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(r.u64()));
    if (shape != target->shape()) {
      throw CheckpointError("record '" + name + "' has shape " + to_string(shape) + ", expected " +
                            to_string(target->shape()));
    }
    r.raw(target->data().data(), target->size() * sizeof(float));
  }
  if (r.position() != body) throw CheckpointError("trailing bytes after the last record");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_bytes(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_bytes(path)); }

}  // namespace agnet::io
