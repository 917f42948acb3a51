#ifndef SFFNET_CHECKPOINT_HPP
#define SFFNET_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sffnet/io.hpp"
#include "sffnet/model.hpp"
#include "sffnet/optim.hpp"

namespace sffnet {

// "SFFC" | u16 version | config text | i64 step | i64 epoch | f64 best mIoU | i64 best epoch
//        | u32 count | count x (name, u8 kind, tensor file bytes)

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class TensorKind : std::uint8_t { param = 0, buffer = 1, adam_m = 2, adam_v = 3 };

struct CheckpointEntry {
  std::string name;
  TensorKind kind = TensorKind::param;
  TensorFile tensor;
};

struct Checkpoint {
  std::string config_text;
  std::int64_t step = 0;
  std::int64_t epoch = -1;  // last completed epoch
  double best_miou = -1;
  std::int64_t best_epoch = -1;
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(const std::string& name, TensorKind kind) const {
    for (const auto& e : tensors)
      if (e.name == name && e.kind == kind) return &e;
    return nullptr;
  }
};

inline Bytes encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.put_bytes("SFFC", 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put_string(c.config_text);
  w.put<std::int64_t>(c.step);
  w.put<std::int64_t>(c.epoch);
  w.put<double>(c.best_miou);
  w.put<std::int64_t>(c.best_epoch);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& e : c.tensors) {
    w.put_string(e.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.kind));
    const Bytes t = encode_tensor_file(e.tensor);
    w.put<std::uint64_t>(t.size());
    w.put_bytes(t.data(), t.size());
  }
  return w.take();
}

inline Checkpoint decode_checkpoint(const Bytes& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, "SFFC", 4) != 0) throw ParseError("checkpoint: bad magic", 0);
  const std::size_t vpos = r.pos();
  if (const auto v = r.get<std::uint16_t>("version"); v != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(v), vpos);
  }
  Checkpoint c;
  c.config_text = r.get_string("config");
  c.step = r.get<std::int64_t>("step");
  c.epoch = r.get<std::int64_t>("epoch");
  c.best_miou = r.get<double>("best mIoU");
  c.best_epoch = r.get<std::int64_t>("best epoch");
  const auto count = r.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.get_string("tensor name");
    const std::size_t kpos = r.pos();
    const auto kind = r.get<std::uint8_t>("tensor kind");
    if (kind > 3) throw ParseError("checkpoint: unknown tensor kind " + std::to_string(kind), kpos);
    e.kind = static_cast<TensorKind>(kind);
    const auto size = r.get<std::uint64_t>("tensor size");
    const std::size_t tpos = r.pos();
    r.need(size, "tensor bytes");
    Bytes t(size);
    r.get_bytes(t.data(), size, "tensor bytes");
    try {
      e.tensor = decode_tensor_file(t);
    } catch (const ParseError& err) {
      throw ParseError(std::string("checkpoint tensor '") + e.name + "': " + err.what(), tpos + err.offset());
    }
    c.tensors.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes", r.pos());
  return c;
}

/// Captures parameters, normalization buffers and (optionally) optimizer moments.
template <typename T>
void store_model_state(Checkpoint& c, const SffNet<T>& net, AdamW<T>* opt = nullptr) {
  for (const auto& p : net.registry().parameters()) c.tensors.push_back({p.name, TensorKind::param, to_tensor_file(p.var.value())});
  for (const auto& b : net.registry().buffers()) c.tensors.push_back({b.name, TensorKind::buffer, to_tensor_file(*b.tensor)});
  if (!opt) return;
  const auto& params = opt->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.tensors.push_back({params[i].name, TensorKind::adam_m, to_tensor_file(opt->first_moments()[i])});
    c.tensors.push_back({params[i].name, TensorKind::adam_v, to_tensor_file(opt->second_moments()[i])});
  }
}

/// Restores every registered tensor; a missing or mis-shaped entry is an error.
template <typename T>
void load_model_state(const Checkpoint& c, SffNet<T>& net, AdamW<T>* opt = nullptr) {
  auto fetch = [&](const std::string& name, TensorKind kind, const Shape& shape) {
    const auto* e = c.find(name, kind);
    if (!e) throw ConfigError("checkpoint has no tensor '" + name + "' of kind " + std::to_string(int(kind)));
    Tensor<T> t = from_tensor_file<T>(e->tensor);
    if (t.shape() != shape) {
      throw ShapeError("checkpoint tensor '" + name + "' is " + t.shape().str() + ", model expects " + shape.str());
    }
    return t;
  };
  for (const auto& p : net.registry().parameters()) {
    Var<T> v = p.var;
    v.mutable_value() = fetch(p.name, TensorKind::param, v.shape());
  }
  for (const auto& b : net.registry().buffers()) *b.tensor = fetch(b.name, TensorKind::buffer, b.tensor->shape());
  if (!opt) return;
  const auto& params = opt->parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt->first_moments()[i] = fetch(params[i].name, TensorKind::adam_m, params[i].var.shape());
    opt->second_moments()[i] = fetch(params[i].name, TensorKind::adam_v, params[i].var.shape());
  }
  opt->set_steps(c.step);
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  // Write then rename so a crash never leaves a half-written checkpoint behind.
  const auto tmp = path.string() + ".tmp";
  write_file(tmp, encode_checkpoint(c));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at '" + path.string() + "': " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace sffnet

#endif  // SFFNET_CHECKPOINT_HPP
