#include <string_view>

#include "oamnet/train.hpp"
#include "spdc/binary_io.hpp"
#include "spdc/errors.hpp"

namespace oamnet {
namespace {

constexpr std::string_view kMagic = "OAMC";
constexpr std::uint32_t kVersion = 1;

}  // namespace

// Layout: magic, u32 version, u32-prefixed JSON header, then for every
// parameter in header order its values, first and second Adam moments as
// f32, and finally a CRC32 of all preceding bytes.
std::string serialize_checkpoint(const Checkpoint& ck) {
  const auto& model = ck.model;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.shape()}, {"step", p.step}});
  }
  const nlohmann::json header{{"format", "OAMC"},
                              {"config", to_json(model.config())},
                              {"stats", spdc::data::to_json(model.stats())},
                              {"loss_weights", to_json(ck.weights)},
                              {"seed", ck.seed},
                              {"epoch", ck.epoch},
                              {"sim", spdc::data::to_json(ck.sim)},
                              {"parameters", params}};
  spdc::io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put(kVersion);
  w.put_string(header.dump());
  for (const auto& p : model.parameters()) {
    for (const nn::Array<float>* a : {&p.value(), &p.m, &p.v}) {
      w.put_span(std::span<const float>(a->data(), static_cast<std::size_t>(a->size())));
    }
  }
  w.put(spdc::io::crc32(w.bytes()));
  return w.bytes();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  using spdc::FormatError;
  if (bytes.size() < kMagic.size() + 12) throw FormatError("checkpoint truncated");
  if (bytes.substr(0, 4) != kMagic) throw FormatError("not a checkpoint file (bad magic)");
  const auto body = bytes.substr(0, bytes.size() - 4);
  spdc::io::ByteReader tail(bytes.substr(bytes.size() - 4));
  if (tail.get<std::uint32_t>() != spdc::io::crc32(body)) {
    throw FormatError("checkpoint checksum failure (truncated or corrupted)");
  }
  spdc::io::ByteReader rd(body);
  rd.get<std::array<char, 4>>();
  if (const auto v = rd.get<std::uint32_t>(); v != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(v));
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(rd.get_string());
    Checkpoint ck{Model<float>(model_config_from_json(h.at("config")),
                               spdc::data::stats_from_json(h.at("stats")), 0),
                  loss_weights_from_json(h.at("loss_weights")), h.at("seed").get<std::uint64_t>(),
                  spdc::data::sim_config_from_json(h.at("sim")), h.at("epoch").get<int>()};
    auto& params = ck.model.parameters();
    const auto& listed = h.at("parameters");
    if (listed.size() != params.size()) throw FormatError("checkpoint parameter list does not match its config");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (listed[i].at("name").get<std::string>() != p.name ||
          listed[i].at("shape").get<nn::Shape>() != p.shape()) {
        throw FormatError("checkpoint shape mismatch at parameter " + p.name);
      }
      p.step = listed[i].at("step").get<long>();
      for (nn::Array<float>* a : {&p.value(), &p.m, &p.v}) {
        rd.get_span(std::span<float>(a->data(), static_cast<std::size_t>(a->size())));
      }
    }
    if (rd.remaining() != 0) throw FormatError("trailing bytes in checkpoint");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint holds an invalid configuration: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  spdc::io::write_file(path, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(spdc::io::read_file(path));
}

}  // namespace oamnet
