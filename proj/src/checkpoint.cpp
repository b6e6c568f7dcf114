#include "meshflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <utility>
#include <vector>

namespace meshflow {
namespace {

using nlohmann::json;
static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order");

constexpr char kMagic[4] = {'M', 'F', 'C', 'K'};

json model_config_json(const ModelConfig& c) {
  return {
      {"encoder", {{"widths", c.encoder.widths}, {"code_dim", c.encoder.code_dim}}},
      {"decoder", {{"widths", c.decoder.widths}, {"num_points", c.decoder.num_points}}},
      {"flow",
       {{"blocks", c.flow.blocks},
        {"proj_dim", c.flow.proj_dim},
        {"hidden", c.flow.hidden},
        {"masked_dims", c.flow.masked_dims},
        {"max_abs_log_scale", c.flow.max_abs_log_scale}}},
  };
}

ModelConfig model_config_from(const json& j) {
  ModelConfig c;
  c.encoder.widths = j.at("encoder").at("widths").get<std::vector<std::size_t>>();
  c.encoder.code_dim = j.at("encoder").at("code_dim").get<std::size_t>();
  c.decoder.widths = j.at("decoder").at("widths").get<std::vector<std::size_t>>();
  c.decoder.num_points = j.at("decoder").at("num_points").get<std::size_t>();
  const json& f = j.at("flow");
  c.flow.blocks = f.at("blocks").get<std::size_t>();
  c.flow.proj_dim = f.at("proj_dim").get<std::size_t>();
  c.flow.hidden = f.at("hidden").get<std::size_t>();
  c.flow.masked_dims = f.at("masked_dims").get<std::vector<std::size_t>>();
  c.flow.max_abs_log_scale = f.at("max_abs_log_scale").get<double>();
  return c;
}

// Every tensor stored in a checkpoint, in file order.
std::vector<std::pair<std::string, Tensor*>> tensor_slots(Checkpoint& ckpt) {
  std::vector<std::pair<std::string, Tensor*>> slots;
  for (Parameter* p : ckpt.model.parameters()) slots.emplace_back(p->name, &p->value);
  auto& norms = ckpt.model.encoder.norms();
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const std::string base = "encoder.bn" + std::to_string(i);
    slots.emplace_back(base + ".running_mean", &norms[i].stats.running_mean);
    slots.emplace_back(base + ".running_var", &norms[i].stats.running_var);
  }
  for (auto [tag, state] : {std::pair{"ae", &ckpt.ae_optimizer},
                            std::pair{"flow", &ckpt.flow_optimizer}}) {
    for (auto& [name, m] : state->moments) {
      slots.emplace_back(std::string("opt.") + tag + ".m." + name, &m.first);
      slots.emplace_back(std::string("opt.") + tag + ".v." + name, &m.second);
    }
  }
  return slots;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw CorruptFileError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt_in) {
  auto& ckpt = const_cast<Checkpoint&>(ckpt_in);  // slots are only read here
  const auto slots = tensor_slots(ckpt);
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : slots) {
    table.push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}, {"offset", offset}});
    offset += t->size();
  }
  const json header = {
      {"stage", ckpt.stage},
      {"model", model_config_json(ckpt.model.config)},
      {"optimizer", {{"ae_step", ckpt.ae_optimizer.step}, {"flow_step", ckpt.flow_optimizer.step}}},
      {"config", ckpt.config},
      {"tensors", table},
      {"payload_values", offset},
  };
  const std::string text = header.dump();
  std::string out;
  out.reserve(16 + text.size() + offset * sizeof(double));
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& [name, t] : slots) {
    out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptFileError("not a checkpoint (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                               ", expected " + std::to_string(kCheckpointVersion));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw CorruptFileError("checkpoint truncated in header");
  json header;
  Checkpoint ckpt;
  std::size_t payload_values = 0;
  try {
    header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    ckpt.stage = header.at("stage").get<std::string>();
    ckpt.config = header.at("config").get<std::map<std::string, std::string>>();
    ckpt.ae_optimizer.step = header.at("optimizer").at("ae_step").get<std::uint64_t>();
    ckpt.flow_optimizer.step = header.at("optimizer").at("flow_step").get<std::uint64_t>();
    payload_values = header.at("payload_values").get<std::size_t>();
    ckpt.model = Model::create(model_config_from(header.at("model")), 0);
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptFileError(std::string("invalid model configuration in checkpoint: ") + e.what());
  }
  pos += header_len;
  const std::size_t payload_bytes = bytes.size() - pos;
  if (payload_bytes != payload_values * sizeof(double)) {
    throw CorruptFileError("checkpoint payload has " + std::to_string(payload_bytes) +
                           " bytes, header declares " +
                           std::to_string(payload_values * sizeof(double)));
  }
  const char* payload = bytes.data() + pos;

  struct Entry {
    std::size_t rows, cols, offset;
  };
  std::map<std::string, Entry> entries;
  try {
    for (const auto& t : header.at("tensors")) {
      Entry e{t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
              t.at("offset").get<std::size_t>()};
      if (e.offset > payload_values || e.rows * e.cols > payload_values - e.offset) {
        throw CorruptFileError("tensor table points past the payload");
      }
      entries.emplace(t.at("name").get<std::string>(), e);
    }
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed tensor table: ") + e.what());
  }

  auto fill = [&](const std::string& name, Tensor& dst, bool shape_known) {
    const auto it = entries.find(name);
    if (it == entries.end()) throw CorruptFileError("checkpoint lacks tensor " + name);
    const Entry& e = it->second;
    if (shape_known && (e.rows != dst.rows() || e.cols != dst.cols())) {
      throw ShapeError("tensor " + name + " stored as " + std::to_string(e.rows) + "x" +
                       std::to_string(e.cols) + ", model expects " + std::to_string(dst.rows()) +
                       "x" + std::to_string(dst.cols()));
    }
    std::vector<double> v(e.rows * e.cols);
    std::memcpy(v.data(), payload + e.offset * sizeof(double), v.size() * sizeof(double));
    dst = Tensor(e.rows, e.cols, std::move(v));
    entries.erase(it);
  };

  for (auto& [name, t] : tensor_slots(ckpt)) fill(name, *t, true);
  // Whatever is left must be optimizer moments.
  auto remaining = entries;
  for (const auto& [name, e] : remaining) {
    for (auto [tag, state] : {std::pair{std::string("opt.ae."), &ckpt.ae_optimizer},
                              std::pair{std::string("opt.flow."), &ckpt.flow_optimizer}}) {
      if (name.rfind(tag + "m.", 0) == 0) {
        const std::string param = name.substr(tag.size() + 2);
        auto& m = state->moments[param];
        fill(name, m.first, false);
        fill(tag + "v." + param, m.second, false);
      }
    }
  }
  if (!entries.empty()) throw CorruptFileError("unexpected tensor " + entries.begin()->first);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void require_compatible(const Checkpoint& ckpt, std::size_t code_dim, std::size_t blocks) {
  const auto& c = ckpt.model.config;
  if (c.code_dim() != code_dim) {
    throw ConfigError("checkpoint encoding size " + std::to_string(c.code_dim()) +
                      " does not match configured " + std::to_string(code_dim));
  }
  if (c.blocks() != blocks) {
    throw ConfigError("checkpoint has " + std::to_string(c.blocks()) +
                      " coupling blocks, configuration asks for " + std::to_string(blocks));
  }
}

}  // namespace meshflow
