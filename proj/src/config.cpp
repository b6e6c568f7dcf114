#include "meshflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "meshflow/error.hpp"

namespace meshflow {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<ConfigKey> model_keys() {
  return {
      {"code_dim", "1024", "encoding size D"},
      {"encoder_widths", "64,128,256", "pointwise widths before the code layer"},
      {"decoder_widths", "512,1024", "fully connected widths before the output layer"},
      {"points", "5000", "decoder output points (match the cloud size)"},
      {"blocks", "6", "coupling blocks K"},
      {"proj_dim", "128", "coordinate projection width"},
      {"hidden", "256", "conditioner hidden width"},
      {"masked_dims", "", "comma list, one per block (default 0,1,2,...)"},
  };
}

std::vector<ConfigKey> with(std::vector<ConfigKey> a, const std::vector<ConfigKey>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

const std::map<std::string, std::vector<ConfigKey>, std::less<>>& key_table() {
  static const std::map<std::string, std::vector<ConfigKey>, std::less<>> table = [] {
    const std::vector<ConfigKey> common = {
        {"seed", "0", "global seed"},
        {"out", "", "output root"},
    };
    std::map<std::string, std::vector<ConfigKey>, std::less<>> t;
    t["gen-data"] = with(common, {
        {"dataset", "A", "A, B, C or D"},
        {"object", "", "comma list of OBJ/OFF files"},
        {"fixtures", "", "comma list of built-in objects (scissors,hammer,orange,dice,brick,cleanser)"},
        {"fixture_subdivisions", "9", "tessellation of built-in objects"},
        {"sigma", "0.01", "warp displacement std"},
        {"trajectories", "", "trajectories per object (default: dataset preset)"},
        {"steps", "", "steps per trajectory (default: dataset preset)"},
        {"points", "5000", "points per cloud"},
    });
    const std::vector<ConfigKey> train = with(model_keys(), {
        {"manifest", "", "manifest.json of the training data"},
        {"ae_lr", "1e-3", "autoencoder learning rate"},
        {"ae_epochs", "200", "autoencoder epochs"},
        {"max_train_entries", "0", "use only the first n training entries (0 = all)"},
    });
    t["pretrain-ae"] = with(common, train);
    t["train-flow"] = with(with(common, train), {
        {"ae_ckpt", "", "autoencoder checkpoint (train_flow stage)"},
        {"stage", "train_flow", "train_flow or end_to_end"},
        {"encoder_frozen", "true", "keep encoder fixed (train_flow stage)"},
        {"flow_lr", "1e-4", "flow learning rate"},
        {"flow_epochs", "400", "flow epochs"},
    });
    t["infer"] = with(common, {
        {"ckpt", "", "checkpoint"},
        {"template", "", "template mesh"},
        {"cloud", "", "point cloud (.xyz)"},
        {"precision", "float64", "float32 or float64"},
    });
    t["eval"] = with(common, {
        {"ckpt", "", "checkpoint"},
        {"manifest", "", "manifest.json"},
        {"split", "test", "train or test"},
        {"jobs", "1", "parallel workers"},
        {"dump_meshes", "", "directory for predicted meshes"},
        {"experiment_id", "", "label for the metrics rows"},
        {"train_set", "", "label for the metrics rows"},
        {"test_set", "", "label for the metrics rows"},
    });
    t["bench"] = with(with(common, model_keys()), {
        {"ckpt", "", "checkpoint (default: freshly initialized model)"},
        {"template", "", "template mesh (default: built-in object)"},
        {"fixture", "scissors", "built-in object used without --template"},
        {"vertices", "3000", "approximate vertex count of the built-in template"},
        {"cloud", "", "point cloud (default: sampled from the template)"},
        {"iters", "50", "timed iterations (>= 30)"},
        {"warmup", "5", "untimed iterations"},
        {"precision", "float32", "float32 or float64"},
    });
    t["selftest"] = common;
    return t;
  }();
  return table;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"gen-data", "pretrain-ae", "train-flow", "infer",
                                                 "eval",     "bench",       "selftest"};
  return names;
}

const std::vector<ConfigKey>& config_keys(std::string_view subcommand) {
  const auto& t = key_table();
  const auto it = t.find(subcommand);
  if (it == t.end()) throw ConfigError("unknown subcommand '" + std::string(subcommand) + "'");
  return it->second;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ParseError("duplicate key '" + key + "'", line_no);
    }
  }
  return out;
}

RunConfig::RunConfig(std::string subcommand) : subcommand_(std::move(subcommand)) {
  for (const auto& k : config_keys(subcommand_)) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown config key '" + key + "' for " + subcommand_);
  }
  it->second = value;
}

bool RunConfig::has(const std::string& key) const {
  const auto it = values_.find(key);
  return it != values_.end() && !it->second.empty();
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  if (it->second.empty()) throw ConfigError("missing required setting '" + key + "'");
  return it->second;
}

std::string RunConfig::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return parse_number<std::size_t>(key, get(key));
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> RunConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  if (!has(key)) return out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& s : get_list(key)) out.push_back(parse_number<std::size_t>(key, s));
  return out;
}

std::string RunConfig::to_text() const {
  std::string out = "# resolved configuration for " + subcommand_ + "\n";
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

RunConfig resolve_config(const std::string& subcommand,
                         const std::optional<std::filesystem::path>& file,
                         const std::map<std::string, std::string>& overrides,
                         const char* env_seed) {
  RunConfig cfg(subcommand);
  if (env_seed != nullptr && *env_seed != '\0') {
    parse_number<std::uint64_t>("MESHFLOW_SEED", env_seed);
    cfg.set("seed", env_seed);
  }
  if (file) {
    std::ifstream in(*file);
    if (!in) throw IoError("cannot open config " + file->string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(ss.str())) cfg.set(k, v);
  }
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

ModelConfig model_config_from(const RunConfig& cfg) {
  ModelConfig m;
  m.encoder.code_dim = cfg.get_size("code_dim");
  m.encoder.widths = cfg.get_sizes("encoder_widths");
  m.decoder.widths = cfg.get_sizes("decoder_widths");
  m.decoder.num_points = cfg.get_size("points");
  m.flow.blocks = cfg.get_size("blocks");
  m.flow.proj_dim = cfg.get_size("proj_dim");
  m.flow.hidden = cfg.get_size("hidden");
  m.flow.masked_dims = cfg.get_sizes("masked_dims");
  return m;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.manifest = cfg.get("manifest");
  t.model = model_config_from(cfg);
  t.seed = cfg.get_u64("seed");
  t.ae_lr = cfg.get_double("ae_lr");
  t.ae_epochs = cfg.get_size("ae_epochs");
  t.max_train_entries = cfg.get_size("max_train_entries");
  if (cfg.subcommand() == "train-flow") {
    t.stage = parse_stage(cfg.get("stage"));
    if (t.stage == Stage::pretrain_ae) throw ConfigError("train-flow cannot run pretrain_ae");
    t.encoder_frozen = cfg.get_bool("encoder_frozen");
    t.flow_lr = cfg.get_double("flow_lr");
    t.flow_epochs = cfg.get_size("flow_epochs");
  } else {
    t.stage = Stage::pretrain_ae;
  }
  return t;
}

}  // namespace meshflow
