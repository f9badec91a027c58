#include "minipc/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace minipc {

namespace {

using nlohmann::json;

void read_u64(const json& obj, const char* key, uint64_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<int64_t>() >= 0)) {
    throw ConfigError(std::string("cost.") + key + " must be a non-negative integer");
  }
  out = v.get<uint64_t>();
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  RunConfig cfg;
  if (j.contains("mode")) {
    const auto m = parse_mode(j.at("mode").get<std::string>());
    if (!m) throw ConfigError("mode must be bare, lightweight or fullvirt");
    cfg.mode = *m;
  }
  if (j.contains("cost")) {
    const json& c = j.at("cost");
    if (!c.is_object()) throw ConfigError("cost must be an object");
    read_u64(c, "cycles_per_instr", cfg.cost.cycles_per_instr);
    read_u64(c, "world_switch", cfg.cost.world_switch);
    read_u64(c, "emulate_port", cfg.cost.emulate_port);
    read_u64(c, "dma_copy_per_byte", cfg.cost.dma_copy_per_byte);
    read_u64(c, "clock_hz", cfg.cost.clock_hz);
    read_u64(c, "disk_cycles_per_byte", cfg.cost.disk_cycles_per_byte);
    read_u64(c, "nic_cycles_per_byte", cfg.cost.nic_cycles_per_byte);
    if (cfg.cost.clock_hz == 0) throw ConfigError("cost.clock_hz must be positive");
    if (cfg.cost.cycles_per_instr == 0) throw ConfigError("cost.cycles_per_instr must be positive");
  }
  if (j.contains("mem_mib")) {
    const int64_t mib = j.at("mem_mib").get<int64_t>();
    if (mib < 2 || mib > 1024) throw ConfigError("mem_mib must be in [2, 1024]");
    cfg.mem_mib = static_cast<uint32_t>(mib);
  }
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["mode"] = mode_name(cfg.mode);
  j["mem_mib"] = cfg.mem_mib;
  j["cost"] = {
      {"cycles_per_instr", cfg.cost.cycles_per_instr},
      {"world_switch", cfg.cost.world_switch},
      {"emulate_port", cfg.cost.emulate_port},
      {"dma_copy_per_byte", cfg.cost.dma_copy_per_byte},
      {"clock_hz", cfg.cost.clock_hz},
      {"disk_cycles_per_byte", cfg.cost.disk_cycles_per_byte},
      {"nic_cycles_per_byte", cfg.cost.nic_cycles_per_byte},
  };
  return j.dump(2) + "\n";
}

}  // namespace minipc
