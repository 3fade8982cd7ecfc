#include "matmon/json_io.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "matmon/error.hpp"

namespace matmon {

using nlohmann::json;

namespace {

/// `fields` maps every legal key to whether it is required.
void check_fields(const json& j, const char* what, const std::map<std::string, bool>& fields) {
  if (!j.is_object()) fail(Errc::parse_error, std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (fields.count(key) == 0) {
      fail(Errc::parse_error, std::string(what) + ": unexpected field '" + key + "'");
    }
  }
  for (const auto& [key, required] : fields) {
    if (required && !j.contains(key)) {
      fail(Errc::parse_error, std::string(what) + ": missing field '" + key + "'");
    }
  }
}

std::int64_t get_int(const json& j, const char* what, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    fail(Errc::parse_error, std::string(what) + ": field '" + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

double get_num(const json& j, const char* what, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) {
    fail(Errc::parse_error, std::string(what) + ": field '" + key + "' must be a number");
  }
  return v.get<double>();
}

std::string get_str(const json& j, const char* what, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_string()) {
    fail(Errc::parse_error, std::string(what) + ": field '" + key + "' must be a string");
  }
  return v.get<std::string>();
}

int parse_id_key(const std::string& key, const char* what) {
  int id = 0;
  auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
  if (ec != std::errc{} || ptr != key.data() + key.size()) {
    fail(Errc::parse_error, std::string(what) + ": key '" + key + "' is not a decimal id");
  }
  return id;
}

const json& get_array(const json& j, const char* what, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) {
    fail(Errc::parse_error, std::string(what) + ": field '" + key + "' must be an array");
  }
  return v;
}

}  // namespace

NetworkSpec network_spec_from_json(const json& j) {
  check_fields(j, "network", {{"nodes", true}, {"arcs", true}, {"mmus", true}});
  NetworkSpec spec;
  for (const auto& n : get_array(j, "network", "nodes")) {
    check_fields(n, "node", {{"id", true}, {"label", true}, {"location", false}});
    NodeCompartment node;
    node.id = static_cast<CompartmentId>(get_int(n, "node", "id"));
    node.label = get_str(n, "node", "label");
    if (n.contains("location")) {
      check_fields(n.at("location"), "location", {{"lat", true}, {"lon", true}});
      node.location = GeoPoint{get_num(n.at("location"), "location", "lat"),
                               get_num(n.at("location"), "location", "lon")};
    }
    spec.nodes.push_back(std::move(node));
  }
  for (const auto& a : get_array(j, "network", "arcs")) {
    check_fields(a, "arc", {{"id", true}, {"from", true}, {"to", true}, {"label", true}});
    ArcCompartment arc;
    arc.id = static_cast<CompartmentId>(get_int(a, "arc", "id"));
    arc.from = static_cast<CompartmentId>(get_int(a, "arc", "from"));
    arc.to = static_cast<CompartmentId>(get_int(a, "arc", "to"));
    arc.label = get_str(a, "arc", "label");
    spec.arcs.push_back(std::move(arc));
  }
  for (const auto& u : get_array(j, "network", "mmus")) {
    if (!u.is_number_integer()) fail(Errc::parse_error, "network: mmus entries must be integers");
    spec.mmus.push_back(u.get<CompartmentId>());
  }
  return spec;
}

json network_to_json(const TmnNetwork& net) {
  json j;
  j["nodes"] = json::array();
  for (const auto& n : net.nodes()) {
    json node{{"id", n.id}, {"label", n.label}};
    if (n.location) node["location"] = json{{"lat", n.location->lat}, {"lon", n.location->lon}};
    j["nodes"].push_back(std::move(node));
  }
  j["arcs"] = json::array();
  for (const auto& a : net.arcs()) {
    j["arcs"].push_back(json{{"id", a.id}, {"from", a.from}, {"to", a.to}, {"label", a.label}});
  }
  j["mmus"] = json::array();
  for (CompartmentId u : net.mmu_locations()) j["mmus"].push_back(u);
  return j;
}

CompositionRegistry registry_from_json(const json& j) {
  check_fields(j, "registry", {{"materials", true}, {"classes", true}});
  std::vector<Material> materials;
  for (const auto& m : get_array(j, "registry", "materials")) {
    check_fields(m, "material", {{"id", true}, {"name", true}});
    materials.push_back({static_cast<MaterialId>(get_int(m, "material", "id")),
                         get_str(m, "material", "name")});
  }
  std::vector<ObjectClassDef> classes;
  for (const auto& c : get_array(j, "registry", "classes")) {
    check_fields(c, "class", {{"id", true}, {"name", true}, {"composition", true}});
    ObjectClassDef cls;
    cls.id = static_cast<ClassId>(get_int(c, "class", "id"));
    cls.name = get_str(c, "class", "name");
    const auto& comp = c.at("composition");
    if (!comp.is_object()) fail(Errc::parse_error, "class: field 'composition' must be an object");
    for (const auto& [key, value] : comp.items()) {
      if (!value.is_number_integer()) {
        fail(Errc::parse_error, "composition masses must be integer milligrams");
      }
      cls.composition[parse_id_key(key, "composition")] = value.get<Milligrams>();
    }
    classes.push_back(std::move(cls));
  }
  return CompositionRegistry::build(std::move(materials), std::move(classes));
}

json registry_to_json(const CompositionRegistry& reg) {
  json j;
  j["materials"] = json::array();
  for (const auto& m : reg.materials()) {
    j["materials"].push_back(json{{"id", m.id}, {"name", m.name}});
  }
  j["classes"] = json::array();
  for (const auto& c : reg.classes()) {
    json comp = json::object();
    for (const auto& [mat, mg] : c.composition) comp[std::to_string(mat)] = mg;
    j["classes"].push_back(json{{"id", c.id}, {"name", c.name}, {"composition", std::move(comp)}});
  }
  return j;
}

Scenario scenario_from_json(const json& j) {
  Scenario sc = parse_scenario(j);
  auto violations = validate_scenario(sc);
  if (!violations.empty()) fail(violations.front().code, violations.front().detail);
  return sc;
}

Scenario parse_scenario(const json& j) {
  check_fields(j, "scenario",
               {{"network", true},
                {"registry", true},
                {"initial", true},
                {"itinerary", true},
                {"T_h", true},
                {"horizon_h", true},
                {"epsilon_h", true},
                {"noise", false}});
  Scenario sc;
  sc.net = build_network(network_spec_from_json(j.at("network")));
  sc.reg = registry_from_json(j.at("registry"));

  const auto& initial = j.at("initial");
  if (!initial.is_object()) fail(Errc::parse_error, "scenario: field 'initial' must be an object");
  for (const auto& [node_key, stock] : initial.items()) {
    const CompartmentId node = parse_id_key(node_key, "initial");
    if (!stock.is_object()) fail(Errc::parse_error, "initial: stock must be an object");
    for (const auto& [cls_key, count] : stock.items()) {
      if (!count.is_number_integer()) fail(Errc::parse_error, "initial: counts must be integers");
      sc.initial_objects[node][parse_id_key(cls_key, "initial")] = count.get<int>();
    }
  }

  for (const auto& leg : get_array(j, "scenario", "itinerary")) {
    check_fields(leg, "itinerary entry",
                 {{"class", true}, {"instance", true}, {"arc", true}, {"depart_h", true}, {"arrive_h", true}});
    TransportEvent ev;
    ev.object_class = static_cast<ClassId>(get_int(leg, "itinerary entry", "class"));
    ev.instance = static_cast<int>(get_int(leg, "itinerary entry", "instance"));
    ev.via_arc = static_cast<CompartmentId>(get_int(leg, "itinerary entry", "arc"));
    ev.depart = hours_to_microhours(get_num(leg, "itinerary entry", "depart_h"));
    ev.arrive = hours_to_microhours(get_num(leg, "itinerary entry", "arrive_h"));
    sc.itinerary.push_back(ev);
  }

  sc.sample_time = hours_to_microhours(get_num(j, "scenario", "T_h"));
  sc.horizon = hours_to_microhours(get_num(j, "scenario", "horizon_h"));
  sc.pulse_width = hours_to_microhours(get_num(j, "scenario", "epsilon_h"));

  if (j.contains("noise")) {
    const auto& noise = j.at("noise");
    check_fields(noise, "noise", {{"miss_p", false}, {"confusion", false}, {"seed", false}});
    if (noise.contains("miss_p")) sc.noise.miss_probability = get_num(noise, "noise", "miss_p");
    if (noise.contains("seed")) {
      if (!noise.at("seed").is_number_unsigned() && !noise.at("seed").is_number_integer()) {
        fail(Errc::parse_error, "noise: field 'seed' must be an integer");
      }
      sc.noise.rng_seed = noise.at("seed").get<std::uint64_t>();
    }
    if (noise.contains("confusion")) {
      const auto& conf = noise.at("confusion");
      if (!conf.is_object()) fail(Errc::parse_error, "noise: field 'confusion' must be an object");
      for (const auto& [true_key, row] : conf.items()) {
        if (!row.is_object()) fail(Errc::parse_error, "confusion rows must be objects");
        auto& target = sc.noise.confusion[parse_id_key(true_key, "confusion")];
        for (const auto& [rep_key, p] : row.items()) {
          if (!p.is_number()) fail(Errc::parse_error, "confusion probabilities must be numbers");
          target[parse_id_key(rep_key, "confusion")] = p.get<double>();
        }
      }
    }
  }

  return sc;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) fail(Errc::parse_error, "invalid JSON in " + path.string());
  return j;
}

void save_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
}

TmnNetwork load_network(const std::filesystem::path& path) {
  return build_network(network_spec_from_json(load_json_file(path)));
}

CompositionRegistry load_registry(const std::filesystem::path& path) {
  return registry_from_json(load_json_file(path));
}

Scenario load_scenario(const std::filesystem::path& path) {
  return scenario_from_json(load_json_file(path));
}

std::string registry_hash(const CompositionRegistry& reg) {
  const std::string canonical = registry_to_json(reg).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace matmon
