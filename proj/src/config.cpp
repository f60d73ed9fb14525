#include "fieldev/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "fieldev/errors.hpp"

namespace fieldev {

namespace pt = boost::property_tree;

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T value{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size() || t.empty())
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + text + "'");
}

std::vector<int> parse_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<int>(key, item));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// Walks every field once; the same table drives reading and writing.
class Visitor {
 public:
  virtual ~Visitor() = default;
  virtual void section(const std::string& name) = 0;
  virtual void text(const std::string& key, std::string& value) = 0;

  void number(const std::string& key, double& v) { typed(key, v, [&](auto& s) { v = parse_number<double>(full(key), s); }, format_double(v)); }
  void number(const std::string& key, int& v) { typed(key, v, [&](auto& s) { v = parse_number<int>(full(key), s); }, std::to_string(v)); }
  void number(const std::string& key, long& v) { typed(key, v, [&](auto& s) { v = parse_number<long>(full(key), s); }, std::to_string(v)); }
  void number(const std::string& key, std::uint64_t& v) { typed(key, v, [&](auto& s) { v = parse_number<std::uint64_t>(full(key), s); }, std::to_string(v)); }
  void flag(const std::string& key, bool& v) { typed(key, v, [&](auto& s) { v = parse_bool(full(key), s); }, v ? "true" : "false"); }
  void list(const std::string& key, std::vector<int>& v) { typed(key, v, [&](auto& s) { v = parse_list(full(key), s); }, join(v)); }

 protected:
  std::string current;
  std::string full(const std::string& key) const { return current + "." + key; }

 private:
  template <class T, class Parse>
  void typed(const std::string& key, T&, Parse parse, std::string formatted) {
    std::string s = formatted;
    text(key, s);
    if (s != formatted) parse(s);
  }
};

class Reader : public Visitor {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}
  void section(const std::string& name) override {
    current = name;
    sections_.insert(name);
  }
  void text(const std::string& key, std::string& value) override {
    used_.insert(full(key));
    if (auto v = tree_.get_optional<std::string>(pt::ptree::path_type(full(key), '.'))) value = trim(*v);
  }
  bool has(const std::string& key) const {
    return tree_.get_optional<std::string>(pt::ptree::path_type(key, '.')).has_value();
  }
  void check_unknown() const {
    for (const auto& [sec, body] : tree_) {
      if (!sections_.count(sec)) throw ConfigError("unknown config section [" + sec + "]");
      if (body.empty()) throw ConfigError("config key " + sec + " must be inside a section");
      for (const auto& [key, _] : body) {
        if (!used_.count(sec + "." + key))
          throw ConfigError("unknown config key '" + key + "' in section [" + sec + "]");
      }
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> sections_, used_;
};

class Writer : public Visitor {
 public:
  void section(const std::string& name) override {
    if (!out_.str().empty()) out_ << '\n';
    out_ << '[' << name << "]\n";
    current = name;
  }
  void text(const std::string& key, std::string& value) override {
    out_ << key << " = " << value << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

void visit(Visitor& v, RunConfig& c) {
  v.section("geomodel");
  v.text("source", c.geomodel_source);
  std::string path = c.geomodel_path.string();
  v.text("path", path);
  c.geomodel_path = path;
  v.number("nx", c.grid.nx);
  v.number("ny", c.grid.ny);
  v.number("dx", c.grid.dx);
  v.number("dy", c.grid.dy);
  v.number("thickness", c.grid.thickness);
  v.number("mean_log_k", c.lognormal.mean_log_k);
  v.number("sigma_log_k", c.lognormal.sigma_log_k);
  v.number("correlation_length", c.lognormal.correlation_length);
  v.number("porosity", c.lognormal.porosity);
  v.number("seed", c.lognormal.seed);

  v.section("fluid");
  v.number("mu_oil_cp", c.fluids.mu_oil);
  v.number("mu_water_cp", c.fluids.mu_water);
  v.number("swr", c.fluids.swr);
  v.number("sor", c.fluids.sor);
  v.number("corey_nw", c.fluids.n_w);
  v.number("corey_no", c.fluids.n_o);

  v.section("wells");
  v.number("p_init_pa", c.wells.p_init);
  v.number("sw_init", c.wells.sw_init);
  v.number("producer_bhp_pa", c.wells.producer_bhp);
  v.number("injector_bhp_pa", c.wells.injector_bhp);
  v.number("wellbore_radius_m", c.wells.wellbore_radius);

  v.section("economics");
  v.number("oil_price", c.econ.oil_price);
  v.number("water_production_cost", c.econ.water_production_cost);
  v.number("water_injection_cost", c.econ.water_injection_cost);
  v.number("well_cost", c.econ.well_cost);
  v.number("discount_rate", c.econ.discount_rate);

  v.section("env");
  v.number("stages", c.stages);
  v.number("stage_length_days", c.stage_length);
  v.number("max_wells_per_type", c.max_wells_per_type);
  std::string norm = c.pressure_normalization == PressureNormalization::MinMax ? "minmax" : "fixed";
  v.text("pressure_normalization", norm);
  if (norm == "minmax") {
    c.pressure_normalization = PressureNormalization::MinMax;
  } else if (norm == "fixed") {
    c.pressure_normalization = PressureNormalization::FixedBounds;
  } else {
    throw ConfigError("config key env.pressure_normalization: expected fixed or minmax, got '" + norm + "'");
  }
  v.flag("use_restart", c.use_restart);
  v.number("pressure_step_days", c.stepping.pressure_step);
  v.number("cfl", c.stepping.cfl);
  v.number("max_substeps", c.stepping.max_substeps);

  v.section("network");
  std::string variant = nn::to_string(c.network.variant);
  v.text("variant", variant);
  if (variant != nn::to_string(c.network.variant)) {
    if (variant == "small") {
      c.network = nn::NetworkSpec::small();
    } else if (variant == "large") {
      c.network = nn::NetworkSpec::large();
    } else {
      throw ConfigError("config key network.variant: expected small or large, got '" + variant + "'");
    }
  }
  v.list("trunk_filters", c.network.trunk_filters);
  v.number("kernel", c.network.kernel);
  v.number("residual_blocks", c.network.residual_blocks);
  v.number("arm_filters", c.network.arm_filters);
  v.number("arm_kernel", c.network.arm_kernel);
  v.list("arm_dense", c.network.arm_dense);
  v.list("vector_dense", c.network.vector_dense);
  v.number("head_init_scale", c.network.head_init_scale);
  v.number("init_seed", c.network_seed);

  v.section("ppo");
  v.number("iterations", c.iterations);
  v.number("episodes_per_iter", c.ppo.episodes_per_iter);
  v.number("minibatch_episodes", c.ppo.minibatch_episodes);
  v.number("learning_rate", c.ppo.lr);
  v.number("clip", c.ppo.clip);
  v.number("gamma", c.ppo.gamma);
  v.number("lambda", c.ppo.lambda);
  v.number("epochs", c.ppo.epochs);
  v.number("value_coef", c.ppo.value_coef);
  v.number("entropy_coef", c.ppo.entropy_coef);
  v.number("workers", c.ppo.workers);
  v.number("reward_scale", c.ppo.reward_scale);
  v.flag("location_always_on", c.ppo.location_always_on);
  v.number("seed", c.ppo.seed);
  v.number("checkpoint_every", c.checkpoint_every);

  v.section("psomads");
  v.number("swarm_size", c.psomads.swarm_size);
  v.number("budget", c.psomads.budget);
  v.number("inertia", c.psomads.inertia);
  v.number("cognitive", c.psomads.cognitive);
  v.number("social", c.psomads.social);
  v.number("mesh_initial", c.psomads.mesh_initial);
  v.number("mesh_max", c.psomads.mesh_max);
  v.number("stall", c.psomads.stall);
  v.number("max_idle_rounds", c.psomads.max_idle_rounds);
  v.number("workers", c.psomads.workers);
  v.number("seed", c.psomads.seed);
  v.number("runs", c.runs);

  v.section("output");
  std::string dir = c.output_dir.string();
  v.text("dir", dir);
  c.output_dir = dir;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  Reader r(tree);
  // The variant picks the layer defaults before other network keys apply.
  if (auto v = tree.get_optional<std::string>("network.variant")) {
    if (trim(*v) == "large") c.network = nn::NetworkSpec::large();
  }
  visit(r, c);
  r.check_unknown();

  if (c.geomodel_source.empty()) throw ConfigError("config key geomodel.source is required (lognormal or file)");
  if (c.geomodel_source == "file") {
    if (c.geomodel_path.empty()) throw ConfigError("config key geomodel.path is required when source = file");
    if (c.geomodel_path.is_relative() && !base_dir.empty()) c.geomodel_path = base_dir / c.geomodel_path;
  } else if (c.geomodel_source != "lognormal") {
    throw ConfigError("config key geomodel.source: expected lognormal or file, got '" + c.geomodel_source + "'");
  }
  if (c.output_dir.is_relative() && r.has("output.dir") && !base_dir.empty())
    c.output_dir = base_dir / c.output_dir;
  if (c.iterations < 0) throw ConfigError("config key ppo.iterations must be >= 0");
  if (c.runs < 1) throw ConfigError("config key psomads.runs must be >= 1");
  try {
    c.network.validate();
    c.psomads.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  c.ppo.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string resolved_config(const RunConfig& config) {
  RunConfig copy = config;
  Writer w;
  visit(w, copy);
  return w.str();
}

EnvConfig RunConfig::make_env() const {
  EnvConfig env;
  try {
    if (geomodel_source == "file") {
      env.model = std::make_shared<GeoModel>(load_geomodel(geomodel_path));
    } else {
      grid.validate();
      env.model = std::make_shared<GeoModel>(generate_lognormal(grid, lognormal));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("geomodel: ") + e.what());
  }
  env.fluids = fluids;
  env.econ = econ;
  env.wells = wells;
  env.stepping = stepping;
  env.stages = stages;
  env.stage_length = stage_length;
  env.max_wells_per_type = max_wells_per_type;
  env.pressure_normalization = pressure_normalization;
  env.use_restart = use_restart;
  env.validate();
  return env;
}

}  // namespace fieldev
