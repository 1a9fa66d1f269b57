#include "plreg/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "plreg/errors.hpp"

namespace plreg {

using nlohmann::json;

void ExperimentConfig::validate() const {
  spec.validate();
  train.validate();
  if (dim < 2) throw ConfigError("dim must be >= 2");
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (!use_mask && (train.weights.w_p1 > 0.0 || train.weights.w_p2 > 0.0)) {
    throw ConfigError("use_mask=false leaves no mask for w_p1/w_p2; set both to 0");
  }
  if (!use_mask && head_input == HeadInput::Masked) {
    throw ConfigError("use_mask=false requires head_input 'raw'");
  }
  if (task == Task::MdgGcd) {
    if (spec.num_domains < 2) throw ConfigError("mdg_gcd needs num_domains >= 2");
    if (held_out_domain &&
        (*held_out_domain < 0 || *held_out_domain >= static_cast<int>(spec.num_domains))) {
      throw ConfigError("held_out_domain " + std::to_string(*held_out_domain) +
                        " outside 0.." + std::to_string(spec.num_domains - 1));
    }
  }
  if (task == Task::Cil && test_per_class < 1) throw ConfigError("test_per_class must be >= 1");
}

namespace {

bool same_spec(const SyntheticSpec& a, const SyntheticSpec& b) {
  return a.num_classes == b.num_classes && a.num_known == b.num_known &&
         a.input_dim == b.input_dim && a.semantic_dims_per_class == b.semantic_dims_per_class &&
         a.noise_dims == b.noise_dims && a.domain_dims == b.domain_dims &&
         a.noise_sigma == b.noise_sigma && a.num_domains == b.num_domains &&
         a.domain_shift == b.domain_shift && a.samples_per_class_max == b.samples_per_class_max &&
         a.imbalance_ratio == b.imbalance_ratio && a.seed == b.seed;
}

bool same_optim(const OptimConfig& a, const OptimConfig& b) {
  return a.lr == b.lr && a.beta1 == b.beta1 && a.beta2 == b.beta2 && a.epsilon == b.epsilon &&
         a.epochs == b.epochs && a.batch_size == b.batch_size && a.seed == b.seed;
}

bool same_run(const TrainRun& a, const TrainRun& b) {
  return a.weights == b.weights && a.lambda_infomax == b.lambda_infomax &&
         a.lambda_kd == b.lambda_kd && a.temperature == b.temperature &&
         a.reinit_partial_cls == b.reinit_partial_cls && a.eval_interval == b.eval_interval &&
         a.validation_fraction == b.validation_fraction && same_optim(a.optim, b.optim);
}

}  // namespace

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return task == o.task && preset == o.preset && same_spec(spec, o.spec) && dim == o.dim &&
         depth == o.depth && head_input == o.head_input && use_mask == o.use_mask &&
         same_run(train, o.train) && sessions == o.sessions && style == o.style &&
         held_out_domain == o.held_out_domain && test_per_class == o.test_per_class &&
         seeds == o.seeds && output_dir == o.output_dir;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = [] {
    std::vector<Preset> p;
    auto gcd = [&](std::string name, double a, double b, double c, bool scaled) {
      p.push_back({std::move(name), {a, b, c}, scaled, Task::Gcd, std::nullopt, std::nullopt});
    };
    auto mdg = [&](std::string name, double a, double b, double c) {
      p.push_back({std::move(name), {a, b, c}, false, Task::MdgGcd, std::nullopt, std::nullopt});
    };
    auto cil = [&](std::string name, double a, double b, double c, CilStyle s) {
      p.push_back({std::move(name), {a, b, c}, false, Task::Cil, s, std::size_t{50}});
    };
    gcd("table4_cub", 1.0, 5e-1, 1e-1, false);
    gcd("table4_stanford_cars", 5.0, 5e-1, 1e-3, true);
    gcd("table4_herbarium19", 1.5e2, 1e2, 2e-1, true);
    gcd("table4_cifar100", 1.0, 5e-1, 2.5e-4, true);
    gcd("table4_cifar10", 1e3, 5.0, 1e-2, true);
    gcd("table4_imagenet100", 1.0, 5e-1, 1e-2, true);
    mdg("table5_pacs", 5e-2, 5e-2, 1e-1);
    mdg("table5_officehome", 1e-1, 5e-2, 1e-1);
    mdg("table5_vlcs", 1e2, 5e-2, 1e-1);
    mdg("table5_terraincognita", 7.5, 5e-2, 1e-1);
    mdg("table5_domainnet", 1e-1, 5e-2, 1e-1);
    cil("table8_cifar100_ordered", 1e-4, 1e-4, 1e-3, CilStyle::Ordered);
    cil("table8_imagenet_subset_ordered", 1e-3, 1e-3, 5e-3, CilStyle::Ordered);
    cil("table8_cifar100_shuffled", 1e-3, 1e-3, 1e-3, CilStyle::Shuffled);
    cil("table8_imagenet_subset_shuffled", 1e-3, 1e-3, 1e-3, CilStyle::Shuffled);
    cil("table9_cifar100_ordered", 1e-4, 1e-4, 1e-2, CilStyle::Ordered);
    cil("table9_imagenet_subset_ordered", 1e-4, 1e-4, 1e-2, CilStyle::Ordered);
    cil("table9_cifar100_shuffled", 1e-3, 1e-3, 1e-2, CilStyle::Shuffled);
    cil("table9_imagenet_subset_shuffled", 1e-3, 1e-3, 5e-3, CilStyle::Shuffled);
    return p;
  }();
  return table;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : presets())
    if (p.name == name) return p;
  std::string known;
  for (const Preset& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

namespace {

// Line of the first occurrence of `"key":` in the source text, 0 when absent.
std::size_t line_of(const std::string& text, const std::string& key) {
  const std::regex re("\"" + std::regex_replace(key, std::regex(R"([.^$|()\[\]{}*+?\\])"), R"(\$&)") +
                      "\"\\s*:");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return 0;
  const auto pos = static_cast<std::size_t>(m.position(0));
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

class Reader {
 public:
  Reader(const json& doc, const std::string& text) : doc_(doc), text_(text) {}

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::size_t line = line_of(text_, key);
    throw ConfigError("config key '" + key + "'" +
                      (line ? " (line " + std::to_string(line) + ")" : std::string()) + ": " +
                      what);
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  void read(const std::string& key, std::size_t& out) const {
    if (!has(key)) return;
    const json& v = doc_.at(key);
    if (!v.is_number_unsigned())
      fail(key, "expected a non-negative integer, got " + v.dump());
    out = v.get<std::size_t>();
  }
  void read(const std::string& key, double& out) const {
    if (!has(key)) return;
    const json& v = doc_.at(key);
    if (!v.is_number()) fail(key, "expected a number, got " + v.dump());
    out = v.get<double>();
  }
  void read(const std::string& key, bool& out) const {
    if (!has(key)) return;
    const json& v = doc_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false, got " + v.dump());
    out = v.get<bool>();
  }
  void read(const std::string& key, std::string& out) const {
    if (!has(key)) return;
    const json& v = doc_.at(key);
    if (!v.is_string()) fail(key, "expected a string, got " + v.dump());
    out = v.get<std::string>();
  }

  template <class F>
  void parse_enum(const std::string& key, F&& apply) const {
    if (!has(key)) return;
    std::string s;
    read(key, s);
    try {
      apply(s);
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }

 private:
  const json& doc_;
  const std::string& text_;
};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "task", "preset", "num_classes", "num_known", "input_dim", "semantic_dims_per_class",
      "noise_dims", "domain_dims", "noise_sigma", "num_domains", "domain_shift",
      "samples_per_class_max", "imbalance_ratio", "dim", "depth", "head_input", "use_mask",
      "w_p1", "w_p2", "w_lreg", "lambda_infomax", "lambda_kd", "temperature",
      "reinit_partial_cls", "eval_interval", "validation_fraction", "lr", "beta1", "beta2",
      "epsilon", "epochs", "batch_size", "sessions", "style", "held_out_domain",
      "test_per_class", "seeds", "output_dir"};
  return keys;
}

std::string extract_json(const std::string& text) {
  // manifests carry the resolved config after a "config:" line
  if (text.rfind("plreg manifest", 0) == 0) {
    const auto pos = text.find("\nconfig:\n");
    if (pos == std::string::npos) throw ConfigError("manifest has no 'config:' section");
    return text.substr(pos + 9);
  }
  return text;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& raw) {
  const std::string text = extract_json(raw);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  const Reader r(doc, text);
  for (const auto& [key, value] : doc.items()) {
    if (!known_keys().count(key)) r.fail(key, "unknown key");
  }
  if (!r.has("task")) throw ConfigError("config key 'task': missing required key");

  ExperimentConfig c;
  r.parse_enum("task", [&](const std::string& s) { c.task = parse_task(s); });
  r.read("preset", c.preset);

  SyntheticSpec& sp = c.spec;
  r.read("num_classes", sp.num_classes);
  r.read("num_known", sp.num_known);
  r.read("input_dim", sp.input_dim);
  r.read("semantic_dims_per_class", sp.semantic_dims_per_class);
  r.read("noise_dims", sp.noise_dims);
  r.read("domain_dims", sp.domain_dims);
  r.read("noise_sigma", sp.noise_sigma);
  r.read("num_domains", sp.num_domains);
  r.read("domain_shift", sp.domain_shift);
  r.read("samples_per_class_max", sp.samples_per_class_max);
  r.read("imbalance_ratio", sp.imbalance_ratio);

  r.read("dim", c.dim);
  r.read("depth", c.depth);
  r.parse_enum("head_input", [&](const std::string& s) { c.head_input = parse_head_input(s); });
  r.read("use_mask", c.use_mask);

  TrainRun& t = c.train;
  r.read("w_p1", t.weights.w_p1);
  r.read("w_p2", t.weights.w_p2);
  r.read("w_lreg", t.weights.w_lreg);
  r.read("lambda_infomax", t.lambda_infomax);
  r.read("lambda_kd", t.lambda_kd);
  r.read("temperature", t.temperature);
  r.read("reinit_partial_cls", t.reinit_partial_cls);
  r.read("eval_interval", t.eval_interval);
  r.read("validation_fraction", t.validation_fraction);
  r.read("lr", t.optim.lr);
  r.read("beta1", t.optim.beta1);
  r.read("beta2", t.optim.beta2);
  r.read("epsilon", t.optim.epsilon);
  r.read("epochs", t.optim.epochs);
  r.read("batch_size", t.optim.batch_size);

  r.read("sessions", c.sessions);
  r.parse_enum("style", [&](const std::string& s) { c.style = parse_cil_style(s); });
  if (r.has("held_out_domain")) {
    const json& v = doc.at("held_out_domain");
    if (v.is_string() && v.get<std::string>() == "all") {
      c.held_out_domain.reset();
    } else if (v.is_number_integer() && v.get<long long>() >= 0) {
      c.held_out_domain = v.get<int>();
    } else {
      r.fail("held_out_domain", "expected \"all\" or a domain index, got " + v.dump());
    }
  }
  r.read("test_per_class", c.test_per_class);
  if (r.has("seeds")) {
    const json& v = doc.at("seeds");
    if (!v.is_array()) r.fail("seeds", "expected a list of non-negative integers");
    c.seeds.clear();
    for (const json& s : v) {
      if (!s.is_number_unsigned()) r.fail("seeds", "expected non-negative integers, got " + s.dump());
      c.seeds.push_back(s.get<std::uint64_t>());
    }
  }
  r.read("output_dir", c.output_dir);

  if (!c.preset.empty()) {
    const Preset* p = nullptr;
    try {
      p = &find_preset(c.preset);
    } catch (const ConfigError& e) {
      r.fail("preset", e.what());
    }
    if (p->task && *p->task != c.task) {
      r.fail("preset", "preset '" + p->name + "' is for task '" + to_string(*p->task) +
                           "', config selects '" + to_string(c.task) + "'");
    }
    if (!r.has("w_p1")) t.weights.w_p1 = p->weights.w_p1;
    if (!r.has("w_p2")) t.weights.w_p2 = p->weights.w_p2;
    if (!r.has("w_lreg")) {
      t.weights.w_lreg = p->weights.w_lreg * (p->lreg_scaled_by_lambda ? t.lambda_infomax : 1.0);
    }
    if (p->style && !r.has("style")) c.style = *p->style;
    if (p->epochs && !r.has("epochs")) t.optim.epochs = *p->epochs;
  }

  c.validate();
  return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  // ordered_json keeps the documented key order
  nlohmann::ordered_json j;
  j["task"] = to_string(c.task);
  j["preset"] = c.preset;
  j["num_classes"] = c.spec.num_classes;
  j["num_known"] = c.spec.num_known;
  j["input_dim"] = c.spec.input_dim;
  j["semantic_dims_per_class"] = c.spec.semantic_dims_per_class;
  j["noise_dims"] = c.spec.noise_dims;
  j["domain_dims"] = c.spec.domain_dims;
  j["noise_sigma"] = c.spec.noise_sigma;
  j["num_domains"] = c.spec.num_domains;
  j["domain_shift"] = c.spec.domain_shift;
  j["samples_per_class_max"] = c.spec.samples_per_class_max;
  j["imbalance_ratio"] = c.spec.imbalance_ratio;
  j["dim"] = c.dim;
  j["depth"] = c.depth;
  j["head_input"] = to_string(c.head_input);
  j["use_mask"] = c.use_mask;
  j["w_p1"] = c.train.weights.w_p1;
  j["w_p2"] = c.train.weights.w_p2;
  j["w_lreg"] = c.train.weights.w_lreg;
  j["lambda_infomax"] = c.train.lambda_infomax;
  j["lambda_kd"] = c.train.lambda_kd;
  j["temperature"] = c.train.temperature;
  j["reinit_partial_cls"] = c.train.reinit_partial_cls;
  j["eval_interval"] = c.train.eval_interval;
  j["validation_fraction"] = c.train.validation_fraction;
  j["lr"] = c.train.optim.lr;
  j["beta1"] = c.train.optim.beta1;
  j["beta2"] = c.train.optim.beta2;
  j["epsilon"] = c.train.optim.epsilon;
  j["epochs"] = c.train.optim.epochs;
  j["batch_size"] = c.train.optim.batch_size;
  j["sessions"] = c.sessions;
  j["style"] = to_string(c.style);
  if (c.held_out_domain) {
    j["held_out_domain"] = *c.held_out_domain;
  } else {
    j["held_out_domain"] = "all";
  }
  j["test_per_class"] = c.test_per_class;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j.dump(2) + "\n";
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"w_p1", "w_p2", "w_lreg", "lambda_infomax",
                                                "lambda_kd"};
  return axes;
}

void set_axis(ExperimentConfig& c, const std::string& axis, double value) {
  if (axis == "w_p1") {
    c.train.weights.w_p1 = value;
  } else if (axis == "w_p2") {
    c.train.weights.w_p2 = value;
  } else if (axis == "w_lreg") {
    c.train.weights.w_lreg = value;
  } else if (axis == "lambda_infomax") {
    c.train.lambda_infomax = value;
  } else if (axis == "lambda_kd") {
    c.train.lambda_kd = value;
  } else {
    std::string valid;
    for (const auto& a : sweep_axes()) valid += (valid.empty() ? "" : ", ") + a;
    throw UsageError("unknown sweep axis '" + axis + "' (valid: " + valid + ")");
  }
}

}  // namespace plreg
