#include "lkreg/cli.hpp"

#include "lkreg/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace lkreg::cli {

namespace {

// ---------------------------------------------------------------------------
// TOML subset

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : text_(text) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    while (true) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        table = &open_table(root);
      } else {
        parse_key_value(*table);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("TOML line " + std::to_string(line_) + ": " + what);
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  char get() {
    const char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  void skip_spaces() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!at_end() && peek() != '\n') ++pos_;
  }
  void skip_blank_lines() {
    while (!at_end()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() != '\n') return;
      get();
    }
  }
  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (!at_end()) {
      skip_spaces();
      skip_comment();
      if (peek() != '\n' && peek() != '\r') return;
      get();
    }
  }
  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (at_end()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    get();
  }

  std::string bare_key() {
    std::string key;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
      key += text_[pos_++];
    return key;
  }
  std::string key() {
    skip_spaces();
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string k = bare_key();
    if (k.empty()) fail("expected a key");
    return k;
  }
  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key()};
    skip_spaces();
    while (peek() == '.') {
      ++pos_;
      parts.push_back(key());
      skip_spaces();
    }
    return parts;
  }

  nlohmann::json& descend(nlohmann::json& from, const std::vector<std::string>& parts, std::size_t count) {
    nlohmann::json* node = &from;
    for (std::size_t i = 0; i < count; ++i) {
      nlohmann::json& next = (*node)[parts[i]];
      if (next.is_null()) next = nlohmann::json::object();
      if (!next.is_object()) fail("key '" + parts[i] + "' is not a table");
      node = &next;
    }
    return *node;
  }

  nlohmann::json& open_table(nlohmann::json& root) {
    ++pos_;
    if (peek() == '[') fail("arrays of tables are not supported");
    const auto parts = dotted_key();
    if (peek() != ']') fail("expected ']' after table name");
    ++pos_;
    return descend(root, parts, parts.size());
  }

  void parse_key_value(nlohmann::json& table) {
    const auto parts = dotted_key();
    if (peek() != '=') fail("expected '=' after key");
    ++pos_;
    skip_spaces();
    nlohmann::json& parent = descend(table, parts, parts.size() - 1);
    if (parent.contains(parts.back())) fail("duplicate key '" + parts.back() + "'");
    parent[parts.back()] = value();
  }

  nlohmann::json value() {
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (c == '{') fail("inline tables are not supported");
    if (text_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (text_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }

  nlohmann::json array() {
    ++pos_;
    nlohmann::json arr = nlohmann::json::array();
    while (true) {
      skip_array_space();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      if (at_end()) fail("unterminated array");
      arr.push_back(value());
      skip_array_space();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  std::string basic_string() {
    ++pos_;
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = get();
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = at_end() ? '\0' : get();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
  }

  std::string literal_string() {
    ++pos_;
    const std::size_t end = text_.find('\'', pos_);
    const std::size_t nl = text_.find('\n', pos_);
    if (end == std::string_view::npos || end > nl) fail("unterminated string");
    std::string out(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  nlohmann::json number() {
    const std::size_t start = pos_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                         peek() == '.' || peek() == '_'))
      ++pos_;
    std::string tok;
    for (char c : text_.substr(start, pos_ - start))
      if (c != '_') tok += c;
    if (tok.empty()) fail("expected a value");
    std::string_view body = tok;
    bool negative = false;
    if (body.front() == '+' || body.front() == '-') {
      negative = body.front() == '-';
      body.remove_prefix(1);
    }
    if (body == "inf") return negative ? -HUGE_VAL : HUGE_VAL;
    if (body == "nan") fail("nan is not accepted in configs");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    if (!is_float) {
      long v = 0;
      const auto [p, ec] = std::from_chars(tok.data() + (tok.front() == '+' ? 1 : 0), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) fail("invalid value '" + tok + "'");
      return v;
    }
    double v = 0.0;
    const auto [p, ec] = std::from_chars(tok.data() + (tok.front() == '+' ? 1 : 0), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) fail("invalid value '" + tok + "'");
    return v;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

std::string describe(const nlohmann::json& v) {
  const std::string s = v.dump();
  return s.size() > 40 ? s.substr(0, 40) + "..." : s;
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

nlohmann::json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const std::string ext = path.extension().string();
  if (ext == ".toml") return parse_toml(text);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    if (ext == ".json") throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_toml(text);
}

// ---------------------------------------------------------------------------

Section::Section(const nlohmann::json& node, std::string path) : node_(node), path_(std::move(path)) {
  if (node_.is_null()) node_ = nlohmann::json::object();
  if (!node_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected a table");
}

std::string Section::field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

bool Section::has(const std::string& key) const { return node_.contains(key); }

Section Section::child(const std::string& key) const {
  used_.insert(key);
  return Section(node_.contains(key) ? node_.at(key) : nlohmann::json::object(), field(key));
}

const nlohmann::json* Section::raw(const std::string& key) {
  used_.insert(key);
  return node_.contains(key) ? &node_.at(key) : nullptr;
}

double Section::number(const std::string& key, double fallback, double min, double max, bool min_exclusive) {
  const nlohmann::json* v = raw(key);
  if (!v) return fallback;
  if (!v->is_number()) throw ConfigError(field(key) + ": expected a number, got " + describe(*v));
  const double x = v->get<double>();
  const bool low = min_exclusive ? !(x > min) : !(x >= min);
  if (low || x > max || std::isnan(x)) {
    std::ostringstream msg;
    msg << field(key) << ": " << x << " is out of range (" << (min_exclusive ? "> " : ">= ") << min;
    if (max != HUGE_VAL) msg << ", <= " << max;
    msg << ")";
    throw ConfigError(msg.str());
  }
  return x;
}

long Section::integer(const std::string& key, long fallback, long min, long max) {
  const nlohmann::json* v = raw(key);
  if (!v) return fallback;
  if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer, got " + describe(*v));
  const long x = v->get<long>();
  if (x < min || x > max)
    throw ConfigError(field(key) + ": " + std::to_string(x) + " is out of range (>= " + std::to_string(min) + ")");
  return x;
}

bool Section::boolean(const std::string& key, bool fallback) {
  const nlohmann::json* v = raw(key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false, got " + describe(*v));
  return v->get<bool>();
}

std::string Section::string(const std::string& key, const std::string& fallback,
                            const std::set<std::string>& allowed) {
  const nlohmann::json* v = raw(key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError(field(key) + ": expected a string, got " + describe(*v));
  std::string s = v->get<std::string>();
  if (!allowed.empty() && !allowed.count(s)) {
    std::string options;
    for (const auto& a : allowed) options += (options.empty() ? "" : ", ") + a;
    throw ConfigError(field(key) + ": '" + s + "' is not one of " + options);
  }
  return s;
}

std::vector<double> Section::numbers(const std::string& key, const std::vector<double>& fallback, double min,
                                     double max) {
  const nlohmann::json* v = raw(key);
  if (!v) return fallback;
  if (!v->is_array() || v->empty()) throw ConfigError(field(key) + ": expected a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    const auto& e = v->at(i);
    const std::string f = field(key) + "[" + std::to_string(i) + "]";
    if (!e.is_number()) throw ConfigError(f + ": expected a number, got " + describe(e));
    const double x = e.get<double>();
    if (!(x >= min && x <= max)) throw ConfigError(f + ": " + describe(e) + " is out of range");
    out.push_back(x);
  }
  return out;
}

std::vector<std::string> Section::strings(const std::string& key, const std::vector<std::string>& fallback) {
  const nlohmann::json* v = raw(key);
  if (!v) return fallback;
  if (!v->is_array() || v->empty()) throw ConfigError(field(key) + ": expected a non-empty array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v->size(); ++i) {
    if (!v->at(i).is_string())
      throw ConfigError(field(key) + "[" + std::to_string(i) + "]: expected a string, got " + describe(v->at(i)));
    out.push_back(v->at(i).get<std::string>());
  }
  return out;
}

void Section::finish() const {
  for (const auto& [k, v] : node_.items())
    if (!used_.count(k)) throw ConfigError(field(k) + ": unknown field");
}

// ---------------------------------------------------------------------------

namespace {

std::vector<PrimitiveKind> parse_kinds(Section& s, const std::string& key) {
  const auto names = s.strings(key, {});
  if (names.empty()) return {kAllPrimitives.begin(), kAllPrimitives.end()};
  std::vector<PrimitiveKind> kinds;
  for (std::size_t i = 0; i < names.size(); ++i) {
    try {
      kinds.push_back(parse_primitive(names[i]));
    } catch (const Error& e) {
      throw ConfigError(s.field(key) + "[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return kinds;
}

DatasetConfig parse_dataset(Section& d, const DatasetConfig& defaults) {
  DatasetConfig c = defaults;
  c.pairs = static_cast<int>(d.integer("pairs", c.pairs, 1));
  c.points = static_cast<int>(d.integer("points", c.points, 8));
  c.seed = static_cast<std::uint64_t>(d.integer("seed", static_cast<long>(c.seed), 0));
  c.max_rot_deg = d.number("max_rot_deg", c.max_rot_deg, 0.0, 179.999);
  c.max_trans = d.number("max_trans", c.max_trans, 0.0);
  c.kinds = parse_kinds(d, "kinds");
  c.varied = d.boolean("varied", c.varied);
  return c;
}

}  // namespace

TrainSettings parse_train_settings(const nlohmann::json& config) {
  Section root(config, "");
  TrainSettings s;

  Section model = root.child("model");
  if (const nlohmann::json* w = model.raw("widths")) {
    if (!w->is_array() || w->size() < 2) throw ConfigError("model.widths: expected at least two widths");
    s.widths.clear();
    for (std::size_t i = 0; i < w->size(); ++i) {
      if (!w->at(i).is_number_integer() || w->at(i).get<int>() < 1)
        throw ConfigError("model.widths[" + std::to_string(i) + "]: expected a positive integer");
      s.widths.push_back(w->at(i).get<int>());
    }
    if (s.widths.front() != 3) throw ConfigError("model.widths[0]: input width must be 3");
  }
  s.model_seed = static_cast<std::uint64_t>(model.integer("seed", 0, 0));
  model.finish();

  Section data = root.child("dataset");
  s.dataset = parse_dataset(data, DatasetConfig{});
  data.finish();

  Section t = root.child("train");
  TrainConfig& c = s.train;
  c.epochs = static_cast<int>(t.integer("epochs", c.epochs, 1));
  c.batch_size = static_cast<int>(t.integer("batch_size", c.batch_size, 1));
  c.learning_rate = t.number("learning_rate", c.learning_rate, 0.0);
  c.weight_decay = t.number("weight_decay", c.weight_decay, 0.0);
  const std::string mode = t.string("decay_mode", "decoupled", {"decoupled", "learning_rate"});
  c.decay_mode = mode == "decoupled" ? DecayMode::kDecoupled : DecayMode::kLearningRate;
  c.unroll = static_cast<int>(t.integer("unroll", c.unroll, 1));
  c.lambda_transform = t.number("lambda_transform", c.lambda_transform, 0.0);
  c.lambda_feature = t.number("lambda_feature", c.lambda_feature, 0.0);
  c.bn_momentum = t.number("bn_momentum", c.bn_momentum, 0.0, 0.999999);
  c.seed = static_cast<std::uint64_t>(t.integer("seed", 0, 0));
  c.criterion.rot_deg = t.number("success_rot_deg", c.criterion.rot_deg, 0.0, HUGE_VAL, true);
  c.criterion.trans = t.number("success_trans", c.criterion.trans, 0.0, HUGE_VAL, true);
  t.finish();

  Section out = root.child("output");
  s.checkpoint = out.string("checkpoint", s.checkpoint);
  s.log = out.string("log", s.log);
  out.finish();
  root.finish();
  s.train.validate();
  s.dataset.validate();
  return s;
}

BenchSettings parse_bench_settings(const nlohmann::json& config) {
  Section root(config, "");
  BenchSettings s;
  s.timing = root.boolean("timing", s.timing);

  Section data = root.child("dataset");
  s.source = data.string("source", "primitives", {"primitives", "scenes"}) == "scenes"
                 ? BenchSettings::Source::kScenes
                 : BenchSettings::Source::kPrimitives;
  s.scene_objects = static_cast<int>(data.integer("scene_objects", s.scene_objects, 1));
  DatasetConfig defaults;
  defaults.pairs = 100;
  defaults.seed = 1;
  defaults.max_rot_deg = 30.0;
  defaults.max_trans = 0.3;
  s.dataset = parse_dataset(data, defaults);
  data.finish();

  Section sol = root.child("solver");
  SolverConfig& c = s.solver;
  c.max_iters = static_cast<int>(sol.integer("max_iters", c.max_iters, 1));
  c.dx_tol = sol.number("dx_tol", c.dx_tol, 0.0, HUGE_VAL, true);
  const std::string method = sol.string("method", "analytical", {"analytical", "numerical"});
  c.method = method == "analytical" ? JacobianMethod::kAnalytical : JacobianMethod::kNumerical;
  c.step = sol.number("step", c.step, 0.0, HUGE_VAL, true);
  c.precision = sol.string("precision", "single", {"single", "double"}) == "single" ? Precision::kSingle
                                                                                   : Precision::kDouble;
  c.warp = sol.string("warp", "rigid6", {"rigid6", "planar3"}) == "rigid6" ? WarpModel::kRigid6 : WarpModel::kPlanar3;
  c.divergence_factor = sol.number("divergence_factor", c.divergence_factor, 0.0, HUGE_VAL, true);
  sol.finish();

  Section icp = root.child("icp");
  s.icp.max_iters = static_cast<int>(icp.integer("max_iters", s.icp.max_iters, 1));
  s.icp.max_correspondence_dist =
      icp.number("max_correspondence_dist", s.icp.max_correspondence_dist, 0.0, HUGE_VAL, true);
  s.icp.tol = icp.number("tol", s.icp.tol, 0.0, HUGE_VAL, true);
  icp.finish();

  Section crit = root.child("criterion");
  s.criterion.rot_deg = crit.number("rot_deg", s.criterion.rot_deg, 0.0, HUGE_VAL, true);
  s.criterion.trans = crit.number("trans", s.criterion.trans, 0.0, HUGE_VAL, true);
  s.curve_samples = static_cast<int>(crit.integer("curve_samples", s.curve_samples, 2));
  crit.finish();

  Section fid = root.child("fidelity");
  s.fidelity_max_deg = fid.number("max_threshold_deg", s.fidelity_max_deg, 0.0, HUGE_VAL, true);
  s.fidelity_samples = static_cast<int>(fid.integer("samples", s.fidelity_samples, 2));
  s.fidelity_steps = fid.numbers("steps", s.fidelity_steps, 1e-300);
  fid.finish();

  Section noise = root.child("noise");
  s.noise_stddevs = noise.numbers("stddevs", s.noise_stddevs, 0.0);
  noise.finish();
  Section sparse = root.child("sparsity");
  s.sparsity_keep = sparse.numbers("keep", s.sparsity_keep, 1e-6, 1.0);
  sparse.finish();
  Section partial = root.child("partial");
  s.partial_keep = partial.numbers("keep", s.partial_keep, 1e-6, 1.0);
  partial.finish();
  Section corr = root.child("corruption");
  s.corruption_seed = static_cast<std::uint64_t>(corr.integer("seed", 0, 0));
  corr.finish();

  Section vox = root.child("voxel");
  if (const nlohmann::json* g = vox.raw("grids")) {
    if (!g->is_array() || g->empty()) throw ConfigError("voxel.grids: expected a non-empty array of [nx, ny, nz]");
    s.voxel_grids.clear();
    for (std::size_t i = 0; i < g->size(); ++i) {
      const auto& e = g->at(i);
      const std::string f = "voxel.grids[" + std::to_string(i) + "]";
      if (!e.is_array() || e.size() != 3) throw ConfigError(f + ": expected [nx, ny, nz]");
      std::array<int, 3> dims{};
      for (std::size_t a = 0; a < 3; ++a) {
        if (!e[a].is_number_integer() || e[a].get<int>() < 1) throw ConfigError(f + ": entries must be >= 1");
        dims[a] = e[a].get<int>();
      }
      s.voxel_grids.push_back(dims);
    }
  }
  {
    const auto caps = vox.numbers("caps", {}, 1.0);
    if (!caps.empty()) {
      s.voxel_caps.clear();
      for (double c : caps) s.voxel_caps.push_back(static_cast<int>(c));
    }
  }
  s.voxel_min_points = static_cast<int>(vox.integer("min_points", s.voxel_min_points, 4));
  s.voxel_seed = static_cast<std::uint64_t>(vox.integer("seed", 0, 0));
  vox.finish();
  root.finish();
  s.dataset.validate();
  return s;
}

std::vector<PairSpec> make_bench_pairs(const BenchSettings& s) {
  if (s.source == BenchSettings::Source::kPrimitives) return make_dataset(s.dataset);
  Rng rng(s.dataset.seed);
  std::vector<PairSpec> pairs;
  for (int i = 0; i < s.dataset.pairs; ++i) {
    PointCloud scene = generate_scene(s.scene_objects, s.dataset.points, rng());
    const RigidTransform gt = se3::exp(sample_perturbation(rng, s.dataset.max_rot_deg, s.dataset.max_trans));
    PointCloud templ = apply(gt, scene);
    pairs.push_back({std::move(scene), std::move(templ), gt});
  }
  return pairs;
}

}  // namespace lkreg::cli
