#include "sigmasr_tools/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace sigmasr::tools {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string_view s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return std::string(s.substr(1, s.size() - 2));
  }
  return std::string(s);
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: " + std::string(key) + " expects an integer, got '" + std::string(v) + "'");
  }
  return out;
}

int parse_int(std::string_view key, std::string_view v) { return parse_integer<int>(key, v); }

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: " + std::string(key) + " expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: " + std::string(key) + " expects true or false, got '" + std::string(v) + "'");
}

// Wraps the core parse_* helpers, which throw std::invalid_argument.
template <class F>
auto parse_enum(std::string_view key, std::string_view v, F parse) {
  try {
    return parse(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + std::string(key) + ": " + e.what());
  }
}

// Shortest text that reads back to the same double.
std::string exact(double v) {
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    double back = 0.0;
    std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
    if (back == v) break;
  }
  return buf;
}

std::string quote_value(const std::string& s) { return '"' + s + '"'; }

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_ENTRY(name, field)                                                                  \
  Entry {                                                                                       \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_int(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                              \
  }
#define DOUBLE_ENTRY(name, field)                                                                     \
  Entry {                                                                                             \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_double(k, v); }, \
        [](const RunConfig& c) { return exact(c.field); }                                             \
  }
#define BOOL_ENTRY(name, field)                                                                     \
  Entry {                                                                                           \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }                  \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"seed", [](RunConfig& c, std::string_view k, std::string_view v) { c.seed = parse_integer<std::uint64_t>(k, v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"out", [](RunConfig& c, std::string_view, std::string_view v) { c.out = std::string(v); },
       [](const RunConfig& c) { return quote_value(c.out.generic_string()); }},

      INT_ENTRY("model.in_channels", trunk.in_channels),
      INT_ENTRY("model.scale", trunk.scale),
      INT_ENTRY("model.features", trunk.feature_channels),
      INT_ENTRY("model.resblocks", trunk.n_resblocks),
      {"model.sigma_branch",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "auto") c.sigma_branch = SigmaBranchMode::automatic;
         else if (v == "on") c.sigma_branch = SigmaBranchMode::on;
         else if (v == "off") c.sigma_branch = SigmaBranchMode::off;
         else throw ConfigError("config: " + std::string(k) + " expects auto, on or off");
       },
       [](const RunConfig& c) {
         return quote_value(c.sigma_branch == SigmaBranchMode::automatic ? "auto"
                       : c.sigma_branch == SigmaBranchMode::on      ? "on"
                                                                    : "off");
       }},
      INT_ENTRY("model.sigma_channels", sigma.channels),
      INT_ENTRY("model.sigma_blocks", sigma.n_blocks),
      INT_ENTRY("model.sigma_kernel", sigma.kernel),
      {"model.sigma_tap",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.sigma.tap = parse_enum(k, v, parse_sigma_tap); },
       [](const RunConfig& c) { return quote_value(std::string(to_string(c.sigma.tap))); }},

      INT_ENTRY("train.batch", train.batch),
      INT_ENTRY("train.patch", train.patch),
      DOUBLE_ENTRY("train.lr", train.lr0),
      INT_ENTRY("train.halve_every", train.halve_every),
      INT_ENTRY("train.iters", train.total_iters),
      DOUBLE_ENTRY("train.beta1", train.beta1),
      DOUBLE_ENTRY("train.beta2", train.beta2),
      DOUBLE_ENTRY("train.eps", train.eps),
      INT_ENTRY("train.telemetry_every", train.telemetry_every),
      INT_ENTRY("train.checkpoint_every", train.checkpoint_every),
      BOOL_ENTRY("train.augment", train.augment),
      INT_ENTRY("train.sigma_start_iter", train.sigma_start_iter),
      {"train.fixed_sigma",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "none") c.train.fixed_sigma.reset();
         else c.train.fixed_sigma = parse_double(k, v);
       },
       [](const RunConfig& c) { return c.train.fixed_sigma ? exact(*c.train.fixed_sigma) : quote_value("none"); }},
      BOOL_ENTRY("train.wall_clock", train.record_wall_time),

      {"loss.variant",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.train.loss.variant = parse_enum(k, v, parse_loss_variant); },
       [](const RunConfig& c) { return quote_value(std::string(to_string(c.train.loss.variant))); }},
      DOUBLE_ENTRY("loss.kT", train.loss.kT),
      DOUBLE_ENTRY("loss.beta", train.loss.beta),
      DOUBLE_ENTRY("loss.k_noise", train.loss.k_noise),
      INT_ENTRY("loss.n_samples", train.loss.n_samples),
      {"loss.reduction",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.train.loss.reduction = parse_enum(k, v, parse_reduction); },
       [](const RunConfig& c) { return quote_value(std::string(to_string(c.train.loss.reduction))); }},
      BOOL_ENTRY("loss.threshold_aux", train.loss.threshold_aux),

      {"data.dir", [](RunConfig& c, std::string_view, std::string_view v) { c.data_dir = std::string(v); },
       [](const RunConfig& c) { return quote_value(c.data_dir.generic_string()); }},
      INT_ENTRY("data.synthetic_images", synthetic_images),
      INT_ENTRY("data.image_size", image_size),
      INT_ENTRY("data.eval_images", eval_images),

      {"eval.channel",
       [](RunConfig& c, std::string_view k, std::string_view v) { c.channel = parse_enum(k, v, parse_eval_channel); },
       [](const RunConfig& c) { return quote_value(std::string(to_string(c.channel))); }},
      INT_ENTRY("eval.border_crop", border_crop),
      {"eval.pll",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "pixel_mean") c.pll_reduction = PllReduction::pixel_mean;
         else if (v == "image_sum") c.pll_reduction = PllReduction::image_sum;
         else throw ConfigError("config: " + std::string(k) + " expects pixel_mean or image_sum");
       },
       [](const RunConfig& c) {
         return quote_value(c.pll_reduction == PllReduction::pixel_mean ? "pixel_mean" : "image_sum");
       }},
      {"eval.split",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v != "eval" && v != "train") throw ConfigError("config: " + std::string(k) + " expects eval or train");
         c.eval_split = std::string(v);
       },
       [](const RunConfig& c) { return quote_value(c.eval_split); }},

      INT_ENTRY("analysis.n", n),
      DOUBLE_ENTRY("analysis.r", r),
      DOUBLE_ENTRY("analysis.k", k),
      {"analysis.sigma_grid",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         std::vector<double> grid;
         std::size_t start = 0;
         while (start <= v.size()) {
           const auto comma = v.find(',', start);
           const auto item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
           if (item.empty()) throw ConfigError("config: " + std::string(k) + " has an empty entry");
           grid.push_back(parse_double(k, item));
           if (comma == std::string_view::npos) break;
           start = comma + 1;
         }
         c.sigma_grid = std::move(grid);
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.sigma_grid.size(); ++i) s += (i ? "," : "") + exact(c.sigma_grid[i]);
         return quote_value(s);
       }},
      INT_ENTRY("analysis.seeds", n_seeds),
      DOUBLE_ENTRY("analysis.psnr_margin", psnr_margin),
      DOUBLE_ENTRY("analysis.collapse_ratio", collapse_ratio),

      DOUBLE_ENTRY("uncertainty.gain", gain),
  };
  return table;
}

#undef INT_ENTRY
#undef DOUBLE_ENTRY
#undef BOOL_ENTRY

}  // namespace

RunConfig::RunConfig() {
  const DeskSetup desk;
  trunk = desk.trunk;
  sigma = desk.sigma;
  train = desk.train;
  synthetic_images = desk.n_images;
  image_size = desk.image_size;
  eval_images = desk.n_eval_images;
  seed = desk.seed;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return names;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto& table = entries();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return e.key == key; });
  if (it == table.end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  it->set(*this, key, unquote(trim(value)));
}

void RunConfig::parse_text(std::string_view text, const std::string& origin) {
  std::string section;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    // A '#' starts a comment unless it sits inside a quoted value.
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' || line[i] == '\'') {
        if (quote == 0) quote = line[i];
        else if (quote == line[i]) quote = 0;
      }
      if (line[i] == '#' && quote == 0) {
        line = line.substr(0, i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    try {
      set(section.empty() ? std::string(key) : section + "." + std::string(key), value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  parse_text(buf.str(), path.string());
}

bool RunConfig::wants_sigma_branch() const {
  switch (sigma_branch) {
    case SigmaBranchMode::on: return true;
    case SigmaBranchMode::off: return false;
    case SigmaBranchMode::automatic: break;
  }
  switch (train.loss.variant) {
    case LossVariant::trainable_sigma: return !train.fixed_sigma.has_value();
    case LossVariant::data_adaptive:
    case LossVariant::constant_sigma: return train.loss.beta > 0.0;
    case LossVariant::l1:
    case LossVariant::l2: return false;
  }
  return false;
}

DeskSetup RunConfig::desk_setup() const {
  DeskSetup s;
  s.trunk = trunk;
  s.sigma = sigma;
  s.train = train;
  s.train.seed = seed;
  s.n_images = synthetic_images;
  s.image_size = image_size;
  s.n_eval_images = eval_images;
  s.seed = seed;
  return s;
}

std::string RunConfig::to_text() const {
  std::string out;
  std::string section;
  for (const auto& e : entries()) {
    const auto dot = e.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : e.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + e.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  try {
    trunk.validate();
    sigma.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (synthetic_images < 1 || image_size < 1 || eval_images < 1) {
    throw ConfigError("config: data sizes must be positive");
  }
  if (border_crop < -1) throw ConfigError("config: eval.border_crop must be >= 0 (or -1 for the scale)");
  if (n < 0) throw ConfigError("config: analysis.n must be >= 0");
  if (!(k > 0.0)) throw ConfigError("config: analysis.k must be positive");
  if (sigma_grid.empty()) throw ConfigError("config: analysis.sigma_grid is empty");
  if (n_seeds < 1) throw ConfigError("config: analysis.seeds must be >= 1");
  if (!(gain > 0.0)) throw ConfigError("config: uncertainty.gain must be positive");
  if (!(psnr_margin >= 0.0)) throw ConfigError("config: analysis.psnr_margin must be >= 0");
  if (!(collapse_ratio > 0.0 && collapse_ratio < 1.0)) throw ConfigError("config: analysis.collapse_ratio must lie in (0, 1)");
  if (data_dir.empty() && train.patch * trunk.scale > image_size) {
    throw ConfigError("config: train.patch " + std::to_string(train.patch) + " at scale " +
                      std::to_string(trunk.scale) + " does not fit data.image_size " + std::to_string(image_size));
  }
}

}  // namespace sigmasr::tools
