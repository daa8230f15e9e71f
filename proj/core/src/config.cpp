#include "difftad/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace difftad {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad bool for " + key + ": '" + v + "'");
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw std::invalid_argument("config: bad unsigned for " + key + ": '" + v + "'");
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("config: " + what);
  };
  require(dataset.num_videos >= 1, "dataset.num_videos must be >= 1");
  require(dataset.t_snippets >= 4, "dataset.t_snippets must be >= 4");
  require(dataset.d_feat >= 1, "dataset.d_feat must be >= 1");
  require(dataset.classes >= 1, "dataset.classes must be >= 1");
  require(dataset.max_actions >= 1, "dataset.max_actions must be >= 1");
  require(dataset.min_action_snippets >= 1, "dataset.min_action_snippets must be >= 1");
  require(dataset.noise_level >= 0.0, "dataset.noise_level must be >= 0");
  require(dataset.snippet_seconds > 0.0, "dataset.snippet_seconds must be > 0");
  require(schedule.t_total >= 1, "schedule.t_total must be >= 1");
  require(schedule.offset > 0.0 && schedule.offset < 1.0, "schedule.offset must be in (0,1)");
  require(model.dim >= 4 && model.dim % 4 == 0, "model.dim must be a positive multiple of 4");
  require(model.n_layers >= 1, "model.n_layers must be >= 1");
  require(model.heads >= 1 && model.dim % model.heads == 0,
          "model.heads must divide model.dim");
  require(model.scales >= 1, "model.scales must be >= 1");
  require(model.ffn_mult >= 1, "model.ffn_mult must be >= 1");
  require(train.n_train >= 1, "train.n_train must be >= 1");
  require(train.top_k >= 1 && train.top_k <= train.n_train,
          "train.top_k must be in [1, n_train]");
  require(train.bg_weight > 0.0, "train.bg_weight must be > 0");
  require(train.self_cond_rate >= 0.0 && train.self_cond_rate <= 1.0,
          "train.self_cond_rate must be in [0,1]");
  require(train.lr > 0.0, "train.lr must be > 0");
  require(train.lr_schedule == "constant" || train.lr_schedule == "cosine",
          "train.lr_schedule must be constant or cosine");
  require(train.batch_size >= 1, "train.batch_size must be >= 1");
  require(train.steps >= 1, "train.steps must be >= 1");
  require(train.signal_scale > 0.0, "train.signal_scale must be > 0");
  require(train.jitter_sigma >= 0.0, "train.jitter_sigma must be >= 0");
  for (const auto& m : modality_list()) {
    require(m == "rgb" || m == "flow", "train.modalities entries must be rgb or flow");
  }
  require(!modality_list().empty(), "train.modalities must not be empty");
  require(sample.steps >= 1 && sample.steps <= schedule.t_total + 1,
          "sample.steps must be in [1, t_total+1]");
  require(sample.proposals >= 1, "sample.proposals must be >= 1");
  require(sample.gamma >= -1.0 && sample.gamma <= 1.0, "sample.gamma must be in [-1,1]");
  require(sample.fusion == "late" || sample.fusion == "rgb" || sample.fusion == "flow",
          "sample.fusion must be late, rgb or flow");
  require(eval.grid == "thumos" || eval.grid == "anet", "eval.grid must be thumos or anet");
  (void)budget_list();
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "[dataset]\n";
  os << "num_videos = " << dataset.num_videos << "\n";
  os << "t_snippets = " << dataset.t_snippets << "\n";
  os << "d_feat = " << dataset.d_feat << "\n";
  os << "classes = " << dataset.classes << "\n";
  os << "max_actions = " << dataset.max_actions << "\n";
  os << "min_action_snippets = " << dataset.min_action_snippets << "\n";
  os << "signature_strength = " << fmt(dataset.signature_strength) << "\n";
  os << "noise_level = " << fmt(dataset.noise_level) << "\n";
  os << "snippet_seconds = " << fmt(dataset.snippet_seconds) << "\n";
  os << "[schedule]\n";
  os << "t_total = " << schedule.t_total << "\n";
  os << "offset = " << fmt(schedule.offset) << "\n";
  os << "[model]\n";
  os << "dim = " << model.dim << "\n";
  os << "n_layers = " << model.n_layers << "\n";
  os << "heads = " << model.heads << "\n";
  os << "scales = " << model.scales << "\n";
  os << "ffn_mult = " << model.ffn_mult << "\n";
  os << "[train]\n";
  os << "n_train = " << train.n_train << "\n";
  os << "top_k = " << train.top_k << "\n";
  os << "lambda_cls = " << fmt(train.lambda_cls) << "\n";
  os << "lambda_l1 = " << fmt(train.lambda_l1) << "\n";
  os << "lambda_iou = " << fmt(train.lambda_iou) << "\n";
  os << "lambda_comp = " << fmt(train.lambda_comp) << "\n";
  os << "bg_weight = " << fmt(train.bg_weight) << "\n";
  os << "self_cond_rate = " << fmt(train.self_cond_rate) << "\n";
  os << "lr = " << fmt(train.lr) << "\n";
  os << "lr_schedule = " << train.lr_schedule << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "steps = " << train.steps << "\n";
  os << "checkpoint_every = " << train.checkpoint_every << "\n";
  os << "signal_scale = " << fmt(train.signal_scale) << "\n";
  os << "jitter_sigma = " << fmt(train.jitter_sigma) << "\n";
  os << "modalities = " << train.modalities << "\n";
  os << "[sample]\n";
  os << "steps = " << sample.steps << "\n";
  os << "proposals = " << sample.proposals << "\n";
  os << "gamma = " << fmt(sample.gamma) << "\n";
  os << "selective_conditioning = " << (sample.selective_conditioning ? "true" : "false") << "\n";
  os << "iterative_denoising = " << (sample.iterative_denoising ? "true" : "false") << "\n";
  os << "self_cond = " << (sample.self_cond ? "true" : "false") << "\n";
  os << "sim_union = " << (sample.sim_union ? "true" : "false") << "\n";
  os << "fusion = " << sample.fusion << "\n";
  os << "nms_threshold = " << fmt(sample.nms_threshold) << "\n";
  os << "[eval]\n";
  os << "grid = " << eval.grid << "\n";
  os << "budgets = " << eval.budgets << "\n";
  os << "[run]\n";
  os << "seed = " << seed << "\n";
  return os.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw std::invalid_argument("config: malformed section at line " + std::to_string(lineno));
      }
      section = s.substr(1, s.size() - 2);
      if (section != "dataset" && section != "schedule" && section != "model" &&
          section != "train" && section != "sample" && section != "eval" && section != "run") {
        throw std::invalid_argument("config: unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected key = value at line " + std::to_string(lineno));
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    std::string full = section + "." + key;

    if (full == "dataset.num_videos") cfg.dataset.num_videos = to_int(value, full);
    else if (full == "dataset.t_snippets") cfg.dataset.t_snippets = to_int(value, full);
    else if (full == "dataset.d_feat") cfg.dataset.d_feat = to_int(value, full);
    else if (full == "dataset.classes") cfg.dataset.classes = to_int(value, full);
    else if (full == "dataset.max_actions") cfg.dataset.max_actions = to_int(value, full);
    else if (full == "dataset.min_action_snippets") cfg.dataset.min_action_snippets = to_int(value, full);
    else if (full == "dataset.signature_strength") cfg.dataset.signature_strength = to_double(value, full);
    else if (full == "dataset.noise_level") cfg.dataset.noise_level = to_double(value, full);
    else if (full == "dataset.snippet_seconds") cfg.dataset.snippet_seconds = to_double(value, full);
    else if (full == "schedule.t_total") cfg.schedule.t_total = to_int(value, full);
    else if (full == "schedule.offset") cfg.schedule.offset = to_double(value, full);
    else if (full == "model.dim") cfg.model.dim = to_int(value, full);
    else if (full == "model.n_layers") cfg.model.n_layers = to_int(value, full);
    else if (full == "model.heads") cfg.model.heads = to_int(value, full);
    else if (full == "model.scales") cfg.model.scales = to_int(value, full);
    else if (full == "model.ffn_mult") cfg.model.ffn_mult = to_int(value, full);
    else if (full == "train.n_train") cfg.train.n_train = to_int(value, full);
    else if (full == "train.top_k") cfg.train.top_k = to_int(value, full);
    else if (full == "train.lambda_cls") cfg.train.lambda_cls = to_double(value, full);
    else if (full == "train.lambda_l1") cfg.train.lambda_l1 = to_double(value, full);
    else if (full == "train.lambda_iou") cfg.train.lambda_iou = to_double(value, full);
    else if (full == "train.lambda_comp") cfg.train.lambda_comp = to_double(value, full);
    else if (full == "train.bg_weight") cfg.train.bg_weight = to_double(value, full);
    else if (full == "train.self_cond_rate") cfg.train.self_cond_rate = to_double(value, full);
    else if (full == "train.lr") cfg.train.lr = to_double(value, full);
    else if (full == "train.lr_schedule") cfg.train.lr_schedule = value;
    else if (full == "train.batch_size") cfg.train.batch_size = to_int(value, full);
    else if (full == "train.steps") cfg.train.steps = to_int(value, full);
    else if (full == "train.checkpoint_every") cfg.train.checkpoint_every = to_int(value, full);
    else if (full == "train.signal_scale") cfg.train.signal_scale = to_double(value, full);
    else if (full == "train.jitter_sigma") cfg.train.jitter_sigma = to_double(value, full);
    else if (full == "train.modalities") cfg.train.modalities = value;
    else if (full == "sample.steps") cfg.sample.steps = to_int(value, full);
    else if (full == "sample.proposals") cfg.sample.proposals = to_int(value, full);
    else if (full == "sample.gamma") cfg.sample.gamma = to_double(value, full);
    else if (full == "sample.selective_conditioning") cfg.sample.selective_conditioning = to_bool(value, full);
    else if (full == "sample.iterative_denoising") cfg.sample.iterative_denoising = to_bool(value, full);
    else if (full == "sample.self_cond") cfg.sample.self_cond = to_bool(value, full);
    else if (full == "sample.sim_union") cfg.sample.sim_union = to_bool(value, full);
    else if (full == "sample.fusion") cfg.sample.fusion = value;
    else if (full == "sample.nms_threshold") cfg.sample.nms_threshold = to_double(value, full);
    else if (full == "eval.grid") cfg.eval.grid = value;
    else if (full == "eval.budgets") cfg.eval.budgets = value;
    else if (full == "run.seed") cfg.seed = to_u64(value, full);
    else throw std::invalid_argument("config: unknown key " + full);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::vector<std::string> RunConfig::modality_list() const {
  std::vector<std::string> out;
  std::istringstream is(train.modalities);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> RunConfig::iou_grid() const {
  std::vector<double> g;
  if (eval.grid == "thumos") {
    for (int i = 0; i <= 4; ++i) g.push_back(0.3 + 0.1 * i);
  } else {
    for (int i = 0; i <= 9; ++i) g.push_back(0.5 + 0.05 * i);
  }
  return g;
}

std::vector<int> RunConfig::budget_list() const {
  std::vector<int> out;
  std::istringstream is(eval.budgets);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int v = to_int(item, "eval.budgets");
    if (v < 1) throw std::invalid_argument("config: eval.budgets entries must be >= 1");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("config: eval.budgets must not be empty");
  return out;
}

}  // namespace difftad
