#include "cbf/problem_file.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace cbf {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Strips an inline comment: '#' outside quotes ends the line.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Sections {
  // key: "section.key"; repeated keys accumulate (anchor lines).
  std::multimap<std::string, Entry> entries;

  bool has(const std::string& key) const { return entries.count(key) > 0; }

  const Entry* get(const std::string& key) {
    auto it = entries.find(key);
    if (it == entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  std::vector<Entry*> get_all(const std::string& key) {
    std::vector<Entry*> out;
    auto [a, b] = entries.equal_range(key);
    for (auto it = a; it != b; ++it) {
      it->second.used = true;
      out.push_back(&it->second);
    }
    return out;
  }
};

double parse_double(const Entry& e) {
  const std::string v = trim(e.value);
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ProblemFileError("expected a number, got '" + v + "'", e.line);
  }
}

long parse_int(const Entry& e) {
  const double d = parse_double(e);
  const long l = static_cast<long>(d);
  if (static_cast<double>(l) != d) throw ProblemFileError("expected an integer", e.line);
  return l;
}

std::vector<double> parse_vector(const Entry& e) {
  std::vector<double> out;
  std::istringstream ss(e.value);
  std::string tok;
  while (ss >> tok) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ProblemFileError("expected numbers, got '" + tok + "'", e.line);
    }
  }
  if (out.empty()) throw ProblemFileError("expected at least one number", e.line);
  return out;
}

std::vector<int> parse_int_vector(const Entry& e) {
  std::vector<int> out;
  for (double d : parse_vector(e)) {
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) throw ProblemFileError("expected integers", e.line);
    out.push_back(i);
  }
  return out;
}

std::string unquote(const Entry& e) {
  std::string v = trim(e.value);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

Expr parse_expr_entry(const Entry& e, int n, int m) {
  const std::string text = unquote(e);
  try {
    return parse_expr(text, n, m);
  } catch (const ParseError& err) {
    throw ProblemFileError(std::string("expression error: ") + err.what(), e.line);
  }
}

}  // namespace

ProblemSpec parse_problem_text(const std::string& text) {
  Sections sec;
  {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string section;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = trim(strip_comment(raw));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ProblemFileError("malformed section header", line_no);
        section = trim(line.substr(1, line.size() - 2));
        static const char* known[] = {"model", "safe_set", "train", "verify", "cegis", "simulate"};
        bool ok = false;
        for (const char* k : known) ok = ok || section == k;
        if (!ok) throw ProblemFileError("unknown section [" + section + "]", line_no);
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw ProblemFileError("expected key = value", line_no);
      if (section.empty()) throw ProblemFileError("key outside of any section", line_no);
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ProblemFileError("empty key", line_no);
      sec.entries.emplace(section + "." + key, Entry{trim(line.substr(eq + 1)), line_no, false});
    }
  }

  ProblemSpec spec;

  // --- model
  const Entry* states = sec.get("model.states");
  const Entry* inputs = sec.get("model.inputs");
  if (!states || !inputs) throw ProblemFileError("[model] needs states and inputs", 0);
  spec.model.n = static_cast<int>(parse_int(*states));
  spec.model.m = static_cast<int>(parse_int(*inputs));
  if (spec.model.n <= 0) throw ProblemFileError("states must be positive", states->line);
  if (spec.model.m < 0) throw ProblemFileError("inputs must be nonnegative", inputs->line);

  for (int i = 1; i <= spec.model.n; ++i) {
    const Entry* fi = sec.get("model.f" + std::to_string(i));
    if (!fi) throw ProblemFileError("[model] missing f" + std::to_string(i), 0);
    spec.model.f.push_back(parse_expr_entry(*fi, spec.model.n, spec.model.m));
  }
  if (const Entry* w = sec.get("model.w_max")) spec.model.w_max = parse_double(*w);
  if (spec.model.m > 0) {
    const Entry* umin = sec.get("model.u_min");
    const Entry* umax = sec.get("model.u_max");
    if (!umin || !umax) throw ProblemFileError("[model] needs u_min and u_max", 0);
    auto lo = parse_vector(*umin), hi = parse_vector(*umax);
    if (static_cast<int>(lo.size()) != spec.model.m || static_cast<int>(hi.size()) != spec.model.m)
      throw ProblemFileError("u_min/u_max must have one entry per input", umin->line);
    spec.model.U = Box(lo, hi);
  }
  const Entry* xmin = sec.get("model.x_min");
  const Entry* xmax = sec.get("model.x_max");
  if (!xmin || !xmax) throw ProblemFileError("[model] needs x_min and x_max", 0);
  {
    auto lo = parse_vector(*xmin), hi = parse_vector(*xmax);
    if (static_cast<int>(lo.size()) != spec.model.n || static_cast<int>(hi.size()) != spec.model.n)
      throw ProblemFileError("x_min/x_max must have one entry per state", xmin->line);
    spec.model.X = Box(lo, hi);
  }

  // --- safe_set: s1, s2, ...
  for (int i = 1;; ++i) {
    const Entry* si = sec.get("safe_set.s" + std::to_string(i));
    if (!si) break;
    Expr s = parse_expr_entry(*si, spec.model.n, 0);
    spec.model.safe_fns.push_back(std::move(s));
  }
  if (spec.model.safe_fns.empty()) throw ProblemFileError("[safe_set] needs at least s1", 0);

  // --- train
  if (const Entry* e = sec.get("train.degree")) spec.degree = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("train.gamma0_min")) spec.gamma_bounds.gamma0_min = parse_double(*e);
  if (const Entry* e = sec.get("train.gamma0_max")) spec.gamma_bounds.gamma0_max = parse_double(*e);
  spec.gamma_bounds.gamma0 =
      0.5 * (spec.gamma_bounds.gamma0_min + spec.gamma_bounds.gamma0_max);
  if (const Entry* e = sec.get("train.l_tilde")) spec.loss_cfg.l_tilde = parse_double(*e);
  if (const Entry* e = sec.get("train.eta")) spec.loss_cfg.eta = parse_double(*e);
  if (const Entry* e = sec.get("train.delta")) spec.loss_cfg.delta = parse_double(*e);
  if (const Entry* e = sec.get("train.c1")) spec.loss_cfg.c1 = parse_double(*e);
  if (const Entry* e = sec.get("train.c2")) spec.loss_cfg.c2 = parse_double(*e);
  if (const Entry* e = sec.get("train.alpha")) {
    auto v = parse_vector(*e);
    if (v.size() != 5) throw ProblemFileError("alpha needs 5 weights", e->line);
    for (int i = 0; i < 5; ++i) spec.loss_cfg.alpha[i] = v[i];
  }
  if (const Entry* e = sec.get("train.batch_size"))
    spec.train_cfg.batch_size = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("train.max_epoch"))
    spec.train_cfg.max_epoch = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("train.mu")) spec.train_cfg.mu = parse_double(*e);
  if (const Entry* e = sec.get("train.momentum")) spec.train_cfg.momentum = parse_double(*e);
  if (const Entry* e = sec.get("train.policy_lr_scale"))
    spec.train_cfg.policy_lr_scale = parse_double(*e);
  if (const Entry* e = sec.get("train.lr_floor_frac"))
    spec.train_cfg.lr_floor_frac = parse_double(*e);
  if (const Entry* e = sec.get("train.budget_seconds"))
    spec.train_cfg.budget_seconds = parse_double(*e);
  if (const Entry* e = sec.get("train.grad_clip")) spec.train_cfg.grad_clip = parse_double(*e);
  if (const Entry* e = sec.get("train.max_restarts"))
    spec.train_cfg.max_restarts = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("train.hidden")) spec.train_cfg.hidden = parse_int_vector(*e);
  if (const Entry* e = sec.get("train.count_safe"))
    spec.cegis_cfg.count_safe = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("train.count_unsafe"))
    spec.cegis_cfg.count_unsafe = static_cast<int>(parse_int(*e));
  for (Entry* e : sec.get_all("train.anchor")) {
    auto v = parse_vector(*e);
    if (static_cast<int>(v.size()) != spec.model.n)
      throw ProblemFileError("anchor needs one value per state", e->line);
    spec.anchors.push_back(std::move(v));
  }
  spec.loss_cfg.w_max = spec.model.w_max;

  // --- verify
  if (const Entry* e = sec.get("verify.epsilon")) spec.verify_cfg.epsilon = parse_double(*e);
  if (const Entry* e = sec.get("verify.global_opt_tol"))
    spec.verify_cfg.global_opt_tol = parse_double(*e);
  if (const Entry* e = sec.get("verify.convex_tol")) spec.verify_cfg.convex_tol = parse_double(*e);
  if (const Entry* e = sec.get("verify.max_subdomains"))
    spec.verify_cfg.max_subdomains = static_cast<std::size_t>(parse_int(*e));

  // --- cegis
  if (const Entry* e = sec.get("cegis.budget_seconds"))
    spec.cegis_cfg.budget_seconds = parse_double(*e);
  if (const Entry* e = sec.get("cegis.epsilon_init")) spec.cegis_cfg.epsilon_init = parse_double(*e);
  if (const Entry* e = sec.get("cegis.epsilon_floor"))
    spec.cegis_cfg.epsilon_floor = parse_double(*e);
  if (const Entry* e = sec.get("cegis.seed")) spec.seed = static_cast<std::uint64_t>(parse_int(*e));

  // --- simulate
  for (int j = 1; j <= spec.model.m; ++j) {
    const Entry* e = sec.get("simulate.nominal" + std::to_string(j));
    spec.nominal.push_back(e ? parse_expr_entry(*e, spec.model.n, 0) : Expr::constant(0.0));
  }
  if (const Entry* e = sec.get("simulate.x0")) {
    spec.x0 = parse_vector(*e);
    if (static_cast<int>(spec.x0.size()) != spec.model.n)
      throw ProblemFileError("x0 needs one value per state", e->line);
  } else {
    spec.x0.assign(spec.model.n, 0.0);
  }
  if (const Entry* e = sec.get("simulate.steps")) spec.sim_steps = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("simulate.seeds")) spec.sim_seeds = static_cast<int>(parse_int(*e));
  if (const Entry* e = sec.get("simulate.tol")) spec.sim_tol = parse_double(*e);
  if (const Entry* e = sec.get("simulate.disturbance")) {
    const std::string v = unquote(*e);
    if (v == "uniform_ball")
      spec.sim_mode = DisturbanceMode::UniformBall;
    else if (v == "boundary")
      spec.sim_mode = DisturbanceMode::Boundary;
    else if (v == "worst_axis")
      spec.sim_mode = DisturbanceMode::WorstAxis;
    else
      throw ProblemFileError("unknown disturbance mode '" + v + "'", e->line);
  }

  // Reject anything not consumed.
  for (const auto& [key, entry] : sec.entries)
    if (!entry.used) throw ProblemFileError("unknown key '" + key + "'", entry.line);

  spec.model.validate();
  return spec;
}

ProblemSpec load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProblemFileError("cannot open problem file '" + path + "'", 0);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_problem_text(buf.str());
}

}  // namespace cbf
