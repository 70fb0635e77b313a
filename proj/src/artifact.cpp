#include "cbf/artifact.hpp"

#include <fstream>

#include <json.hpp>

namespace cbf {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json samples_to_json(const std::vector<Sample>& set) {
  ordered_json arr = ordered_json::array();
  for (const Sample& s : set) {
    ordered_json o;
    o["x"] = s.x;
    o["tag"] = s.tag == Provenance::Random ? "random" : "counterexample";
    arr.push_back(std::move(o));
  }
  return arr;
}

std::vector<Sample> samples_from_json(const ordered_json& arr) {
  std::vector<Sample> out;
  for (const auto& o : arr) {
    Sample s;
    s.x = o.at("x").get<std::vector<double>>();
    const std::string tag = o.at("tag").get<std::string>();
    if (tag != "random" && tag != "counterexample")
      throw DomainError("unknown sample provenance tag '" + tag + "'");
    s.tag = tag == "random" ? Provenance::Random : Provenance::Counterexample;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string artifact_to_json(const Artifact& a) {
  ordered_json j;
  j["format"] = "barrier-forge-artifact-v1";
  j["seed"] = a.seed;
  j["gamma0"] = a.gamma.gamma0;
  j["gamma0_min"] = a.gamma.gamma0_min;
  j["gamma0_max"] = a.gamma.gamma0_max;
  j["l_tilde"] = a.l_tilde;

  ordered_json barrier;
  barrier["n"] = a.h.n;
  barrier["degree"] = a.h.degree;
  barrier["monomials"] = a.h.monomials;
  barrier["theta"] = a.h.theta;
  j["barrier"] = std::move(barrier);

  ordered_json policy;
  policy["sizes"] = a.net.sizes;
  policy["weights"] = a.net.W;
  policy["biases"] = a.net.b;
  policy["u_min"] = a.net.u_min;
  policy["u_max"] = a.net.u_max;
  j["policy"] = std::move(policy);

  ordered_json loss;
  loss["alpha"] = std::vector<double>(a.loss_cfg.alpha, a.loss_cfg.alpha + 5);
  loss["eta"] = a.loss_cfg.eta;
  loss["c1"] = a.loss_cfg.c1;
  loss["c2"] = a.loss_cfg.c2;
  loss["delta"] = a.loss_cfg.delta;
  loss["l_tilde"] = a.loss_cfg.l_tilde;
  loss["w_max"] = a.loss_cfg.w_max;
  j["loss_config"] = std::move(loss);

  ordered_json samples;
  samples["xs"] = samples_to_json(a.samples.xs);
  samples["xu"] = samples_to_json(a.samples.xu);
  samples["xi"] = samples_to_json(a.samples.xi);
  j["samples"] = std::move(samples);

  return j.dump(2) + "\n";
}

Artifact artifact_from_json(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  if (j.at("format").get<std::string>() != "barrier-forge-artifact-v1")
    throw DomainError("unknown artifact format");
  Artifact a;
  a.seed = j.at("seed").get<std::uint64_t>();
  a.gamma.gamma0 = j.at("gamma0").get<double>();
  a.gamma.gamma0_min = j.at("gamma0_min").get<double>();
  a.gamma.gamma0_max = j.at("gamma0_max").get<double>();
  a.l_tilde = j.at("l_tilde").get<double>();

  const auto& barrier = j.at("barrier");
  a.h.n = barrier.at("n").get<int>();
  a.h.degree = barrier.at("degree").get<int>();
  a.h.monomials = barrier.at("monomials").get<std::vector<std::vector<int>>>();
  a.h.theta = barrier.at("theta").get<std::vector<double>>();
  if (a.h.monomials.size() != a.h.theta.size())
    throw DomainError("artifact: theta length does not match monomial count");
  for (const auto& m : a.h.monomials)
    if (static_cast<int>(m.size()) != a.h.n)
      throw DomainError("artifact: monomial arity does not match n");

  const auto& policy = j.at("policy");
  a.net.sizes = policy.at("sizes").get<std::vector<int>>();
  a.net.W = policy.at("weights").get<std::vector<std::vector<double>>>();
  a.net.b = policy.at("biases").get<std::vector<std::vector<double>>>();
  a.net.u_min = policy.at("u_min").get<std::vector<double>>();
  a.net.u_max = policy.at("u_max").get<std::vector<double>>();

  const auto& loss = j.at("loss_config");
  const auto alpha = loss.at("alpha").get<std::vector<double>>();
  if (alpha.size() != 5) throw DomainError("artifact: alpha needs 5 weights");
  for (int i = 0; i < 5; ++i) a.loss_cfg.alpha[i] = alpha[i];
  a.loss_cfg.eta = loss.at("eta").get<double>();
  a.loss_cfg.c1 = loss.at("c1").get<double>();
  a.loss_cfg.c2 = loss.at("c2").get<double>();
  a.loss_cfg.delta = loss.at("delta").get<double>();
  a.loss_cfg.l_tilde = loss.at("l_tilde").get<double>();
  a.loss_cfg.w_max = loss.at("w_max").get<double>();

  const auto& samples = j.at("samples");
  a.samples.xs = samples_from_json(samples.at("xs"));
  a.samples.xu = samples_from_json(samples.at("xu"));
  a.samples.xi = samples_from_json(samples.at("xi"));
  return a;
}

void save_artifact(const std::string& path, const Artifact& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write artifact to '" + path + "'");
  out << artifact_to_json(a);
}

Artifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open artifact '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return artifact_from_json(text);
}

CandidateBarrier barrier_from_artifact(const Artifact& a) {
  CandidateBarrier b;
  b.h = a.h.to_expr();
  b.gamma0 = a.gamma.gamma0;
  b.l_tilde = a.l_tilde;
  return b;
}

Artifact artifact_from_cegis(const CegisResult& r, std::uint64_t seed, const LossConfig& loss_cfg) {
  Artifact a;
  a.seed = seed;
  a.h = r.trained.h;
  a.gamma = r.trained.gamma;
  a.l_tilde = loss_cfg.l_tilde;
  a.net = r.trained.net;
  a.loss_cfg = loss_cfg;
  a.samples = r.samples;
  return a;
}

}  // namespace cbf
