#pragma once

#include <string>

#include "cbf/cegis.hpp"

namespace cbf {

// Everything a trained pair needs to be reloaded, re-verified and
// deployed: monomials + theta, gamma0, the Lipschitz budget, the policy
// (training-only, kept for reproducibility), loss configuration, seed
// and the sample sets with per-point provenance.
struct Artifact {
  std::uint64_t seed = 0;
  PolyBarrierParam h;
  GammaParam gamma;
  double l_tilde = 0.0;
  PolicyNet net;
  LossConfig loss_cfg;
  SampleSets samples;
};

std::string artifact_to_json(const Artifact& a);  // deterministic, key-ordered
Artifact artifact_from_json(const std::string& text);

void save_artifact(const std::string& path, const Artifact& a);
Artifact load_artifact(const std::string& path);

CandidateBarrier barrier_from_artifact(const Artifact& a);
Artifact artifact_from_cegis(const CegisResult& r, std::uint64_t seed, const LossConfig& loss_cfg);

}  // namespace cbf
