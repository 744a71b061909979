#include "domo/serialization.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace domo {

namespace {

constexpr const char* kFormat = "domo-mdp";
constexpr int kVersion = 1;

}  // namespace

std::string mdp_to_json(const Mdpd& mdp) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  nlohmann::ordered_json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["n_states"] = S;
  j["n_actions"] = A;
  j["gamma"] = mdp.gamma();
  j["horizon_cap"] = mdp.horizon_cap() ? nlohmann::ordered_json(*mdp.horizon_cap()) : nullptr;
  std::vector<double> transition;
  transition.reserve(static_cast<std::size_t>(S) * A * S);
  for (int x = 0; x < S; ++x)
    for (int a = 0; a < A; ++a)
      for (int y = 0; y < S; ++y) transition.push_back(mdp.transition(x, a, y));
  std::vector<double> reward;
  for (int x = 0; x < S; ++x)
    for (int a = 0; a < A; ++a) reward.push_back(mdp.reward(x, a));
  j["transition"] = transition;
  j["reward"] = reward;
  if (mdp.provenance())
    j["provenance"] = {{"seed", mdp.provenance()->seed}, {"alpha", mdp.provenance()->alpha}};
  else
    j["provenance"] = nullptr;
  return j.dump(1) + "\n";
}

Mdpd mdp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError(std::string("malformed MDP file: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormat) throw ParameterError("not a domo-mdp document");
    if (j.at("version").get<int>() != kVersion) throw ParameterError("unsupported domo-mdp version");
    const int S = j.at("n_states").get<int>();
    const int A = j.at("n_actions").get<int>();
    if (S < 1 || A < 1) throw ParameterError("n_states and n_actions must be positive");
    const auto transition = j.at("transition").get<std::vector<double>>();
    const auto reward = j.at("reward").get<std::vector<double>>();
    if (transition.size() != static_cast<std::size_t>(S) * A * S) throw ParameterError("transition array has wrong length");
    if (reward.size() != static_cast<std::size_t>(S) * A) throw ParameterError("reward array has wrong length");
    Matrixd p(S * A, S);
    for (int r = 0; r < S * A; ++r)
      for (int y = 0; y < S; ++y) p(r, y) = transition[static_cast<std::size_t>(r) * S + y];
    Matrixd rw(S, A);
    for (int x = 0; x < S; ++x)
      for (int a = 0; a < A; ++a) rw(x, a) = reward[static_cast<std::size_t>(x) * A + a];
    std::optional<int> cap;
    if (!j.at("horizon_cap").is_null()) cap = j.at("horizon_cap").get<int>();
    std::optional<MdpProvenance> prov;
    if (j.contains("provenance") && !j.at("provenance").is_null())
      prov = MdpProvenance{j.at("provenance").at("seed").get<std::uint64_t>(),
                           j.at("provenance").at("alpha").get<double>()};
    return Mdpd(std::move(p), std::move(rw), j.at("gamma").get<double>(), cap, prov);
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid MDP file: ") + e.what());
  }
}

void save_mdp(const Mdpd& mdp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open '" + path + "' for writing");
  out << mdp_to_json(mdp);
  if (!out) throw ParameterError("failed writing '" + path + "'");
}

Mdpd load_mdp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return mdp_from_json(buf.str());
}

}  // namespace domo
