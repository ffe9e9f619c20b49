#include "apxn/mdp_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace apxn {

namespace {

using nlohmann::json;

const json& field(const json& doc, const char* key) {
  if (!doc.contains(key)) throw Error(Errc::ConfigError, std::string("missing field '") + key + "'");
  return doc.at(key);
}

}  // namespace

TabularMdp<double> parse_mdp_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ConfigError, e.what());
  }

  TabularMdp<double> m;
  try {
    m.n_states = field(doc, "n_states").get<Index>();
    m.n_actions = field(doc, "n_actions").get<Index>();
    m.gamma = field(doc, "gamma").get<double>();
    const auto p1 = field(doc, "p1").get<std::vector<double>>();
    const auto trans = field(doc, "trans").get<std::vector<std::vector<std::vector<double>>>>();
    const auto reward = field(doc, "reward").get<std::vector<std::vector<double>>>();

    const auto ns = static_cast<std::size_t>(m.n_states);
    const auto na = static_cast<std::size_t>(m.n_actions);
    if (p1.size() != ns || trans.size() != ns || reward.size() != ns)
      throw Error(Errc::DimensionMismatch, "outer dimension must equal n_states");

    m.p1 = Eigen::Map<const Eigen::VectorXd>(p1.data(), m.n_states);
    m.trans.resize(m.n_states * m.n_actions, m.n_states);
    m.reward.resize(m.n_states, m.n_actions);
    for (std::size_t s = 0; s < ns; ++s) {
      if (trans[s].size() != na || reward[s].size() != na)
        throw Error(Errc::DimensionMismatch, "action dimension must equal n_actions (s=" + std::to_string(s) + ")");
      for (std::size_t a = 0; a < na; ++a) {
        if (trans[s][a].size() != ns)
          throw Error(Errc::DimensionMismatch, "next-state dimension must equal n_states (s=" +
                                                   std::to_string(s) + ",a=" + std::to_string(a) + ")");
        m.reward(static_cast<Index>(s), static_cast<Index>(a)) = reward[s][a];
        for (std::size_t t = 0; t < ns; ++t)
          m.trans(m.row(static_cast<Index>(s), static_cast<Index>(a)), static_cast<Index>(t)) = trans[s][a][t];
      }
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  check(m);
  return m;
}

TabularMdp<double> load_mdp_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mdp_json(buf.str());
}

std::string to_json(const TabularMdp<double>& mdp) {
  json doc;
  doc["n_states"] = mdp.n_states;
  doc["n_actions"] = mdp.n_actions;
  doc["gamma"] = mdp.gamma;
  doc["p1"] = std::vector<double>(mdp.p1.data(), mdp.p1.data() + mdp.p1.size());
  json trans = json::array();
  json reward = json::array();
  for (Index s = 0; s < mdp.n_states; ++s) {
    json ts = json::array();
    json rs = json::array();
    for (Index a = 0; a < mdp.n_actions; ++a) {
      json row = json::array();
      for (Index t = 0; t < mdp.n_states; ++t) row.push_back(mdp.trans(mdp.row(s, a), t));
      ts.push_back(row);
      rs.push_back(mdp.reward(s, a));
    }
    trans.push_back(ts);
    reward.push_back(rs);
  }
  doc["trans"] = trans;
  doc["reward"] = reward;
  return doc.dump(2);
}

}  // namespace apxn
