#pragma once

#include "apxn/mdp.hpp"

#include <string>

namespace apxn {

/// Parses the JSON document
/// `{"n_states", "n_actions", "gamma", "p1", "trans"[s][a][s'], "reward"[s][a]}`
/// and validates the result.
TabularMdp<double> parse_mdp_json(const std::string& text);
TabularMdp<double> load_mdp_json(const std::string& path);
std::string to_json(const TabularMdp<double>& mdp);

}  // namespace apxn
