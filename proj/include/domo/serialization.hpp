#pragma once

#include "domo/mdp.hpp"

#include <iosfwd>
#include <string>

namespace domo {

/// JSON document with dimensions, gamma, optional horizon cap, row-major
/// transition [x][a][y] and reward [x][a] arrays, and generation provenance.
/// Doubles are written in shortest round-trip form, so load(save(m)) == m bitwise.
std::string mdp_to_json(const Mdpd& mdp);
Mdpd mdp_from_json(const std::string& text);

void save_mdp(const Mdpd& mdp, const std::string& path);
Mdpd load_mdp(const std::string& path);

}  // namespace domo
