#pragma once

#include <string>
#include <utility>
#include <vector>

namespace flatdiv {

/// Named reproduction recipes. A preset is a list of config assignments
/// applied before the config file and --set overrides.
std::vector<std::pair<std::string, std::string>> preset_assignments(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace flatdiv
