#pragma once

#include <string>
#include <vector>

namespace lvt {

// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace lvt
