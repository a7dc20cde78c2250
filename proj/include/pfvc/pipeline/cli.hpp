#pragma once

#include <string>
#include <vector>

namespace pfvc::pipeline {

// full command-line surface; returns the process exit code
int cli_run(const std::vector<std::string>& args);

}  // namespace pfvc::pipeline
