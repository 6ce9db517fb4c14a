#pragma once

#include <string>

namespace csm::io {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace csm::io
