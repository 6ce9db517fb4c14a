#include "csm/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "csm/errors.hpp"

namespace csm::io {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write file: " + path);
    out << contents;
    if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace csm::io
