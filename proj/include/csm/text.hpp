#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace csm::text {

// Whitespace tokenization. All word counts in the pipeline go through here.
std::vector<std::string> split_words(std::string_view s);
std::size_t word_count(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);
std::string trim(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// Substitutes {name} placeholders; keys absent from `vars` are left as-is.
std::string render_template(
    std::string_view tmpl,
    const std::vector<std::pair<std::string, std::string>>& vars);

}  // namespace csm::text
