#pragma once

// nlohmann/json bindings for the corpus types. Private to the library so the
// installed headers do not depend on the vendored json header.

#include <json.hpp>

#include "vqc/corpus.h"

namespace vqc {

using json = nlohmann::json;

json image_to_json(const ImageRef& ref);
ImageRef image_from_json(const json& j);

json group_to_json(const ImageGroup& group);
ImageGroup group_from_json(const json& j);

json item_to_json(const ComparisonItem& item);
ComparisonItem item_from_json(const json& j);

// Parses one line; throws Error(kParse) naming the line number on failure.
json parse_json_line(std::string_view line, std::size_t line_no);

}  // namespace vqc
