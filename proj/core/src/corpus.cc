#include "vqc/corpus.h"

#include <algorithm>
#include <unordered_set>

#include "json_codec.h"
#include "vqc/digest.h"
#include "vqc/error.h"
#include "vqc/jsonl.h"

namespace vqc {

namespace {

struct SourceName {
  ImageSource value;
  std::string_view name;
};
constexpr SourceName kSourceNames[] = {
    {ImageSource::kInTheWild, "in_the_wild"},
    {ImageSource::kArtificialDistortion, "artificial_distortion"},
    {ImageSource::kAiGenerated, "ai_generated"},
    {ImageSource::kUnknown, "unknown"},
};

struct KindName {
  ItemKind value;
  std::string_view name;
};
constexpr KindName kKindNames[] = {
    {ItemKind::kMergedGeneral, "merged_general"},
    {ItemKind::kTeachGeneral, "teach_general"},
    {ItemKind::kTeachQaDirect, "teach_qa_direct"},
    {ItemKind::kTeachMcq, "teach_mcq"},
    {ItemKind::kSingleInstruct, "single_instruct"},
};

struct ProvenanceName {
  Provenance value;
  std::string_view name;
};
constexpr ProvenanceName kProvenanceNames[] = {
    {Provenance::kMerge2Compare, "merge2compare"},
    {Provenance::kTeach2Compare, "teach2compare"},
    {Provenance::kExternal, "external"},
};

[[noreturn]] void bad(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace

std::string_view to_string(ImageSource s) {
  for (const auto& n : kSourceNames)
    if (n.value == s) return n.name;
  return "unknown";
}

ImageSource image_source_from_string(std::string_view s) {
  for (const auto& n : kSourceNames)
    if (n.name == s) return n.value;
  bad("unknown image source '" + std::string(s) + "'");
}

std::string_view to_string(ItemKind k) {
  for (const auto& n : kKindNames)
    if (n.value == k) return n.name;
  return "?";
}

ItemKind item_kind_from_string(std::string_view s) {
  for (const auto& n : kKindNames)
    if (n.name == s) return n.value;
  bad("unknown item kind '" + std::string(s) + "'");
}

std::string_view to_string(Provenance p) {
  for (const auto& n : kProvenanceNames)
    if (n.value == p) return n.name;
  return "?";
}

Provenance provenance_from_string(std::string_view s) {
  for (const auto& n : kProvenanceNames)
    if (n.name == s) return n.value;
  bad("unknown provenance '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------

std::string group_id_for(const std::vector<std::string>& ordered_ids) {
  return digest_ordered(ordered_ids);
}

ImageGroup::ImageGroup(std::vector<ImageRef> members) : members_(std::move(members)) {
  id_ = group_id_for(member_ids());
}

ImageGroup ImageGroup::make(std::vector<ImageRef> members) {
  if (members.size() < kMinSize || members.size() > kMaxSize)
    bad("group size " + std::to_string(members.size()) + " outside [2, 4]");
  std::unordered_set<std::string> seen;
  for (const auto& m : members) {
    if (m.id.empty()) bad("group member with empty image id");
    if (!seen.insert(m.id).second) bad("duplicate image id '" + m.id + "' in group");
  }
  return ImageGroup(std::move(members));
}

ImageGroup ImageGroup::single(ImageRef image) {
  if (image.id.empty()) bad("image with empty id");
  std::vector<ImageRef> m;
  m.push_back(std::move(image));
  return ImageGroup(std::move(m));
}

std::vector<std::string> ImageGroup::member_ids() const {
  std::vector<std::string> ids;
  ids.reserve(members_.size());
  for (const auto& m : members_) ids.push_back(m.id);
  return ids;
}

std::string ImageGroup::unordered_key() const {
  auto ids = member_ids();
  std::sort(ids.begin(), ids.end());
  std::string key;
  for (const auto& id : ids) {
    key += id;
    key += '\x1f';
  }
  return key;
}

void ComparisonItem::validate() const {
  if (group.size() == 0) bad("item has no images");
  const bool single_ok = kind == ItemKind::kSingleInstruct;
  if (group.size() == 1 && !single_ok)
    bad("item kind " + std::string(to_string(kind)) + " needs 2-4 images");
  if (kind == ItemKind::kTeachMcq) {
    if (!options) bad("teach_mcq item without options");
    if (options->size() < 2 || options->size() > 4)
      bad("teach_mcq item needs 2-4 options, has " + std::to_string(options->size()));
    if (!answer_index || *answer_index < 0 ||
        *answer_index >= static_cast<int>(options->size()))
      bad("teach_mcq answer_index out of range");
  } else if (options || answer_index) {
    bad("options are only allowed on teach_mcq items");
  }
}

// ---------------------------------------------------------------------------

Corpus::Corpus(std::vector<ImageRef> manifest, std::vector<DescriptionRecord> descriptions)
    : manifest_(std::move(manifest)), descriptions_(std::move(descriptions)) {
  for (std::size_t i = 0; i < manifest_.size(); ++i) {
    if (manifest_[i].id.empty()) bad("manifest entry with empty image id");
    if (!image_index_.emplace(manifest_[i].id, i).second)
      throw Error(ErrorCode::kDuplicate, "duplicate image id '" + manifest_[i].id + "' in manifest");
  }
  for (std::size_t i = 0; i < descriptions_.size(); ++i) {
    const auto& d = descriptions_[i];
    if (!image_index_.count(d.image.id))
      bad("description for '" + d.image.id + "' has no manifest entry");
    if (is_blank(d.text)) bad("empty description for '" + d.image.id + "'");
    if (!desc_index_.emplace(d.image.id, i).second)
      throw Error(ErrorCode::kDuplicate, "duplicate description for '" + d.image.id + "'");
  }
}

const DescriptionRecord* Corpus::find_description(std::string_view image_id) const {
  auto it = desc_index_.find(std::string(image_id));
  return it == desc_index_.end() ? nullptr : &descriptions_[it->second];
}

const ImageRef* Corpus::find_image(std::string_view image_id) const {
  auto it = image_index_.find(std::string(image_id));
  return it == image_index_.end() ? nullptr : &manifest_[it->second];
}

std::vector<std::string> Corpus::image_ids() const {
  std::vector<std::string> ids;
  ids.reserve(manifest_.size());
  for (const auto& m : manifest_) ids.push_back(m.id);
  return ids;
}

// ---------------------------------------------------------------------------

json parse_json_line(std::string_view line, std::size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": not a JSON object");
  return j;
}

json image_to_json(const ImageRef& ref) {
  json j{{"image_id", ref.id}, {"source", to_string(ref.source)}};
  j["uri"] = ref.uri ? json(*ref.uri) : json(nullptr);
  return j;
}

ImageRef image_from_json(const json& j) {
  ImageRef ref;
  ref.id = j.at("image_id").get<std::string>();
  if (ref.id.empty()) bad("empty image_id");
  if (auto it = j.find("source"); it != j.end() && !it->is_null())
    ref.source = image_source_from_string(it->get<std::string>());
  if (auto it = j.find("uri"); it != j.end() && !it->is_null())
    ref.uri = it->get<std::string>();
  return ref;
}

json group_to_json(const ImageGroup& group) {
  json members = json::array();
  for (const auto& m : group.members()) members.push_back(image_to_json(m));
  return json{{"group_id", group.id()}, {"members", std::move(members)}};
}

ImageGroup group_from_json(const json& j) {
  std::vector<ImageRef> members;
  for (const auto& m : j.at("members")) members.push_back(image_from_json(m));
  ImageGroup g = members.size() == 1 ? ImageGroup::single(std::move(members[0]))
                                     : ImageGroup::make(std::move(members));
  if (auto it = j.find("group_id"); it != j.end() && it->get<std::string>() != g.id())
    bad("group_id does not match member digest");
  return g;
}

json item_to_json(const ComparisonItem& item) {
  json j = group_to_json(item.group);
  j["kind"] = to_string(item.kind);
  j["query"] = item.query;
  j["response"] = item.response;
  j["options"] = item.options ? json(*item.options) : json(nullptr);
  j["answer_index"] = item.answer_index ? json(*item.answer_index) : json(nullptr);
  j["provenance"] = to_string(item.provenance);
  return j;
}

ComparisonItem item_from_json(const json& j) {
  ComparisonItem item;
  item.group = group_from_json(j);
  item.kind = item_kind_from_string(j.at("kind").get<std::string>());
  item.query = j.at("query").get<std::string>();
  item.response = j.at("response").get<std::string>();
  if (auto it = j.find("options"); it != j.end() && !it->is_null())
    item.options = it->get<std::vector<std::string>>();
  if (auto it = j.find("answer_index"); it != j.end() && !it->is_null())
    item.answer_index = it->get<int>();
  item.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  item.validate();
  return item;
}

namespace {

template <typename F>
auto with_line_context(std::size_t line_no, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParse) throw;
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
  }
}

}  // namespace

Corpus load_descriptions(const std::string& path) {
  std::vector<ImageRef> manifest;
  std::vector<DescriptionRecord> descs;
  std::unordered_map<std::string, std::size_t> first_line;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    DescriptionRecord rec = with_line_context(n, [&] {
      json j = parse_json_line(line, n);
      DescriptionRecord r;
      r.image = image_from_json(j);
      r.text = j.at("text").get<std::string>();
      if (is_blank(r.text)) bad("empty description text");
      return r;
    });
    auto [it, fresh] = first_line.emplace(rec.image.id, n);
    if (!fresh)
      throw Error(ErrorCode::kDuplicate,
                  "duplicate image id '" + rec.image.id + "' on lines " +
                      std::to_string(it->second) + " and " + std::to_string(n));
    manifest.push_back(rec.image);
    descs.push_back(std::move(rec));
  });
  return Corpus(std::move(manifest), std::move(descs));
}

std::vector<ImageRef> load_manifest(const std::string& path) {
  std::vector<ImageRef> out;
  std::unordered_map<std::string, std::size_t> first_line;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    ImageRef ref = with_line_context(n, [&] { return image_from_json(parse_json_line(line, n)); });
    auto [it, fresh] = first_line.emplace(ref.id, n);
    if (!fresh)
      throw Error(ErrorCode::kDuplicate,
                  "duplicate image id '" + ref.id + "' on lines " +
                      std::to_string(it->second) + " and " + std::to_string(n));
    out.push_back(std::move(ref));
  });
  return out;
}

std::string to_json_line(const ComparisonItem& item) { return item_to_json(item).dump(); }

ComparisonItem item_from_json_line(std::string_view line, std::size_t line_no) {
  return with_line_context(line_no, [&] { return item_from_json(parse_json_line(line, line_no)); });
}

std::size_t save_items(const std::vector<ComparisonItem>& items, const std::string& path) {
  std::vector<std::string> lines;
  lines.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      items[i].validate();
    } catch (const Error& e) {
      bad("item " + std::to_string(i) + ": " + e.what());
    }
    lines.push_back(to_json_line(items[i]));
  }
  write_lines(path, lines);
  return lines.size();
}

std::vector<ComparisonItem> load_items(const std::string& path) {
  std::vector<ComparisonItem> out;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    out.push_back(item_from_json_line(line, n));
  });
  return out;
}

std::string to_json_line(const ImageGroup& group) { return group_to_json(group).dump(); }

ImageGroup group_from_json_line(std::string_view line, std::size_t line_no) {
  return with_line_context(line_no, [&] { return group_from_json(parse_json_line(line, line_no)); });
}

void save_groups(const std::vector<ImageGroup>& groups, const std::string& path) {
  std::vector<std::string> lines;
  lines.reserve(groups.size());
  for (const auto& g : groups) lines.push_back(to_json_line(g));
  write_lines(path, lines);
}

std::vector<ImageGroup> load_groups(const std::string& path) {
  std::vector<ImageGroup> out;
  for_each_line(path, [&](std::string_view line, std::size_t n) {
    out.push_back(group_from_json_line(line, n));
  });
  return out;
}

}  // namespace vqc
