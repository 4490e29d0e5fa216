#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vqc {

enum class ImageSource { kInTheWild, kArtificialDistortion, kAiGenerated, kUnknown };

std::string_view to_string(ImageSource s);
ImageSource image_source_from_string(std::string_view s);

struct ImageRef {
  std::string id;
  ImageSource source = ImageSource::kUnknown;
  std::optional<std::string> uri;

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct DescriptionRecord {
  ImageRef image;
  std::string text;

  friend bool operator==(const DescriptionRecord&, const DescriptionRecord&) = default;
};

// Ordered tuple of images compared together. Position matters: member 0 is
// "the first image" in every prompt rendered for the group.
class ImageGroup {
 public:
  static constexpr std::size_t kMinSize = 2;
  static constexpr std::size_t kMaxSize = 4;

  ImageGroup() = default;

  // Comparison group of 2..4 distinct images.
  static ImageGroup make(std::vector<ImageRef> members);
  // Single-image context (single-image instruction data, single-image MCQs).
  static ImageGroup single(ImageRef image);

  const std::vector<ImageRef>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }
  // Digest of the member ids in order.
  const std::string& id() const { return id_; }
  std::vector<std::string> member_ids() const;
  // Sorted member ids joined; equal for groups with the same unordered set.
  std::string unordered_key() const;

  friend bool operator==(const ImageGroup& a, const ImageGroup& b) {
    return a.members_ == b.members_;
  }

 private:
  ImageGroup(std::vector<ImageRef> members);
  std::vector<ImageRef> members_;
  std::string id_;
};

std::string group_id_for(const std::vector<std::string>& ordered_ids);

enum class ItemKind {
  kMergedGeneral,
  kTeachGeneral,
  kTeachQaDirect,
  kTeachMcq,
  kSingleInstruct,
};

enum class Provenance { kMerge2Compare, kTeach2Compare, kExternal };

std::string_view to_string(ItemKind k);
std::string_view to_string(Provenance p);
ItemKind item_kind_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);

struct ComparisonItem {
  ImageGroup group;
  ItemKind kind = ItemKind::kMergedGeneral;
  std::string query;
  std::string response;
  std::optional<std::vector<std::string>> options;
  std::optional<int> answer_index;
  Provenance provenance = Provenance::kMerge2Compare;

  // Throws Error(kInvalidArgument) describing the first violated invariant.
  void validate() const;

  friend bool operator==(const ComparisonItem&, const ComparisonItem&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(std::vector<ImageRef> manifest, std::vector<DescriptionRecord> descriptions);

  const std::vector<ImageRef>& manifest() const { return manifest_; }
  const std::vector<DescriptionRecord>& descriptions() const { return descriptions_; }
  std::size_t size() const { return descriptions_.size(); }

  const DescriptionRecord* find_description(std::string_view image_id) const;
  const ImageRef* find_image(std::string_view image_id) const;
  std::vector<std::string> image_ids() const;

 private:
  std::vector<ImageRef> manifest_;
  std::vector<DescriptionRecord> descriptions_;
  std::unordered_map<std::string, std::size_t> desc_index_;
  std::unordered_map<std::string, std::size_t> image_index_;
};

// Descriptions file: one {"image_id","source","uri","text"} object per line.
Corpus load_descriptions(const std::string& path);

// Manifest file: one {"image_id","source","uri"} object per line. Extra
// fields are ignored, so a descriptions file doubles as a manifest.
std::vector<ImageRef> load_manifest(const std::string& path);

std::string to_json_line(const ComparisonItem& item);
ComparisonItem item_from_json_line(std::string_view line, std::size_t line_no = 0);

// Validates every item before touching the file. Returns the count written.
std::size_t save_items(const std::vector<ComparisonItem>& items, const std::string& path);
std::vector<ComparisonItem> load_items(const std::string& path);

std::string to_json_line(const ImageGroup& group);
ImageGroup group_from_json_line(std::string_view line, std::size_t line_no = 0);
void save_groups(const std::vector<ImageGroup>& groups, const std::string& path);
std::vector<ImageGroup> load_groups(const std::string& path);

}  // namespace vqc
