#include <gtest/gtest.h>

#include <functional>

#include "unit/test_util.h"
#include "vqc/corpus.h"
#include "vqc/error.h"

namespace vqc {
namespace {

using testing::img;
using testing::TempDir;
using testing::write_file;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

TEST(ImageGroup, SizeAndDistinctness) {
  EXPECT_NO_THROW(ImageGroup::make({img("a"), img("b")}));
  EXPECT_NO_THROW(ImageGroup::make({img("a"), img("b"), img("c"), img("d")}));
  EXPECT_THROW(ImageGroup::make({img("a")}), Error);
  EXPECT_THROW(ImageGroup::make({img("a"), img("b"), img("c"), img("d"), img("e")}), Error);
  EXPECT_THROW(ImageGroup::make({img("a"), img("a")}), Error);
}

TEST(ImageGroup, IdDependsOnOrderUnorderedKeyDoesNot) {
  const auto ab = ImageGroup::make({img("a"), img("b")});
  const auto ba = ImageGroup::make({img("b"), img("a")});
  EXPECT_NE(ab.id(), ba.id());
  EXPECT_EQ(ab.unordered_key(), ba.unordered_key());
  EXPECT_EQ(ab.id(), ImageGroup::make({img("a"), img("b")}).id());
  EXPECT_EQ(ab.id().size(), 16u);
}

TEST(ComparisonItem, McqInvariants) {
  ComparisonItem item;
  item.group = ImageGroup::make({img("a"), img("b")});
  item.kind = ItemKind::kTeachMcq;
  item.query = "Which is sharper?";
  item.response = "the first";
  item.options = std::vector<std::string>{"the first", "the second"};
  item.answer_index = 0;
  EXPECT_NO_THROW(item.validate());
  item.answer_index = 2;
  EXPECT_THROW(item.validate(), Error);
  item.answer_index = 1;
  item.options = std::vector<std::string>{"only one"};
  EXPECT_THROW(item.validate(), Error);

  ComparisonItem general;
  general.group = item.group;
  general.kind = ItemKind::kMergedGeneral;
  general.options = std::vector<std::string>{"x", "y"};
  EXPECT_THROW(general.validate(), Error);
}

TEST(ComparisonItem, SingleImageOnlyForSingleInstruct) {
  ComparisonItem item;
  item.group = ImageGroup::single(img("a"));
  item.kind = ItemKind::kMergedGeneral;
  EXPECT_THROW(item.validate(), Error);
  item.kind = ItemKind::kSingleInstruct;
  item.provenance = Provenance::kExternal;
  EXPECT_NO_THROW(item.validate());
}

TEST(ComparisonItem, JsonRoundTrip) {
  ComparisonItem item;
  item.group = ImageGroup::make({ImageRef{"a", ImageSource::kAiGenerated, "s3://x/a.png"}, img("b"), img("c")});
  item.kind = ItemKind::kTeachMcq;
  item.query = "Which image is the \"noisiest\"?\nPick one.";
  item.response = "the second image";
  item.options = std::vector<std::string>{"the first image", "the second image", "the third image"};
  item.answer_index = 1;
  item.provenance = Provenance::kTeach2Compare;
  const std::string line = to_json_line(item);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_EQ(item_from_json_line(line), item);
}

TEST(Corpus, LoadDescriptions) {
  TempDir dir;
  const auto path = dir.file("d.jsonl");
  write_file(path,
             "{\"image_id\":\"a\",\"source\":\"in_the_wild\",\"uri\":null,\"text\":\"Sharp and bright.\"}\n"
             "{\"image_id\":\"b\",\"source\":\"artificial_distortion\",\"text\":\"Heavy blur.\"}\n");
  const Corpus c = load_descriptions(path);
  ASSERT_EQ(c.size(), 2u);
  ASSERT_NE(c.find_description("b"), nullptr);
  EXPECT_EQ(c.find_description("b")->text, "Heavy blur.");
  EXPECT_EQ(c.find_image("b")->source, ImageSource::kArtificialDistortion);
  EXPECT_EQ(c.find_description("zz"), nullptr);
}

TEST(Corpus, DuplicateIdNamesBothLines) {
  TempDir dir;
  const auto path = dir.file("d.jsonl");
  write_file(path,
             "{\"image_id\":\"a\",\"text\":\"one\"}\n"
             "{\"image_id\":\"b\",\"text\":\"two\"}\n"
             "{\"image_id\":\"a\",\"text\":\"three\"}\n");
  try {
    load_descriptions(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicate);
    EXPECT_NE(std::string(e.what()).find("lines 1 and 3"), std::string::npos) << e.what();
  }
}

TEST(Corpus, MalformedLinesAreParseErrorsWithLineNumbers) {
  TempDir dir;
  const auto path = dir.file("d.jsonl");
  write_file(path, "{\"image_id\":\"a\",\"text\":\"ok\"}\n{not json\n");
  try {
    load_descriptions(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  write_file(path, "{\"image_id\":\"a\",\"text\":\"   \"}\n");
  EXPECT_EQ(code_of([&] { load_descriptions(path); }), ErrorCode::kParse);
  write_file(path, "{\"image_id\":\"a\",\"text\":\"x\"}\n\n");
  EXPECT_EQ(code_of([&] { load_descriptions(path); }), ErrorCode::kParse);
  EXPECT_EQ(code_of([&] { load_descriptions(dir.file("missing.jsonl")); }), ErrorCode::kIo);
}

TEST(Corpus, DescriptionWithoutManifestEntryRejected) {
  EXPECT_THROW(Corpus({img("a")}, {DescriptionRecord{img("b"), "text"}}), Error);
}

TEST(Corpus, SaveItemsValidatesBeforeWriting) {
  TempDir dir;
  ComparisonItem good;
  good.group = ImageGroup::make({img("a"), img("b")});
  good.query = "q";
  good.response = "r";
  ComparisonItem bad = good;
  bad.kind = ItemKind::kTeachMcq;  // no options
  const auto path = dir.file("items.jsonl");
  EXPECT_THROW(save_items({good, bad}, path), Error);
  EXPECT_FALSE(std::filesystem::exists(path));
  EXPECT_EQ(save_items({good, good}, path), 2u);
  EXPECT_EQ(load_items(path).size(), 2u);
}

TEST(Corpus, GroupsRoundTrip) {
  TempDir dir;
  const std::vector<ImageGroup> groups{ImageGroup::make({img("a"), img("b")}),
                                       ImageGroup::make({img("c"), img("a"), img("d")})};
  save_groups(groups, dir.file("g.jsonl"));
  EXPECT_EQ(load_groups(dir.file("g.jsonl")), groups);
}

}  // namespace
}  // namespace vqc
