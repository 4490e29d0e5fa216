#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vqc/chat.h"
#include "vqc/corpus.h"

namespace vqc {

// "first" .. "fourth" for 0..3; Error(kInvalidArgument) beyond.
std::string_view ordinal_word(std::size_t index);

inline constexpr std::string_view kPairQuestion = "Which image has better quality, and why?";
inline constexpr std::string_view kRankQuestion =
    "Please rank the quality of the images and justify your rankings.";

// kPairQuestion for two images, kRankQuestion for three or four.
std::string_view comparison_question(std::size_t group_size);

// "The first image: <d0> The second image: <d1> ... <question>", one entry
// per description. Size must be 2..4.
std::string render_merge_prompt(const std::vector<std::string>& descriptions);
std::string render_merge_prompt(const ImageGroup& group, const Corpus& descs);

// Same template with <img_k> slots in place of descriptions, images bound.
Turn render_teach_general_prompt(const ImageGroup& group);

struct DistillStats {
  std::size_t requested = 0;
  std::size_t parsed_ok = 0;
  std::size_t dropped_failed = 0;

  DistillStats& operator+=(const DistillStats& o) {
    requested += o.requested;
    parsed_ok += o.parsed_ok;
    dropped_failed += o.dropped_failed;
    return *this;
  }
  friend bool operator==(const DistillStats&, const DistillStats&) = default;
};

struct DistillResult {
  std::vector<ComparisonItem> items;
  DistillStats stats;
};

// One merged comparison per group from a text-only client. Failed or blank
// generations are dropped and counted. Responses are kept verbatim.
DistillResult merge_compare(ChatClient& client, const std::vector<ImageGroup>& groups,
                            const Corpus& descs, const CallOptions& options);

// Teacher general comparisons on real images.
DistillResult teach_general(ChatClient& client, const std::vector<ImageGroup>& groups,
                            const CallOptions& options);

struct QAItem {
  ImageGroup group;
  std::string question;
  std::string correct;
  std::vector<std::string> distractors;  // 1..3
  std::string aspect;

  friend bool operator==(const QAItem&, const QAItem&) = default;
};

// clarity, lighting, color, noise, sharpness, composition
std::vector<std::string> default_aspects();

// Teacher instructions for Q&A generation. The reply contract is one block
// per question:
//   Q: <question>
//   CORRECT: <answer>
//   WRONG: <wrong>; <wrong>; <wrong>
// with an optional leading "ASPECT: <tag>" line.
Turn render_qa_prompt(const ImageGroup& group, const std::vector<std::string>& aspects);

struct QAParse {
  std::vector<QAItem> items;
  std::size_t records = 0;
  std::size_t malformed = 0;
};

QAParse parse_qa_records(std::string_view response, const ImageGroup& group,
                         const std::vector<std::string>& aspects);

struct QABatch {
  std::vector<QAItem> items;
  DistillStats stats;
};

// Stats count records: each parsed record is parsed_ok, each malformed one
// dropped_failed. A group whose call fails or whose reply holds no records
// counts as one requested, one dropped.
QABatch generate_qa(ChatClient& client, const std::vector<ImageGroup>& groups,
                    const std::vector<std::string>& aspects, const CallOptions& options);

struct McqPair {
  ComparisonItem mcq;     // kind teach_mcq
  ComparisonItem direct;  // kind teach_qa_direct
};

// Options are a seeded shuffle of {correct} + distractors, deterministic in
// (item, seed).
McqPair qa_to_mcq(const QAItem& item, std::uint64_t seed);

}  // namespace vqc
