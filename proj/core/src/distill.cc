#include "vqc/distill.h"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

#include "vqc/digest.h"
#include "vqc/error.h"
#include "vqc/jsonl.h"
#include "vqc/parallel.h"
#include "vqc/rng.h"

namespace vqc {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void check_group_size(std::size_t n) {
  if (n < ImageGroup::kMinSize || n > ImageGroup::kMaxSize)
    throw Error(ErrorCode::kInvalidArgument,
                "comparison prompts need 2-4 images, got " + std::to_string(n));
}

std::string labelled(const std::vector<std::string>& slots) {
  check_group_size(slots.size());
  std::string out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    out += "The ";
    out += ordinal_word(i);
    out += " image: ";
    out += slots[i];
    out += ' ';
  }
  out += comparison_question(slots.size());
  return out;
}

std::vector<std::string> slot_tokens(std::size_t n) {
  std::vector<std::string> slots;
  for (std::size_t i = 0; i < n; ++i) slots.push_back("<img_" + std::to_string(i) + ">");
  return slots;
}

// Strips "KEY:" (case-insensitive) from the start of a trimmed line.
bool take_field(const std::string& line, std::string_view key, std::string* value) {
  if (line.size() < key.size() + 1) return false;
  if (lower(line.substr(0, key.size())) != lower(key) || line[key.size()] != ':') return false;
  *value = trim(std::string_view(line).substr(key.size() + 1));
  return true;
}

}  // namespace

std::string_view ordinal_word(std::size_t index) {
  static constexpr std::string_view kWords[] = {"first", "second", "third", "fourth"};
  if (index >= std::size(kWords))
    throw Error(ErrorCode::kInvalidArgument, "no ordinal for image index " + std::to_string(index));
  return kWords[index];
}

std::string_view comparison_question(std::size_t group_size) {
  check_group_size(group_size);
  return group_size == 2 ? kPairQuestion : kRankQuestion;
}

std::string render_merge_prompt(const std::vector<std::string>& descriptions) {
  return labelled(descriptions);
}

std::string render_merge_prompt(const ImageGroup& group, const Corpus& descs) {
  std::vector<std::string> texts;
  for (const auto& m : group.members()) {
    const DescriptionRecord* d = descs.find_description(m.id);
    if (!d) throw Error(ErrorCode::kNotFound, "no description for image '" + m.id + "'");
    texts.push_back(d->text);
  }
  return render_merge_prompt(texts);
}

Turn render_teach_general_prompt(const ImageGroup& group) {
  return Turn{labelled(slot_tokens(group.size())), group.members()};
}

// ---------------------------------------------------------------------------

namespace {

DistillResult collect(const std::vector<ImageGroup>& groups,
                      const std::vector<std::optional<ComparisonItem>>& produced) {
  DistillResult r;
  r.stats.requested = groups.size();
  for (const auto& item : produced) {
    if (item) {
      r.items.push_back(*item);
      ++r.stats.parsed_ok;
    } else {
      ++r.stats.dropped_failed;
    }
  }
  return r;
}

}  // namespace

DistillResult merge_compare(ChatClient& client, const std::vector<ImageGroup>& groups,
                            const Corpus& descs, const CallOptions& options) {
  // Prompts are built up front so a missing description fails the batch
  // before any client call.
  std::vector<std::string> prompts;
  prompts.reserve(groups.size());
  for (const auto& g : groups) prompts.push_back(render_merge_prompt(g, descs));

  auto produced = bounded_map<std::optional<ComparisonItem>>(
      groups.size(), options.max_in_flight, [&](std::size_t i) -> std::optional<ComparisonItem> {
        CallResult res = ask(client, "", {Turn{prompts[i], {}}}, options);
        if (!res.text || is_blank(*res.text)) return std::nullopt;
        ComparisonItem item;
        item.group = groups[i];
        item.kind = ItemKind::kMergedGeneral;
        item.query = std::string(comparison_question(groups[i].size()));
        item.response = *res.text;
        item.provenance = Provenance::kMerge2Compare;
        return item;
      });
  return collect(groups, produced);
}

DistillResult teach_general(ChatClient& client, const std::vector<ImageGroup>& groups,
                            const CallOptions& options) {
  auto produced = bounded_map<std::optional<ComparisonItem>>(
      groups.size(), options.max_in_flight, [&](std::size_t i) -> std::optional<ComparisonItem> {
        CallResult res = ask(client, "", {render_teach_general_prompt(groups[i])}, options);
        if (!res.text || is_blank(*res.text)) return std::nullopt;
        ComparisonItem item;
        item.group = groups[i];
        item.kind = ItemKind::kTeachGeneral;
        item.query = std::string(comparison_question(groups[i].size()));
        item.response = *res.text;
        item.provenance = Provenance::kTeach2Compare;
        return item;
      });
  return collect(groups, produced);
}

// ---------------------------------------------------------------------------

std::vector<std::string> default_aspects() {
  return {"clarity", "lighting", "color", "noise", "sharpness", "composition"};
}

Turn render_qa_prompt(const ImageGroup& group, const std::vector<std::string>& aspects) {
  if (aspects.empty()) throw Error(ErrorCode::kInvalidArgument, "aspect list is empty");
  check_group_size(group.size());
  std::ostringstream s;
  const auto slots = slot_tokens(group.size());
  for (std::size_t i = 0; i < slots.size(); ++i)
    s << "The " << ordinal_word(i) << " image: " << slots[i] << ' ';
  s << "Compare the quality of these images with respect to the following aspects: ";
  for (std::size_t i = 0; i < aspects.size(); ++i) s << (i ? ", " : "") << aspects[i];
  s << ".\nFor each aspect, write one question that compares the images, its correct answer, "
       "and one to three wrong answers. Refer to images by their position (the first image, "
       "the second image, ...). Reply with one block per question in exactly this format:\n"
       "ASPECT: <aspect>\n"
       "Q: <question>\n"
       "CORRECT: <correct answer>\n"
       "WRONG: <wrong answer>; <wrong answer>; <wrong answer>\n";
  return Turn{s.str(), group.members()};
}

namespace {

// Word stems that signal a default aspect in a question.
bool mentions_aspect(const std::string& question, const std::string& aspect) {
  static const std::map<std::string, std::vector<std::string>> kStems = {
      {"clarity", {"clarity", "clear", "blur"}},
      {"lighting", {"light", "bright", "dark", "expos"}},
      {"color", {"color", "colour", "saturat", "vivid"}},
      {"noise", {"noise", "noisy", "grain"}},
      {"sharpness", {"sharp", "focus", "detail"}},
      {"composition", {"compos", "framing", "framed"}},
  };
  if (question.find(aspect) != std::string::npos) return true;
  auto it = kStems.find(aspect);
  if (it == kStems.end()) return false;
  for (const auto& stem : it->second)
    if (question.find(stem) != std::string::npos) return true;
  return false;
}

}  // namespace

QAParse parse_qa_records(std::string_view response, const ImageGroup& group,
                         const std::vector<std::string>& aspects) {
  struct Partial {
    std::string aspect, question, correct, wrong;
    bool has_correct = false, has_wrong = false, broken = false;
  };
  QAParse out;
  std::optional<Partial> cur;
  std::string pending_aspect;

  auto finish = [&] {
    if (!cur) return;
    ++out.records;
    Partial p = std::move(*cur);
    cur.reset();
    if (p.broken || !p.has_correct || !p.has_wrong || p.question.empty() || p.correct.empty()) {
      ++out.malformed;
      return;
    }
    std::vector<std::string> wrongs;
    std::stringstream ws(p.wrong);
    std::string w;
    while (std::getline(ws, w, ';')) {
      w = trim(w);
      if (!w.empty()) wrongs.push_back(w);
    }
    bool ok = !wrongs.empty() && wrongs.size() <= 3;
    const std::string correct_key = lower(p.correct);
    for (std::size_t i = 0; ok && i < wrongs.size(); ++i) {
      if (lower(wrongs[i]) == correct_key) ok = false;
      for (std::size_t j = 0; ok && j < i; ++j)
        if (lower(wrongs[i]) == lower(wrongs[j])) ok = false;
    }
    if (!ok) {
      ++out.malformed;
      return;
    }
    std::string aspect = p.aspect;
    if (aspect.empty()) {
      const std::string q = lower(p.question);
      for (const auto& a : aspects)
        if (mentions_aspect(q, lower(a))) {
          aspect = a;
          break;
        }
      if (aspect.empty()) aspect = "other";
    }
    out.items.push_back(QAItem{group, p.question, p.correct, std::move(wrongs), aspect});
  };

  std::istringstream in{std::string(response)};
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string line = trim(raw);
    std::string value;
    if (take_field(line, "ASPECT", &value)) {
      finish();
      pending_aspect = value;
    } else if (take_field(line, "Q", &value)) {
      finish();
      cur = Partial{};
      cur->aspect = std::exchange(pending_aspect, {});
      cur->question = value;
    } else if (take_field(line, "CORRECT", &value)) {
      // Fields outside a Q: block are ignored; a repeated field breaks it.
      if (!cur) continue;
      cur->broken = cur->broken || cur->has_correct;
      cur->correct = value;
      cur->has_correct = true;
    } else if (take_field(line, "WRONG", &value)) {
      if (!cur) continue;
      cur->broken = cur->broken || cur->has_wrong;
      cur->wrong = value;
      cur->has_wrong = true;
    }
  }
  finish();
  return out;
}

QABatch generate_qa(ChatClient& client, const std::vector<ImageGroup>& groups,
                    const std::vector<std::string>& aspects, const CallOptions& options) {
  if (aspects.empty()) throw Error(ErrorCode::kInvalidArgument, "aspect list is empty");
  auto parsed = bounded_map<std::optional<QAParse>>(
      groups.size(), options.max_in_flight, [&](std::size_t i) -> std::optional<QAParse> {
        CallResult res = ask(client, "", {render_qa_prompt(groups[i], aspects)}, options);
        if (!res.text) return std::nullopt;
        return parse_qa_records(*res.text, groups[i], aspects);
      });
  QABatch batch;
  for (auto& p : parsed) {
    if (!p || p->records == 0) {
      ++batch.stats.requested;
      ++batch.stats.dropped_failed;
      continue;
    }
    batch.stats.requested += p->records;
    batch.stats.parsed_ok += p->items.size();
    batch.stats.dropped_failed += p->malformed;
    for (auto& item : p->items) batch.items.push_back(std::move(item));
  }
  return batch;
}

McqPair qa_to_mcq(const QAItem& item, std::uint64_t seed) {
  if (item.question.empty() || item.correct.empty())
    throw Error(ErrorCode::kInvalidArgument, "QA item with empty question or answer");
  if (item.distractors.empty() || item.distractors.size() > 3)
    throw Error(ErrorCode::kInvalidArgument, "QA item needs 1-3 distractors");
  for (const auto& d : item.distractors)
    if (d.empty() || d == item.correct)
      throw Error(ErrorCode::kInvalidArgument, "invalid distractor for '" + item.question + "'");

  std::vector<std::size_t> order(item.distractors.size() + 1);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, fnv1a64(item.group.id() + '\x1f' + item.question)));
  rng.shuffle(order);

  std::vector<std::string> options;
  int answer = -1;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k] == 0) {
      answer = static_cast<int>(k);
      options.push_back(item.correct);
    } else {
      options.push_back(item.distractors[order[k] - 1]);
    }
  }

  McqPair out;
  out.mcq.group = item.group;
  out.mcq.kind = ItemKind::kTeachMcq;
  out.mcq.query = item.question;
  out.mcq.response = item.correct;
  out.mcq.options = std::move(options);
  out.mcq.answer_index = answer;
  out.mcq.provenance = Provenance::kTeach2Compare;

  out.direct.group = item.group;
  out.direct.kind = ItemKind::kTeachQaDirect;
  out.direct.query = item.question;
  out.direct.response = item.correct;
  out.direct.provenance = Provenance::kTeach2Compare;
  return out;
}

}  // namespace vqc
