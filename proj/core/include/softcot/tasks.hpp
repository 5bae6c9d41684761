// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace softcot {

// Character-level toy vocabulary (~40 symbols) shared by all synthetic
// tasks: digits, the prompt-template letters, operators, answer words, and
// the specials {BOS, PAD, EOS}. Encode/decode are injective.
class Vocab {
 public:
  static constexpr int kBos = 0;
  static constexpr int kPad = 1;
  static constexpr int kEos = 2;
  static constexpr int kNumSpecials = 3;

  Vocab();

  int size() const { return kNumSpecials + static_cast<int>(charset_.size()); }
  bool encodable(char c) const;
  int char_id(char c) const;
  bool is_char_token(int id) const;
  char token_char(int id) const;

  std::vector<int> encode(const std::string& text) const;
  // Strict inverse of encode: every id must be a character token.
  std::string decode(const std::vector<int>& ids) const;
  // Lossy display form; specials render as <bos>/<pad>/<eos>.
  std::string render(const std::vector<int>& ids) const;

 private:
  std::string charset_;
  std::array<int, 256> char_to_id_;
};

// Template and answer-intro conventions. The chain of thought is expected to
// end with the stop marker; the box-open character starts the final-value
// span that the verifier reads.
inline constexpr const char* kStopMarkerText = "=>";
inline constexpr const char* kBoxOpenText = "{";

std::vector<int> stop_marker_ids(const Vocab& vocab);
int box_open_id(const Vocab& vocab);

// "User: {q} Assistant: " analogue; BOS-prefixed, ends exactly at the
// assistant turn.
std::vector<int> format_prompt(const Vocab& vocab, const std::string& question);

// ---- task corpora ----------------------------------------------------------

enum class TaskKind { addition, modular_chain, graph_reachability };
enum class AnswerType { integer, yes_no };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);
AnswerType answer_type_of(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::addition;
  int digits = 2;        // addition: max digits per operand
  int summands = 2;      // addition: operand count
  int chain_length = 3;  // modular_chain
  int nodes = 4;         // graph_reachability
  double edge_density = 0.3;
  int train_size = 512;
  int val_size = 128;
  int test_size = 200;
  uint64_t seed = 1;

  void validate() const;
};

struct TaskExample {
  std::string question;
  std::string label;  // canonical answer rendering
  std::vector<int> prompt_ids;
};

struct Dataset {
  std::vector<TaskExample> train;
  std::vector<TaskExample> val;
  std::vector<TaskExample> test;
};

// Deterministic under spec.seed; splits are disjoint by question string and
// labels are correct by construction. Throws if the spec cannot supply
// enough distinct questions.
Dataset generate_dataset(const TaskSpec& spec, const Vocab& vocab);

// ---- verification -----------------------------------------------------------

enum class VerifyResult { exact, format_only, none };

// Reads the final-value span out of the answer tokens: everything before the
// first EOS, truncated at the first '}', spaces trimmed. exact iff the value
// canonically equals the label; format_only iff a syntactically valid value
// was extracted but differs.
VerifyResult verify(const Vocab& vocab, const std::vector<int>& answer_ids,
                    const std::string& label, AnswerType type);

// ---- multiple-choice NLL set -------------------------------------------------

struct McItem {
  std::string question;
  std::string correct;                  // canonical label
  std::vector<std::string> distractors; // perturbed labels, same rendering
};

std::vector<McItem> make_mc_items(const std::vector<TaskExample>& examples,
                                  AnswerType type, uint64_t seed);

// ---- files -------------------------------------------------------------------

void write_dataset_jsonl(const std::string& path,
                         const std::vector<TaskExample>& examples);
std::vector<TaskExample> load_dataset_jsonl(const std::string& path,
                                            const Vocab& vocab);
void write_manifest(const std::string& path, const TaskSpec& spec);
void write_mc_jsonl(const std::string& path, const std::vector<McItem>& items);
std::vector<McItem> load_mc_jsonl(const std::string& path);

}  // namespace softcot
