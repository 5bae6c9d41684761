// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <set>
#include <stdexcept>
#include <string>

#include "softcot/tasks.hpp"

using namespace softcot;

namespace {

std::vector<int> answer_ids(const Vocab& vocab, const std::string& text,
                            bool with_eos = true) {
  std::vector<int> ids = vocab.encode(text);
  if (with_eos) ids.push_back(Vocab::kEos);
  return ids;
}

}  // namespace

TEST_SUITE_BEGIN("tasks");

TEST_CASE("vocabulary is a 40-token bijection") {
  Vocab vocab;
  CHECK(vocab.size() == 40);

  // decode(encode(s)) == s for an encodable string covering the charset.
  const std::string sample = "U:17+25 A:=>{42}yesno?0>1,%*().#;[]!-";
  CHECK(vocab.decode(vocab.encode(sample)) == sample);

  // encode(decode(ids)) == ids over every character token.
  std::vector<int> all_ids;
  for (int id = Vocab::kNumSpecials; id < vocab.size(); ++id) all_ids.push_back(id);
  CHECK(vocab.encode(vocab.decode(all_ids)) == all_ids);

  // Char ids are unique.
  std::set<int> seen(all_ids.begin(), all_ids.end());
  CHECK(seen.size() == all_ids.size());

  CHECK_THROWS_AS(vocab.encode("@"), std::invalid_argument);
  CHECK_THROWS_AS(vocab.decode({Vocab::kBos}), std::invalid_argument);
  CHECK(vocab.render({Vocab::kBos, vocab.char_id('4'), Vocab::kEos}) ==
        "<bos>4<eos>");
}

TEST_CASE("format_prompt wraps the question in the dialog template") {
  Vocab vocab;
  const auto ids = format_prompt(vocab, "1+1");
  REQUIRE(ids.size() > 1);
  CHECK(ids[0] == Vocab::kBos);
  CHECK(vocab.decode({ids.begin() + 1, ids.end()}) == "U:1+1 A:");
  CHECK_THROWS_AS(format_prompt(vocab, ""), std::invalid_argument);
  CHECK(format_prompt(vocab, "1+2") != format_prompt(vocab, "2+1"));
}

TEST_CASE("generate_dataset: determinism, disjoint splits, self-consistency") {
  Vocab vocab;
  TaskSpec spec;
  spec.kind = TaskKind::addition;
  spec.digits = 2;
  spec.summands = 2;
  spec.train_size = 64;
  spec.val_size = 16;
  spec.test_size = 16;
  spec.seed = 99;

  const Dataset a = generate_dataset(spec, vocab);
  const Dataset b = generate_dataset(spec, vocab);
  REQUIRE(a.train.size() == 64);
  REQUIRE(a.val.size() == 16);
  REQUIRE(a.test.size() == 16);
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].question == b.train[i].question);
    CHECK(a.train[i].label == b.train[i].label);
  }

  std::set<std::string> questions;
  auto sweep = [&](const std::vector<TaskExample>& split) {
    for (const auto& ex : split) {
      CHECK(questions.insert(ex.question).second);  // split disjointness
      // Labels are correct by construction and verify as exact.
      CHECK(verify(vocab, answer_ids(vocab, ex.label), ex.label,
                   answer_type_of(spec.kind)) == VerifyResult::exact);
      // Question arithmetic really matches the label.
      long long sum = 0, value = 0;
      for (char c : ex.question) {
        if (c == '+') {
          sum += value;
          value = 0;
        } else {
          value = value * 10 + (c - '0');
        }
      }
      sum += value;
      CHECK(std::to_string(sum) == ex.label);
    }
  };
  sweep(a.train);
  sweep(a.val);
  sweep(a.test);
}

TEST_CASE("generate_dataset rejects infeasible specs") {
  Vocab vocab;
  TaskSpec spec;
  spec.kind = TaskKind::modular_chain;
  spec.chain_length = 2;  // only 100 distinct questions
  spec.train_size = 90;
  spec.val_size = 90;
  spec.test_size = 90;
  CHECK_THROWS_AS(generate_dataset(spec, vocab), std::invalid_argument);
}

TEST_CASE("modular chain questions carry the %10 suffix") {
  Vocab vocab;
  TaskSpec spec;
  spec.kind = TaskKind::modular_chain;
  spec.chain_length = 4;
  spec.train_size = 32;
  spec.val_size = 8;
  spec.test_size = 8;
  const Dataset data = generate_dataset(spec, vocab);
  for (const auto& ex : data.train) {
    REQUIRE(ex.question.size() >= 3);
    CHECK(ex.question.substr(ex.question.size() - 3) == "%10");
    long long sum = 0;
    for (char c : ex.question.substr(0, ex.question.size() - 3))
      if (c != '+') sum += c - '0';
    CHECK(std::to_string(sum % 10) == ex.label);
  }
}

TEST_CASE("graph reachability questions are balanced and verified by BFS") {
  Vocab vocab;
  TaskSpec spec;
  spec.kind = TaskKind::graph_reachability;
  spec.nodes = 4;
  spec.edge_density = 0.35;
  spec.train_size = 40;
  spec.val_size = 10;
  spec.test_size = 10;
  const Dataset data = generate_dataset(spec, vocab);
  int yes = 0;
  for (const auto& ex : data.train) {
    CHECK(ex.question.find('?') != std::string::npos);
    yes += ex.label == "yes";
    CHECK((ex.label == "yes" || ex.label == "no"));
  }
  CHECK(yes == 20);  // alternating target labels
}

TEST_CASE("verify: tiers") {
  Vocab vocab;
  CHECK(verify(vocab, answer_ids(vocab, "42"), "42", AnswerType::integer) ==
        VerifyResult::exact);
  CHECK(verify(vocab, answer_ids(vocab, "41"), "42", AnswerType::integer) ==
        VerifyResult::format_only);
  CHECK(verify(vocab, answer_ids(vocab, "4."), "42", AnswerType::integer) ==
        VerifyResult::none);
  CHECK(verify(vocab, {}, "42", AnswerType::integer) == VerifyResult::none);

  // Leading zeros accepted; brace closes the span; spaces trimmed.
  CHECK(verify(vocab, answer_ids(vocab, "042"), "42", AnswerType::integer) ==
        VerifyResult::exact);
  CHECK(verify(vocab, answer_ids(vocab, "42}99"), "42", AnswerType::integer) ==
        VerifyResult::exact);
  CHECK(verify(vocab, answer_ids(vocab, " 42 "), "42", AnswerType::integer) ==
        VerifyResult::exact);

  // Tokens after EOS are ignored; specials inside the span are garbage.
  auto ids = answer_ids(vocab, "42");
  ids.push_back(vocab.char_id('9'));
  CHECK(verify(vocab, ids, "42", AnswerType::integer) == VerifyResult::exact);
  CHECK(verify(vocab, {Vocab::kPad, vocab.char_id('4')}, "4",
               AnswerType::integer) == VerifyResult::none);

  CHECK(verify(vocab, answer_ids(vocab, "yes"), "yes", AnswerType::yes_no) ==
        VerifyResult::exact);
  CHECK(verify(vocab, answer_ids(vocab, "no"), "yes", AnswerType::yes_no) ==
        VerifyResult::format_only);
  CHECK(verify(vocab, answer_ids(vocab, "yeso"), "yes", AnswerType::yes_no) ==
        VerifyResult::none);
}

TEST_CASE("dataset and mc files round-trip") {
  Vocab vocab;
  TaskSpec spec;
  spec.train_size = 8;
  spec.val_size = 2;
  spec.test_size = 4;
  spec.seed = 7;
  const Dataset data = generate_dataset(spec, vocab);

  const std::string path = "test_dataset_roundtrip.jsonl";
  write_dataset_jsonl(path, data.test);
  const auto loaded = load_dataset_jsonl(path, vocab);
  REQUIRE(loaded.size() == data.test.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].question == data.test[i].question);
    CHECK(loaded[i].label == data.test[i].label);
    CHECK(loaded[i].prompt_ids == data.test[i].prompt_ids);
  }
  std::remove(path.c_str());

  const auto mc = make_mc_items(data.test, AnswerType::integer, 5);
  REQUIRE(mc.size() == data.test.size());
  for (const auto& item : mc) {
    CHECK(item.distractors.size() == 3);
    for (const auto& d : item.distractors) CHECK(d != item.correct);
  }
  const std::string mc_path = "test_mc_roundtrip.jsonl";
  write_mc_jsonl(mc_path, mc);
  const auto mc_loaded = load_mc_jsonl(mc_path);
  REQUIRE(mc_loaded.size() == mc.size());
  CHECK(mc_loaded[0].correct == mc[0].correct);
  CHECK(mc_loaded[0].distractors == mc[0].distractors);
  std::remove(mc_path.c_str());
}

TEST_SUITE_END();
