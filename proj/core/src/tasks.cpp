// SPDX-License-Identifier: Apache-2.0
#include "softcot/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "softcot/rng.hpp"

namespace softcot {

namespace {

// 37 characters + 3 specials = 40 tokens.
constexpr const char* kCharset = "0123456789UA: +%>,?={}yesno-*().#;[]!";

}  // namespace

Vocab::Vocab() : charset_(kCharset) {
  char_to_id_.fill(-1);
  for (size_t i = 0; i < charset_.size(); ++i) {
    const auto c = static_cast<unsigned char>(charset_[i]);
    if (char_to_id_[c] != -1)
      throw std::logic_error("vocab: duplicate character in charset");
    char_to_id_[c] = kNumSpecials + static_cast<int>(i);
  }
}

bool Vocab::encodable(char c) const {
  return char_to_id_[static_cast<unsigned char>(c)] != -1;
}

int Vocab::char_id(char c) const {
  const int id = char_to_id_[static_cast<unsigned char>(c)];
  if (id == -1)
    throw std::invalid_argument(std::string("vocab: unencodable character '") +
                                c + "'");
  return id;
}

bool Vocab::is_char_token(int id) const {
  return id >= kNumSpecials && id < size();
}

char Vocab::token_char(int id) const {
  if (!is_char_token(id))
    throw std::invalid_argument("vocab: id " + std::to_string(id) +
                                " is not a character token");
  return charset_[static_cast<size_t>(id - kNumSpecials)];
}

std::vector<int> Vocab::encode(const std::string& text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(char_id(c));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(token_char(id));
  return out;
}

std::string Vocab::render(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kBos)
      out += "<bos>";
    else if (id == kPad)
      out += "<pad>";
    else if (id == kEos)
      out += "<eos>";
    else
      out.push_back(token_char(id));
  }
  return out;
}

std::vector<int> stop_marker_ids(const Vocab& vocab) {
  return vocab.encode(kStopMarkerText);
}

int box_open_id(const Vocab& vocab) { return vocab.char_id(kBoxOpenText[0]); }

std::vector<int> format_prompt(const Vocab& vocab,
                               const std::string& question) {
  if (question.empty())
    throw std::invalid_argument("format_prompt: empty question");
  std::vector<int> ids{Vocab::kBos};
  const std::vector<int> body = vocab.encode("U:" + question + " A:");
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

// ---- task corpora ------------------------------------------------------------

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::addition: return "addition";
    case TaskKind::modular_chain: return "modular_chain";
    case TaskKind::graph_reachability: return "graph_reachability";
  }
  throw std::logic_error("task_kind_name: bad kind");
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "addition") return TaskKind::addition;
  if (name == "modular_chain") return TaskKind::modular_chain;
  if (name == "graph_reachability") return TaskKind::graph_reachability;
  throw std::invalid_argument("unknown task kind '" + name + "'");
}

AnswerType answer_type_of(TaskKind kind) {
  return kind == TaskKind::graph_reachability ? AnswerType::yes_no
                                              : AnswerType::integer;
}

void TaskSpec::validate() const {
  if (train_size < 1 || val_size < 1 || test_size < 1)
    throw std::invalid_argument("task: split sizes must be >= 1");
  switch (kind) {
    case TaskKind::addition:
      if (digits < 1 || digits > 6 || summands < 2)
        throw std::invalid_argument("task: addition needs digits in [1,6], summands >= 2");
      break;
    case TaskKind::modular_chain:
      if (chain_length < 2 || chain_length > 16)
        throw std::invalid_argument("task: chain_length must be in [2,16]");
      break;
    case TaskKind::graph_reachability:
      if (nodes < 2 || nodes > 10)
        throw std::invalid_argument("task: nodes must be in [2,10] (single-digit ids)");
      if (edge_density <= 0.0 || edge_density >= 1.0)
        throw std::invalid_argument("task: edge_density must be in (0,1)");
      break;
  }
}

namespace {

double distinct_question_space(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::addition: {
      double space = 1.0;
      for (int i = 0; i < spec.summands; ++i)
        space *= std::pow(10.0, spec.digits);
      return space;
    }
    case TaskKind::modular_chain:
      return std::pow(10.0, spec.chain_length);
    case TaskKind::graph_reachability: {
      const double pairs = spec.nodes * (spec.nodes - 1);
      return std::pow(2.0, std::min(40.0, pairs)) * pairs;
    }
  }
  return 0.0;
}

struct QuestionDraw {
  std::string question;
  std::string label;
};

// Operands are drawn from [0, 10^digits); the mixed widths keep easy
// low-digit instances in every split.
QuestionDraw draw_addition(const TaskSpec& spec, Rng& rng) {
  const auto bound = static_cast<uint64_t>(std::pow(10.0, spec.digits));
  std::string q;
  long long sum = 0;
  for (int i = 0; i < spec.summands; ++i) {
    const auto v = static_cast<long long>(rng.uniform_int(bound));
    sum += v;
    if (i) q += "+";
    q += std::to_string(v);
  }
  return {q, std::to_string(sum)};
}

QuestionDraw draw_modular_chain(const TaskSpec& spec, Rng& rng) {
  std::string q;
  long long sum = 0;
  for (int i = 0; i < spec.chain_length; ++i) {
    const auto v = static_cast<long long>(rng.uniform_int(10));
    sum += v;
    if (i) q += "+";
    q += std::to_string(v);
  }
  q += "%10";
  return {q, std::to_string(sum % 10)};
}

bool reachable(const std::vector<std::pair<int, int>>& edges, int n, int src,
               int dst) {
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) adj[a].push_back(b);
  std::vector<char> seen(n, 0);
  std::queue<int> frontier;
  frontier.push(src);
  seen[src] = 1;
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop();
    if (cur == dst) return true;
    for (int nxt : adj[cur])
      if (!seen[nxt]) {
        seen[nxt] = 1;
        frontier.push(nxt);
      }
  }
  return false;
}

QuestionDraw draw_graph(const TaskSpec& spec, Rng& rng, bool want_yes) {
  const int n = spec.nodes;
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::vector<std::pair<int, int>> edges;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b && rng.uniform01() < spec.edge_density) edges.emplace_back(a, b);
    if (edges.empty()) continue;
    const int src = static_cast<int>(rng.uniform_int(n));
    int dst = static_cast<int>(rng.uniform_int(n - 1));
    if (dst >= src) ++dst;
    const bool yes = reachable(edges, n, src, dst);
    if (yes != want_yes) continue;
    std::string q;
    for (size_t i = 0; i < edges.size(); ++i) {
      if (i) q += ",";
      q += std::to_string(edges[i].first) + ">" + std::to_string(edges[i].second);
    }
    q += "?" + std::to_string(src) + ">" + std::to_string(dst);
    return {q, yes ? "yes" : "no"};
  }
  throw std::runtime_error("task: graph sampling failed to hit requested label");
}

}  // namespace

Dataset generate_dataset(const TaskSpec& spec, const Vocab& vocab) {
  spec.validate();
  const size_t total = static_cast<size_t>(spec.train_size) + spec.val_size +
                       spec.test_size;
  if (static_cast<double>(total) > distinct_question_space(spec))
    throw std::invalid_argument(
        "task: splits need " + std::to_string(total) +
        " distinct questions, more than this spec can supply");

  Rng rng(spec.seed);
  std::set<std::string> seen;
  std::vector<TaskExample> pool;
  pool.reserve(total);
  const size_t max_attempts = 1000 * total + 10000;
  size_t attempts = 0;
  while (pool.size() < total) {
    if (++attempts > max_attempts)
      throw std::runtime_error(
          "task: could not sample enough distinct questions; spec infeasible");
    QuestionDraw draw;
    switch (spec.kind) {
      case TaskKind::addition: draw = draw_addition(spec, rng); break;
      case TaskKind::modular_chain: draw = draw_modular_chain(spec, rng); break;
      case TaskKind::graph_reachability:
        draw = draw_graph(spec, rng, pool.size() % 2 == 0);
        break;
    }
    if (!seen.insert(draw.question).second) continue;
    TaskExample ex;
    ex.question = std::move(draw.question);
    ex.label = std::move(draw.label);
    ex.prompt_ids = format_prompt(vocab, ex.question);
    pool.push_back(std::move(ex));
  }

  Dataset out;
  auto it = pool.begin();
  out.train.assign(it, it + spec.train_size);
  it += spec.train_size;
  out.val.assign(it, it + spec.val_size);
  it += spec.val_size;
  out.test.assign(it, it + spec.test_size);
  return out;
}

// ---- verification --------------------------------------------------------------

namespace {

std::string trim_spaces(const std::string& s) {
  size_t b = s.find_first_not_of(' ');
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(' ');
  return s.substr(b, e - b + 1);
}

bool parse_integer(const std::string& s, long long* out) {
  if (s.empty() || s.size() > 18) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  *out = std::stoll(s);  // leading zeros accepted
  return true;
}

}  // namespace

VerifyResult verify(const Vocab& vocab, const std::vector<int>& answer_ids,
                    const std::string& label, AnswerType type) {
  std::string text;
  for (int id : answer_ids) {
    if (id == Vocab::kEos) break;
    if (!vocab.is_char_token(id)) return VerifyResult::none;
    text.push_back(vocab.token_char(id));
  }
  if (auto brace = text.find('}'); brace != std::string::npos)
    text = text.substr(0, brace);
  text = trim_spaces(text);
  if (type == AnswerType::integer) {
    long long value = 0, expected = 0;
    if (!parse_integer(text, &value)) return VerifyResult::none;
    if (!parse_integer(label, &expected))
      throw std::invalid_argument("verify: label '" + label + "' is not an integer");
    return value == expected ? VerifyResult::exact : VerifyResult::format_only;
  }
  if (text != "yes" && text != "no") return VerifyResult::none;
  return text == label ? VerifyResult::exact : VerifyResult::format_only;
}

// ---- multiple-choice NLL set -----------------------------------------------------

std::vector<McItem> make_mc_items(const std::vector<TaskExample>& examples,
                                  AnswerType type, uint64_t seed) {
  Rng rng(seed);
  std::vector<McItem> items;
  items.reserve(examples.size());
  for (const auto& ex : examples) {
    McItem item;
    item.question = ex.question;
    item.correct = ex.label;
    if (type == AnswerType::yes_no) {
      item.distractors.push_back(ex.label == "yes" ? "no" : "yes");
    } else {
      const long long value = std::stoll(ex.label);
      std::set<long long> used{value};
      const long long offsets[] = {1, -1, 10};
      for (long long off : offsets) {
        const long long d = value + off;
        if (d >= 0 && used.insert(d).second)
          item.distractors.push_back(std::to_string(d));
      }
      while (item.distractors.size() < 3) {
        const long long d = static_cast<long long>(rng.uniform_int(
            2 * static_cast<uint64_t>(value) + 20));
        if (used.insert(d).second) item.distractors.push_back(std::to_string(d));
      }
    }
    items.push_back(std::move(item));
  }
  return items;
}

// ---- files --------------------------------------------------------------------

void write_dataset_jsonl(const std::string& path,
                         const std::vector<TaskExample>& examples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot open " + path);
  for (const auto& ex : examples) {
    nlohmann::json record{{"question", ex.question}, {"label", ex.label}};
    out << record.dump() << "\n";
  }
}

std::vector<TaskExample> load_dataset_jsonl(const std::string& path,
                                            const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path);
  std::vector<TaskExample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json record = nlohmann::json::parse(line);
    TaskExample ex;
    ex.question = record.at("question").get<std::string>();
    ex.label = record.at("label").get<std::string>();
    ex.prompt_ids = format_prompt(vocab, ex.question);
    out.push_back(std::move(ex));
  }
  return out;
}

void write_manifest(const std::string& path, const TaskSpec& spec) {
  nlohmann::json manifest{
      {"kind", task_kind_name(spec.kind)},
      {"digits", spec.digits},
      {"summands", spec.summands},
      {"chain_length", spec.chain_length},
      {"nodes", spec.nodes},
      {"edge_density", spec.edge_density},
      {"train_size", spec.train_size},
      {"val_size", spec.val_size},
      {"test_size", spec.test_size},
      {"seed", spec.seed},
  };
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open " + path);
  out << manifest.dump(2) << "\n";
}

void write_mc_jsonl(const std::string& path, const std::vector<McItem>& items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("mc: cannot open " + path);
  for (const auto& item : items) {
    nlohmann::json record{{"question", item.question},
                          {"correct", item.correct},
                          {"distractors", item.distractors}};
    out << record.dump() << "\n";
  }
}

std::vector<McItem> load_mc_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("mc: cannot open " + path);
  std::vector<McItem> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json record = nlohmann::json::parse(line);
    McItem item;
    item.question = record.at("question").get<std::string>();
    item.correct = record.at("correct").get<std::string>();
    item.distractors = record.at("distractors").get<std::vector<std::string>>();
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace softcot
