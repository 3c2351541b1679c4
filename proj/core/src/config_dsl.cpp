// Copyright 2026 The polystack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "polystack/config_dsl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

#include "polystack/error.hpp"

namespace polystack {

namespace {

constexpr std::size_t kMaxModules = 1'000'000;

enum class Tok { Word, Colon, Semicolon, Arrow, LParen, RParen, Times, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  int line = 1;
  int column = 1;
};

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments();
      Token t;
      t.line = line_;
      t.column = column_;
      if (pos_ >= text_.size()) {
        t.kind = Tok::End;
        out.push_back(t);
        return out;
      }
      const char c = text_[pos_];
      if (text_.substr(pos_).starts_with("->")) {
        t.kind = Tok::Arrow;
        advance(2);
      } else if (text_.substr(pos_).starts_with("\xE2\x86\x92")) {  // →
        t.kind = Tok::Arrow;
        advance(3);
      } else if (text_.substr(pos_).starts_with("\xC3\x97")) {  // ×
        t.kind = Tok::Times;
        advance(2);
      } else if (c == ':') {
        t.kind = Tok::Colon;
        advance(1);
      } else if (c == ';') {
        t.kind = Tok::Semicolon;
        advance(1);
      } else if (c == '(') {
        t.kind = Tok::LParen;
        advance(1);
      } else if (c == ')') {
        t.kind = Tok::RParen;
        advance(1);
      } else if (is_word_char(c)) {
        t.kind = Tok::Word;
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
          const char d = text_[pos_];
          if (is_word_char(d)) {
            advance(1);
          } else if (d == '-' && !text_.substr(pos_).starts_with("->")) {
            advance(1);
          } else {
            break;
          }
        }
        t.text = std::string(text_.substr(start, pos_ - start));
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", line_, column_);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < text_.size(); ++i) {
      const unsigned char c = static_cast<unsigned char>(text_[pos_++]);
      if (c == '\n') {
        ++line_;
        column_ = 1;
      } else if ((c & 0xC0) != 0x80) {
        ++column_;
      }
    }
  }

  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance(1);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

bool parse_count(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

class NetworkParser {
 public:
  explicit NetworkParser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  NetworkConfig parse() {
    NetworkConfig config;
    if (peek().kind == Tok::End) fail(peek(), "expected a stage ('NAME: modules')");
    if (!(peek().kind == Tok::Word && peek(1).kind == Tok::Colon)) {
      StageConfig stage;
      stage.name = "A";
      parse_chain(stage.modules);
      if (peek().kind != Tok::End) fail(peek(), "expected '->' or end of input");
      config.stages.push_back(std::move(stage));
      return config;
    }
    for (;;) {
      config.stages.push_back(parse_stage());
      if (peek().kind == Tok::Semicolon) {
        next();
        if (peek().kind == Tok::End) break;
        continue;
      }
      if (peek().kind == Tok::End) break;
      if (peek().kind == Tok::Word && peek(1).kind == Tok::Colon) continue;
      fail(peek(), "expected ';' or end of input");
    }
    return config;
  }

 private:
  [[noreturn]] static void fail(const Token& t, const std::string& what) {
    throw ParseError(what, t.line, t.column);
  }

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() { return toks_[std::min(pos_++, toks_.size() - 1)]; }

  StageConfig parse_stage() {
    const Token& name = next();
    if (name.kind != Tok::Word || !(std::isalpha(static_cast<unsigned char>(name.text[0])) ||
                                    name.text[0] == '_')) {
      fail(name, "expected a stage name");
    }
    for (char c : name.text) {
      if (!is_word_char(c)) fail(name, "invalid stage name '" + name.text + "'");
    }
    if (next().kind != Tok::Colon) fail(toks_[pos_ - 1], "expected ':' after stage name");
    StageConfig stage;
    stage.name = name.text;
    parse_chain(stage.modules);
    return stage;
  }

  void parse_chain(std::vector<ModuleKind>& out) {
    parse_group(out);
    while (peek().kind == Tok::Arrow) {
      next();
      parse_group(out);
    }
  }

  void parse_group(std::vector<ModuleKind>& out) {
    const Token& t = next();
    if (t.kind == Tok::LParen) {
      std::vector<ModuleKind> body;
      parse_chain(body);
      if (next().kind != Tok::RParen) fail(toks_[pos_ - 1], "expected ')'");
      const std::int64_t count = parse_repeat();
      if (body.size() * static_cast<std::size_t>(count) + out.size() > kMaxModules) {
        fail(t, "repetition expands beyond " + std::to_string(kMaxModules) + " modules");
      }
      for (std::int64_t i = 0; i < count; ++i) out.insert(out.end(), body.begin(), body.end());
      return;
    }
    if (t.kind != Tok::Word) fail(t, "expected a module or '('");
    try {
      out.push_back(ModuleKind::parse(t.text));
    } catch (const ValidationError& e) {
      fail(t, e.what());
    }
  }

  std::int64_t parse_repeat() {
    const Token& t = next();
    std::string digits;
    if (t.kind == Tok::Times) {
      const Token& n = next();
      if (n.kind != Tok::Word) fail(n, "expected a repetition count");
      digits = n.text;
    } else if (t.kind == Tok::Word && (t.text == "x" || t.text == "X")) {
      const Token& n = next();
      if (n.kind != Tok::Word) fail(n, "expected a repetition count");
      digits = n.text;
    } else if (t.kind == Tok::Word && (t.text[0] == 'x' || t.text[0] == 'X')) {
      digits = t.text.substr(1);
    } else {
      fail(t, "expected 'x' and a repetition count after ')'");
    }
    std::int64_t count = 0;
    const Token& at = toks_[pos_ - 1];
    if (!parse_count(digits, count)) fail(at, "invalid repetition count '" + digits + "'");
    if (count == 0) fail(at, "repetition count must be at least 1");
    if (count < 0 || static_cast<std::size_t>(count) > kMaxModules) {
      fail(at, "repetition count out of range");
    }
    return count;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::string strip_comments(std::string_view text) {
  std::string out;
  bool comment = false;
  for (char c : text) {
    if (c == '#') comment = true;
    if (c == '\n') comment = false;
    if (!comment) out += c;
  }
  return out;
}

// "IR a-b-c" -> stages A, B, C of plain units; nullopt if not shorthand.
bool try_shorthand(std::string_view text, NetworkConfig& config) {
  std::string s = strip_comments(text);
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() < 4 || !(s[0] == 'I' || s[0] == 'i') || !(s[1] == 'R' || s[1] == 'r') ||
      !std::isspace(static_cast<unsigned char>(s[2]))) {
    return false;
  }
  std::string_view rest(s);
  rest.remove_prefix(2);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) {
    rest.remove_prefix(1);
  }
  std::vector<std::int64_t> counts;
  while (!rest.empty()) {
    const std::size_t dash = rest.find('-');
    std::int64_t n = 0;
    if (!parse_count(rest.substr(0, dash), n)) return false;
    counts.push_back(n);
    if (dash == std::string_view::npos) break;
    rest.remove_prefix(dash + 1);
    if (rest.empty()) return false;
  }
  if (counts.empty()) return false;
  if (counts.size() > 26) throw ValidationError("IR shorthand supports at most 26 stages");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 1) throw ValidationError("IR shorthand needs at least one unit per stage");
    if (static_cast<std::size_t>(counts[i]) > kMaxModules) {
      throw ValidationError("IR shorthand stage too large");
    }
    StageConfig stage;
    stage.name = std::string(1, static_cast<char>('A' + i));
    stage.modules.assign(static_cast<std::size_t>(counts[i]), ModuleKind::ir());
    config.stages.push_back(std::move(stage));
  }
  return true;
}

std::string render_chain(const std::vector<ModuleKind>& modules) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  const std::size_t n = modules.size();
  while (i < n) {
    std::size_t best_period = 1;
    std::size_t best_reps = 1;
    for (std::size_t p = 1; i + 2 * p <= n; ++p) {
      std::size_t reps = 1;
      while (i + (reps + 1) * p <= n &&
             std::equal(modules.begin() + static_cast<std::ptrdiff_t>(i),
                        modules.begin() + static_cast<std::ptrdiff_t>(i + p),
                        modules.begin() + static_cast<std::ptrdiff_t>(i + reps * p))) {
        ++reps;
      }
      if (reps >= 2 && p * reps > best_period * best_reps) {
        best_period = p;
        best_reps = reps;
      }
    }
    if (best_reps >= 2) {
      std::string body;
      for (std::size_t j = 0; j < best_period; ++j) {
        if (j) body += " -> ";
        body += modules[i + j].token();
      }
      parts.push_back("(" + body + ") x " + std::to_string(best_reps));
      i += best_period * best_reps;
    } else {
      parts.push_back(modules[i].token());
      ++i;
    }
  }
  std::string out;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    if (j) out += " -> ";
    out += parts[j];
  }
  return out;
}

const std::map<std::string, std::string, std::less<>>& preset_table() {
  static const std::map<std::string, std::string, std::less<>> kPresets = {
      {"ir-3-6-3", "IR 3-6-3"},
      {"ir-6-12-6", "IR 6-12-6"},
      {"ir-5-10-5", "IR 5-10-5"},
      {"ir-20-56-20", "IR 20-56-20"},
      {"mixed-b-6-12-6", "A: (ir) x 6; B: (3-way -> mpoly-3 -> poly-3) x 4; C: (ir) x 6"},
      {"very-deep-polynet",
       "A: (2-way) x 10; B: (poly-3 -> 2-way) x 10; C: (poly-3 -> 2-way) x 5"},
  };
  return kPresets;
}

}  // namespace

std::size_t NetworkConfig::module_count() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.modules.size();
  return n;
}

void apply_stage_defaults(NetworkConfig& config) {
  std::int64_t width = kBaseStageWidth;
  std::int64_t side = config.input_size;
  for (auto& stage : config.stages) {
    side = std::max<std::int64_t>(1, (side + 1) / 2);
    stage.width = width;
    stage.resolution = std::to_string(side) + "x" + std::to_string(side);
    width *= 2;
  }
}

void validate(const NetworkConfig& config) {
  if (config.stages.empty()) throw ValidationError("network has no stages");
  if (config.input_size < 1) throw ValidationError("input size must be positive");
  if (config.classes < 2) throw ValidationError("need at least two classes");
  std::set<std::string> names;
  for (const auto& s : config.stages) {
    if (s.modules.empty()) throw ValidationError("stage '" + s.name + "' has no modules");
    if (s.width <= 0) throw ValidationError("stage '" + s.name + "' has non-positive width");
    if (!names.insert(s.name).second) {
      throw ValidationError("duplicate stage name '" + s.name + "'");
    }
    for (const auto& m : s.modules) {
      if (m.order < 1) throw ValidationError("module order must be >= 1");
    }
  }
}

NetworkConfig parse_network(std::string_view text) {
  NetworkConfig config;
  if (!try_shorthand(text, config)) {
    config = NetworkParser(Lexer(text).run()).parse();
  }
  apply_stage_defaults(config);
  validate(config);
  return config;
}

std::string render_network(const NetworkConfig& config) {
  std::string out;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    if (i) out += "; ";
    out += config.stages[i].name;
    out += ": ";
    out += render_chain(config.stages[i].modules);
  }
  return out;
}

std::string preset_text(std::string_view name) {
  const auto& table = preset_table();
  auto it = table.find(name);
  if (it == table.end()) throw ValidationError("unknown preset '" + std::string(name) + "'");
  return it->second;
}

NetworkConfig preset(std::string_view name) { return parse_network(preset_text(name)); }

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : preset_table()) names.push_back(k);
  return names;
}

NetworkConfig resolve_network(std::string_view text_or_preset) {
  if (preset_table().contains(text_or_preset)) return preset(text_or_preset);
  return parse_network(text_or_preset);
}

}  // namespace polystack
