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

#include <cctype>
#include <charconv>
#include <string>

#include "polystack/error.hpp"
#include "polystack/operator_algebra.hpp"

namespace polystack {

namespace {

std::string format_beta(double beta) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), beta);
  return std::string(buf, ptr);
}

void print_into(const OperatorExpr& e, bool top, std::string& out);

void print_factor(const OperatorExpr& e, std::string& out) {
  // A scale factor right after a block letter would read as part of its name.
  if (e.kind() == OperatorExpr::Kind::Sum || e.kind() == OperatorExpr::Kind::Scaled) {
    out += '(';
    print_into(e, false, out);
    out += ')';
  } else {
    print_into(e, false, out);
  }
}

void print_into(const OperatorExpr& e, bool top, std::string& out) {
  using Kind = OperatorExpr::Kind;
  switch (e.kind()) {
    case Kind::Identity: out += 'I'; break;
    case Kind::Block: {
      const BlockId& b = e.block_id();
      out += b.name;
      if (b.share_key != b.name) {
        out += "_{";
        out += b.share_key;
        out += '}';
      }
      break;
    }
    case Kind::Sum: {
      bool first = true;
      for (const auto& t : e.children()) {
        if (!first) out += top ? " + " : "+";
        first = false;
        print_into(t, false, out);
      }
      break;
    }
    case Kind::Compose:
      for (const auto& f : e.children()) print_factor(f, out);
      break;
    case Kind::Scaled:
      out += format_beta(e.beta());
      out += "*(";
      print_into(e.inner(), false, out);
      out += ')';
      break;
  }
}

// sum     := product ('+' product)*
// product := factor+
// factor  := 'I' | BLOCK | '(' sum ')' | NUMBER '*' '(' sum ')'
// BLOCK   := [A-HJ-Z][0-9]* ('_{' key '}')?
class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : text_(text) {}

  OperatorExpr parse() {
    OperatorExpr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what + " in expression '" + std::string(text_) + "'", 1,
                     static_cast<int>(pos_) + 1);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool at_factor_start() {
    skip_ws();
    if (pos_ >= text_.size()) return false;
    const char c = text_[pos_];
    return c == '(' || std::isupper(static_cast<unsigned char>(c)) ||
           std::isdigit(static_cast<unsigned char>(c)) || c == '.';
  }

  OperatorExpr parse_sum() {
    std::vector<OperatorExpr> terms{parse_product()};
    skip_ws();
    while (pos_ < text_.size() && text_[pos_] == '+') {
      ++pos_;
      terms.push_back(parse_product());
      skip_ws();
    }
    return OperatorExpr::sum(std::move(terms));
  }

  OperatorExpr parse_product() {
    if (!at_factor_start()) fail("expected a factor");
    std::vector<OperatorExpr> factors;
    while (at_factor_start()) factors.push_back(parse_factor());
    return factors.size() == 1 ? factors.front() : OperatorExpr::compose(std::move(factors));
  }

  OperatorExpr parse_parenthesized() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '(') fail("expected '('");
    ++pos_;
    OperatorExpr inner = parse_sum();
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
    ++pos_;
    return inner;
  }

  OperatorExpr parse_factor() {
    skip_ws();
    const char c = text_[pos_];
    if (c == '(') return parse_parenthesized();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double beta = 0.0;
      auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), beta);
      if (ec != std::errc()) fail("bad number");
      pos_ = static_cast<size_t>(ptr - text_.data());
      skip_ws();
      if (pos_ >= text_.size() || text_[pos_] != '*') fail("expected '*' after scale factor");
      ++pos_;
      return OperatorExpr::scaled(beta, parse_parenthesized());
    }
    if (c == 'I') {
      ++pos_;
      return OperatorExpr::identity();
    }
    std::string name(1, c);
    ++pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      name += text_[pos_++];
    }
    std::string key = name;
    if (text_.substr(pos_).starts_with("_{")) {
      pos_ += 2;
      const size_t close = text_.find('}', pos_);
      if (close == std::string_view::npos) fail("unterminated share key");
      key = std::string(text_.substr(pos_, close - pos_));
      if (key.empty()) fail("empty share key");
      pos_ = close + 1;
    }
    return OperatorExpr::block(std::move(name), std::move(key));
  }

  std::string_view text_;
  size_t pos_ = 0;
};

}  // namespace

std::string print_expr(const OperatorExpr& expr) {
  std::string out;
  print_into(expr, true, out);
  return out;
}

OperatorExpr parse_expr(std::string_view text) { return ExprParser(text).parse(); }

}  // namespace polystack
