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

#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace polystack {

// A reference to a residual block. Two references with the same share_key
// bind the same parameters; `name` is only the display letter.
struct BlockId {
  std::string name;
  std::string share_key;

  friend bool operator==(const BlockId&, const BlockId&) = default;
  friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

// The family of a residual module and its order k.
//   IR      I + F
//   Poly    I + F + F^2 + ... + F^k          (one shared block)
//   MPoly   I + F + GF + HGF + ...           (k distinct blocks, prefix chain)
//   KWay    I + F + G + H + ...              (k distinct first-order paths)
struct ModuleKind {
  enum class Family : std::uint8_t { IR, Poly, MPoly, KWay };

  Family family = Family::IR;
  int order = 1;

  static ModuleKind ir() { return {Family::IR, 1}; }
  static ModuleKind poly(int k) { return {Family::Poly, k}; }
  static ModuleKind mpoly(int k) { return {Family::MPoly, k}; }
  static ModuleKind kway(int k) { return {Family::KWay, k}; }

  // Parses "ir", "poly-K", "mpoly-K" or "K-way" (case-insensitive).
  // Throws ValidationError on an unknown token or K < 1.
  static ModuleKind parse(std::string_view token);

  // Canonical token, the inverse of parse().
  std::string token() const;

  // Number of distinct parameter blocks the module owns.
  int distinct_blocks() const;
  // Number of non-identity paths (monomials).
  int path_count() const { return family == Family::IR ? 1 : order; }

  friend bool operator==(const ModuleKind&, const ModuleKind&) = default;
};

// Symbolic operator polynomial over residual blocks.
//
// Composition is written left to right the way operators are written, so
// Compose([G, F]) is "GF": F applies first, then G.
//
// Values are immutable and cheap to copy (children are shared).
class OperatorExpr {
 public:
  enum class Kind : std::uint8_t { Identity, Block, Sum, Compose, Scaled };

  OperatorExpr();  // Identity

  static OperatorExpr identity();
  static OperatorExpr block(BlockId id);
  static OperatorExpr block(std::string name, std::string share_key);
  // Flattens nested sums. A single term collapses to that term.
  static OperatorExpr sum(std::vector<OperatorExpr> terms);
  // Flattens nested compositions and drops identity factors. A single factor
  // collapses to that factor; all-identity collapses to Identity.
  static OperatorExpr compose(std::vector<OperatorExpr> factors);
  static OperatorExpr scaled(double beta, OperatorExpr inner);

  Kind kind() const;
  bool is_identity() const { return kind() == Kind::Identity; }
  // True for Identity, a BlockRef, or a composition of BlockRefs only.
  bool is_monomial() const;

  const BlockId& block_id() const;              // Kind::Block
  std::span<const OperatorExpr> children() const;  // Sum terms / Compose factors
  double beta() const;                          // Kind::Scaled
  const OperatorExpr& inner() const;            // Kind::Scaled

  // Blocks of a monomial in application order (first applied first).
  // Identity yields an empty list. Throws if !is_monomial().
  std::vector<BlockId> monomial_blocks() const;
  // Builds a monomial from blocks given in application order.
  static OperatorExpr from_application_order(const std::vector<BlockId>& blocks);

  friend bool operator==(const OperatorExpr& a, const OperatorExpr& b);

 private:
  struct Rep;
  explicit OperatorExpr(std::shared_ptr<const Rep> rep);
  std::shared_ptr<const Rep> rep_;
};

// Share-key sequence of a monomial in application order. Identity is empty.
using PathKey = std::vector<std::string>;

// Flat polynomial normal form: monomial (keyed by its share-key sequence in
// application order) -> coefficient. Like terms are merged.
struct SymbolicTerm {
  std::vector<BlockId> blocks;  // application order
  double coefficient = 0.0;

  friend bool operator==(const SymbolicTerm&, const SymbolicTerm&) = default;
};
using SymbolicExpansion = std::map<PathKey, SymbolicTerm>;

// Canonical naive form of a module: I + beta*(M1 + ... + Mk). beta == 1 emits
// no Scaled wrapper. Throws ValidationError for k < 1 or beta outside (0, 1].
OperatorExpr expand_module(ModuleKind kind, double beta = 1.0);

// Right-factors the shared first-applied block of a nested-prefix chain,
// e.g. I+F+GF+HGF -> I+(I+(I+H)G)F. The beta wrapper stays on the whole
// residual branch. Monomials with no common prefix (k-way) pass through
// unchanged. Throws ValidationError for non-module expressions.
OperatorExpr cascade(const OperatorExpr& expr);

// Distributes sums, compositions and scalings into a flat polynomial. Two
// expressions are semantically equal iff their expansions are equal.
SymbolicExpansion expand_symbolic(const OperatorExpr& expr);

// Keeps only the monomials whose gate is set. `gates` covers the non-identity
// monomials of a naive-form module in order. All gates clear -> Identity.
OperatorExpr drop_paths(const OperatorExpr& expr, const std::vector<bool>& gates);

// Block evaluations for one forward pass through `expr`. With memoize, a block
// applied to the same value twice is counted once.
std::int64_t block_applications(const OperatorExpr& expr, bool memoize);

// Parts of a module expression, for both naive and cascaded forms.
struct ModuleParts {
  double beta = 1.0;
  OperatorExpr branch;  // residual branch without the beta wrapper
};
// Splits I + [beta*](branch). Throws ValidationError if `expr` is not
// module-shaped.
ModuleParts split_module(const OperatorExpr& expr);
// Non-identity monomials of a naive-form module, in order.
std::vector<OperatorExpr> module_monomials(const OperatorExpr& expr);
// Inverse of module_monomials: I + beta*(sum of monomials).
OperatorExpr build_module(const std::vector<OperatorExpr>& monomials, double beta);

// Distinct share keys referenced anywhere in `expr`, sorted.
std::vector<std::string> share_keys(const OperatorExpr& expr);

// Rewrites every share key k to prefix + k. Display names are unchanged.
OperatorExpr with_share_prefix(const OperatorExpr& expr, const std::string& prefix);

// Canonical text: "I", block letters (with "_{key}" when the share key differs
// from the letter), "+" for sums (" + " at the top level), juxtaposition for
// composition, and "b*(...)" for scaling. parse_expr(print_expr(e)) == e.
std::string print_expr(const OperatorExpr& expr);
OperatorExpr parse_expr(std::string_view text);

// Display letter for the i-th distinct block of a module: F, G, H, J, K, ...
std::string block_letter(int index);

}  // namespace polystack
