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

#include "polystack/operator_algebra.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <utility>

#include "polystack/error.hpp"

namespace polystack {

struct OperatorExpr::Rep {
  Kind kind = Kind::Identity;
  BlockId block;
  std::vector<OperatorExpr> children;
  double beta = 1.0;
};

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool parse_positive_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// ModuleKind

ModuleKind ModuleKind::parse(std::string_view token) {
  const std::string t = lower(token);
  if (t == "ir") return ir();
  int k = 0;
  auto order_or_throw = [&](std::string_view digits) {
    if (!parse_positive_int(digits, k)) {
      throw ValidationError("unknown module token '" + std::string(token) + "'");
    }
    if (k < 1) {
      throw ValidationError("module order must be >= 1 in '" + std::string(token) + "'");
    }
    return k;
  };
  if (t.starts_with("mpoly-")) return mpoly(order_or_throw(std::string_view(t).substr(6)));
  if (t.starts_with("poly-")) return poly(order_or_throw(std::string_view(t).substr(5)));
  if (t.ends_with("-way")) return kway(order_or_throw(std::string_view(t).substr(0, t.size() - 4)));
  throw ValidationError("unknown module token '" + std::string(token) + "'");
}

std::string ModuleKind::token() const {
  switch (family) {
    case Family::IR: return "ir";
    case Family::Poly: return "poly-" + std::to_string(order);
    case Family::MPoly: return "mpoly-" + std::to_string(order);
    case Family::KWay: return std::to_string(order) + "-way";
  }
  return "ir";
}

int ModuleKind::distinct_blocks() const {
  switch (family) {
    case Family::IR:
    case Family::Poly: return 1;
    case Family::MPoly:
    case Family::KWay: return order;
  }
  return 1;
}

std::string block_letter(int index) {
  static constexpr std::string_view kLetters = "FGHJKLMNPQRSTUVWXYZ";
  if (index >= 0 && index < static_cast<int>(kLetters.size())) {
    return std::string(1, kLetters[index]);
  }
  return "B" + std::to_string(index);
}

// ---------------------------------------------------------------------------
// OperatorExpr

OperatorExpr::OperatorExpr() : rep_(std::make_shared<Rep>()) {}

OperatorExpr::OperatorExpr(std::shared_ptr<const Rep> rep) : rep_(std::move(rep)) {}

OperatorExpr OperatorExpr::identity() {
  static const OperatorExpr kIdentity;
  return kIdentity;
}

OperatorExpr OperatorExpr::block(BlockId id) {
  auto rep = std::make_shared<Rep>();
  rep->kind = Kind::Block;
  rep->block = std::move(id);
  return OperatorExpr(std::move(rep));
}

OperatorExpr OperatorExpr::block(std::string name, std::string share_key) {
  return block(BlockId{std::move(name), std::move(share_key)});
}

OperatorExpr OperatorExpr::sum(std::vector<OperatorExpr> terms) {
  std::vector<OperatorExpr> flat;
  flat.reserve(terms.size());
  for (auto& t : terms) {
    if (t.kind() == Kind::Sum) {
      for (const auto& c : t.children()) flat.push_back(c);
    } else {
      flat.push_back(std::move(t));
    }
  }
  if (flat.empty()) throw ValidationError("sum needs at least one term");
  if (flat.size() == 1) return flat.front();
  auto rep = std::make_shared<Rep>();
  rep->kind = Kind::Sum;
  rep->children = std::move(flat);
  return OperatorExpr(std::move(rep));
}

OperatorExpr OperatorExpr::compose(std::vector<OperatorExpr> factors) {
  std::vector<OperatorExpr> flat;
  flat.reserve(factors.size());
  for (auto& f : factors) {
    if (f.kind() == Kind::Compose) {
      for (const auto& c : f.children()) flat.push_back(c);
    } else if (!f.is_identity()) {
      flat.push_back(std::move(f));
    }
  }
  if (flat.empty()) return identity();
  if (flat.size() == 1) return flat.front();
  auto rep = std::make_shared<Rep>();
  rep->kind = Kind::Compose;
  rep->children = std::move(flat);
  return OperatorExpr(std::move(rep));
}

OperatorExpr OperatorExpr::scaled(double beta, OperatorExpr inner) {
  auto rep = std::make_shared<Rep>();
  rep->kind = Kind::Scaled;
  rep->beta = beta;
  rep->children.push_back(std::move(inner));
  return OperatorExpr(std::move(rep));
}

OperatorExpr::Kind OperatorExpr::kind() const { return rep_->kind; }

bool OperatorExpr::is_monomial() const {
  switch (kind()) {
    case Kind::Identity:
    case Kind::Block: return true;
    case Kind::Compose:
      return std::all_of(children().begin(), children().end(),
                         [](const OperatorExpr& f) { return f.kind() == Kind::Block; });
    default: return false;
  }
}

const BlockId& OperatorExpr::block_id() const {
  if (kind() != Kind::Block) throw ValidationError("expression is not a block reference");
  return rep_->block;
}

std::span<const OperatorExpr> OperatorExpr::children() const { return rep_->children; }

double OperatorExpr::beta() const {
  if (kind() != Kind::Scaled) throw ValidationError("expression is not scaled");
  return rep_->beta;
}

const OperatorExpr& OperatorExpr::inner() const {
  if (kind() != Kind::Scaled) throw ValidationError("expression is not scaled");
  return rep_->children.front();
}

std::vector<BlockId> OperatorExpr::monomial_blocks() const {
  if (!is_monomial()) throw ValidationError("expression is not a monomial: " + print_expr(*this));
  std::vector<BlockId> out;
  if (kind() == Kind::Block) {
    out.push_back(block_id());
  } else if (kind() == Kind::Compose) {
    for (auto it = children().rbegin(); it != children().rend(); ++it) out.push_back(it->block_id());
  }
  return out;
}

OperatorExpr OperatorExpr::from_application_order(const std::vector<BlockId>& blocks) {
  std::vector<OperatorExpr> factors;
  factors.reserve(blocks.size());
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) factors.push_back(block(*it));
  return compose(std::move(factors));
}

bool operator==(const OperatorExpr& a, const OperatorExpr& b) {
  if (a.rep_ == b.rep_) return true;
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case OperatorExpr::Kind::Identity: return true;
    case OperatorExpr::Kind::Block: return a.rep_->block == b.rep_->block;
    case OperatorExpr::Kind::Scaled:
      return a.rep_->beta == b.rep_->beta && a.inner() == b.inner();
    case OperatorExpr::Kind::Sum:
    case OperatorExpr::Kind::Compose: return a.rep_->children == b.rep_->children;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Module construction

OperatorExpr build_module(const std::vector<OperatorExpr>& monomials, double beta) {
  if (monomials.empty()) return OperatorExpr::identity();
  OperatorExpr branch = OperatorExpr::sum(monomials);
  if (beta != 1.0) branch = OperatorExpr::scaled(beta, std::move(branch));
  return OperatorExpr::sum({OperatorExpr::identity(), std::move(branch)});
}

OperatorExpr expand_module(ModuleKind kind, double beta) {
  if (kind.order < 1) throw ValidationError("module order must be >= 1");
  if (!(beta > 0.0 && beta <= 1.0)) {
    throw ValidationError("residual scale beta must lie in (0, 1]");
  }
  std::vector<OperatorExpr> monomials;
  switch (kind.family) {
    case ModuleKind::Family::IR:
      monomials.push_back(OperatorExpr::block("F", "F"));
      break;
    case ModuleKind::Family::Poly: {
      const BlockId f{"F", "F"};
      std::vector<BlockId> chain;
      for (int i = 0; i < kind.order; ++i) {
        chain.push_back(f);
        monomials.push_back(OperatorExpr::from_application_order(chain));
      }
      break;
    }
    case ModuleKind::Family::MPoly: {
      std::vector<BlockId> chain;
      for (int i = 0; i < kind.order; ++i) {
        const std::string letter = block_letter(i);
        chain.push_back(BlockId{letter, letter});
        monomials.push_back(OperatorExpr::from_application_order(chain));
      }
      break;
    }
    case ModuleKind::Family::KWay:
      for (int i = 0; i < kind.order; ++i) {
        const std::string letter = block_letter(i);
        monomials.push_back(OperatorExpr::block(letter, letter));
      }
      break;
  }
  return build_module(monomials, beta);
}

ModuleParts split_module(const OperatorExpr& expr) {
  const auto reject = [&] {
    return ValidationError("not a module expression (expected I + ...): " + print_expr(expr));
  };
  if (expr.kind() != OperatorExpr::Kind::Sum) throw reject();
  auto terms = expr.children();
  if (terms.size() < 2 || !terms.front().is_identity()) throw reject();
  auto rest = terms.subspan(1);
  ModuleParts parts;
  if (rest.size() == 1 && rest.front().kind() == OperatorExpr::Kind::Scaled) {
    parts.beta = rest.front().beta();
    parts.branch = rest.front().inner();
  } else {
    parts.branch = OperatorExpr::sum(std::vector<OperatorExpr>(rest.begin(), rest.end()));
  }
  return parts;
}

std::vector<OperatorExpr> module_monomials(const OperatorExpr& expr) {
  const ModuleParts parts = split_module(expr);
  std::vector<OperatorExpr> out;
  if (parts.branch.kind() == OperatorExpr::Kind::Sum) {
    out.assign(parts.branch.children().begin(), parts.branch.children().end());
  } else {
    out.push_back(parts.branch);
  }
  for (const auto& m : out) {
    if (!m.is_monomial() || m.is_identity()) {
      throw ValidationError("module is not in naive form: " + print_expr(expr));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cascade

namespace {

OperatorExpr factor_chain(std::vector<std::vector<BlockId>> paths) {
  std::vector<OperatorExpr> terms;
  std::vector<std::vector<BlockId>> rest;
  for (auto& p : paths) {
    if (p.empty()) {
      terms.push_back(OperatorExpr::identity());
    } else {
      rest.push_back(std::move(p));
    }
  }
  bool shared = rest.size() >= 2;
  for (size_t i = 1; shared && i < rest.size(); ++i) {
    shared = rest[i].front().share_key == rest[0].front().share_key;
  }
  if (shared) {
    const BlockId first = rest.front().front();
    for (auto& p : rest) p.erase(p.begin());
    terms.push_back(OperatorExpr::compose(
        {factor_chain(std::move(rest)), OperatorExpr::block(first)}));
  } else {
    for (const auto& p : rest) terms.push_back(OperatorExpr::from_application_order(p));
  }
  return OperatorExpr::sum(std::move(terms));
}

}  // namespace

OperatorExpr cascade(const OperatorExpr& expr) {
  const ModuleParts parts = split_module(expr);
  std::vector<std::vector<BlockId>> paths;
  for (const auto& m : module_monomials(expr)) paths.push_back(m.monomial_blocks());
  OperatorExpr branch = factor_chain(std::move(paths));
  if (parts.beta != 1.0) branch = OperatorExpr::scaled(parts.beta, std::move(branch));
  return OperatorExpr::sum({OperatorExpr::identity(), std::move(branch)});
}

// ---------------------------------------------------------------------------
// Symbolic expansion

SymbolicExpansion expand_symbolic(const OperatorExpr& expr) {
  using Kind = OperatorExpr::Kind;
  SymbolicExpansion out;
  switch (expr.kind()) {
    case Kind::Identity:
      out[{}] = SymbolicTerm{{}, 1.0};
      break;
    case Kind::Block:
      out[{expr.block_id().share_key}] = SymbolicTerm{{expr.block_id()}, 1.0};
      break;
    case Kind::Scaled:
      out = expand_symbolic(expr.inner());
      for (auto& [key, term] : out) term.coefficient *= expr.beta();
      break;
    case Kind::Sum:
      for (const auto& t : expr.children()) {
        for (const auto& [key, term] : expand_symbolic(t)) {
          auto [it, inserted] = out.try_emplace(key, term);
          if (!inserted) it->second.coefficient += term.coefficient;
        }
      }
      break;
    case Kind::Compose: {
      // Rightmost factor applies first, so fold from the right.
      out[{}] = SymbolicTerm{{}, 1.0};
      auto factors = expr.children();
      for (auto f = factors.rbegin(); f != factors.rend(); ++f) {
        const SymbolicExpansion rhs = expand_symbolic(*f);
        SymbolicExpansion next;
        for (const auto& [k1, t1] : out) {
          for (const auto& [k2, t2] : rhs) {
            PathKey key = k1;
            key.insert(key.end(), k2.begin(), k2.end());
            SymbolicTerm term{t1.blocks, t1.coefficient * t2.coefficient};
            term.blocks.insert(term.blocks.end(), t2.blocks.begin(), t2.blocks.end());
            auto [it, inserted] = next.try_emplace(std::move(key), term);
            if (!inserted) it->second.coefficient += term.coefficient;
          }
        }
        out = std::move(next);
      }
      break;
    }
  }
  std::erase_if(out, [](const auto& kv) { return kv.second.coefficient == 0.0; });
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic paths

OperatorExpr drop_paths(const OperatorExpr& expr, const std::vector<bool>& gates) {
  const ModuleParts parts = split_module(expr);
  const auto monomials = module_monomials(expr);
  if (gates.size() != monomials.size()) {
    throw ValidationError("gate vector has " + std::to_string(gates.size()) +
                          " entries but the module has " + std::to_string(monomials.size()) +
                          " paths");
  }
  std::vector<OperatorExpr> kept;
  for (size_t i = 0; i < monomials.size(); ++i) {
    if (gates[i]) kept.push_back(monomials[i]);
  }
  return build_module(kept, parts.beta);
}

// ---------------------------------------------------------------------------
// Cost

namespace {

// Symbolic evaluator mirroring the lowering's common-subexpression cache.
class ApplicationCounter {
 public:
  explicit ApplicationCounter(bool memoize) : memoize_(memoize) {}

  std::int64_t count() const { return count_; }

  int eval(const OperatorExpr& e, int input) {
    using Kind = OperatorExpr::Kind;
    switch (e.kind()) {
      case Kind::Identity: return input;
      case Kind::Block: {
        if (memoize_) {
          auto key = std::make_pair(e.block_id().share_key, input);
          auto it = blocks_.find(key);
          if (it != blocks_.end()) return it->second;
          ++count_;
          return blocks_[key] = next_++;
        }
        ++count_;
        return next_++;
      }
      case Kind::Scaled: eval(e.inner(), input); return next_++;
      case Kind::Sum:
        for (const auto& t : e.children()) eval(t, input);
        return next_++;
      case Kind::Compose: {
        int v = input;
        auto f = e.children();
        for (auto it = f.rbegin(); it != f.rend(); ++it) v = eval(*it, v);
        return v;
      }
    }
    return input;
  }

 private:
  bool memoize_;
  std::int64_t count_ = 0;
  int next_ = 1;
  std::map<std::pair<std::string, int>, int> blocks_;
};

}  // namespace

std::int64_t block_applications(const OperatorExpr& expr, bool memoize) {
  ApplicationCounter counter(memoize);
  counter.eval(expr, 0);
  return counter.count();
}

// ---------------------------------------------------------------------------
// Utilities

namespace {

void collect_keys(const OperatorExpr& e, std::set<std::string>& keys) {
  if (e.kind() == OperatorExpr::Kind::Block) {
    keys.insert(e.block_id().share_key);
  } else if (e.kind() == OperatorExpr::Kind::Scaled) {
    collect_keys(e.inner(), keys);
  } else {
    for (const auto& c : e.children()) collect_keys(c, keys);
  }
}

}  // namespace

std::vector<std::string> share_keys(const OperatorExpr& expr) {
  std::set<std::string> keys;
  collect_keys(expr, keys);
  return {keys.begin(), keys.end()};
}

OperatorExpr with_share_prefix(const OperatorExpr& expr, const std::string& prefix) {
  using Kind = OperatorExpr::Kind;
  switch (expr.kind()) {
    case Kind::Identity: return expr;
    case Kind::Block:
      return OperatorExpr::block(expr.block_id().name, prefix + expr.block_id().share_key);
    case Kind::Scaled:
      return OperatorExpr::scaled(expr.beta(), with_share_prefix(expr.inner(), prefix));
    case Kind::Sum:
    case Kind::Compose: {
      std::vector<OperatorExpr> kids;
      for (const auto& c : expr.children()) kids.push_back(with_share_prefix(c, prefix));
      return expr.kind() == Kind::Sum ? OperatorExpr::sum(std::move(kids))
                                      : OperatorExpr::compose(std::move(kids));
    }
  }
  return expr;
}

}  // namespace polystack
