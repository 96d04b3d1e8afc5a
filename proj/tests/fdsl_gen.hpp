#pragma once

// Random program generator for property tests. Produces well-formed ASTs over
// a caller-supplied vocabulary of numeric columns, categorical columns with
// their tokens, and temporal group ids.

#include <string>
#include <utility>
#include <vector>

#include "medfeat/fdsl.hpp"
#include "medfeat/random.hpp"

namespace medfeat::testing {

struct Vocabulary {
  std::vector<std::string> numeric;
  std::vector<std::pair<std::string, std::vector<std::string>>> categorical;
  std::vector<std::string> groups;
};

class ProgramGenerator {
 public:
  ProgramGenerator(Vocabulary vocab, std::uint64_t seed) : vocab_(std::move(vocab)), rng_(seed) {}

  fdsl::Program program(int max_depth = 5) {
    fdsl::Program p;
    p.name = "f" + std::to_string(rng_.below(100000));
    if (rng_.bernoulli(0.3)) p.rationale = rng_.bernoulli(0.5) ? "clinical note" : "line one\n  line two";
    p.ast = expr(max_depth);
    return p;
  }

  fdsl::Expr expr(int depth) {
    using fdsl::Expr;
    using fdsl::Op;
    if (depth <= 0) return leaf();
    switch (rng_.below(9)) {
      case 0:
      case 1:
        return leaf();
      case 2: {
        static constexpr Op ops[] = {Op::log1p, Op::abs, Op::sqrt, Op::neg, Op::clip01};
        return Expr::call(ops[rng_.below(5)], expr(depth - 1));
      }
      case 3:
      case 4: {
        static constexpr Op ops[] = {Op::add, Op::sub, Op::mul, Op::div, Op::min, Op::max, Op::pow};
        return Expr::bin(ops[rng_.below(7)], expr(depth - 1), expr(depth - 1));
      }
      case 5:
        return Expr::if_(cond(depth - 1), expr(depth - 1), expr(depth - 1));
      case 6: {
        static constexpr Op ops[] = {Op::train_mean, Op::train_std, Op::train_min, Op::train_max, Op::train_median};
        return Expr::call(ops[rng_.below(5)], expr(depth - 1));
      }
      case 7:
        if (!vocab_.groups.empty()) {
          static constexpr Op ops[] = {Op::g_mean,  Op::g_std,   Op::g_min,   Op::g_max,    Op::g_first,
                                       Op::g_last, Op::g_delta, Op::g_slope, Op::g_missing};
          return Expr::group(ops[rng_.below(9)], vocab_.groups[rng_.below(vocab_.groups.size())]);
        }
        return leaf();
      default:
        return Expr::coalesce(expr(depth - 1), expr(depth - 1));
    }
  }

  fdsl::Expr cond(int depth) {
    using fdsl::Expr;
    using fdsl::Op;
    const auto pick = depth <= 0 ? rng_.below(3) : rng_.below(6);
    switch (pick) {
      case 0: {
        static constexpr Op ops[] = {Op::gt, Op::ge, Op::lt, Op::le, Op::eq};
        return Expr::cmp(ops[rng_.below(5)], expr(depth), expr(depth));
      }
      case 1:
        if (!vocab_.categorical.empty()) {
          const auto& [name, tokens] = vocab_.categorical[rng_.below(vocab_.categorical.size())];
          const std::string token = tokens.empty() ? "x" : tokens[rng_.below(tokens.size())];
          return rng_.bernoulli(0.5) ? Expr::cmp(Op::eq, Expr::col(name), Expr::token(token))
                                     : Expr::cmp(Op::eq, Expr::token(token), Expr::col(name));
        }
        return Expr::missing_test(expr(depth));
      case 2:
        return Expr::missing_test(expr(depth));
      case 3:
        return Expr::both(cond(depth - 1), cond(depth - 1));
      case 4:
        return Expr::either(cond(depth - 1), cond(depth - 1));
      default:
        return Expr::negate(cond(depth - 1));
    }
  }

  fdsl::Expr leaf() {
    if (vocab_.numeric.empty() || rng_.bernoulli(0.3)) return fdsl::Expr::literal(literal());
    return fdsl::Expr::col(vocab_.numeric[rng_.below(vocab_.numeric.size())]);
  }

  double literal() {
    switch (rng_.below(4)) {
      case 0: return static_cast<double>(rng_.integer(0, 10));
      case 1: return rng_.uniform(-5.0, 5.0);
      case 2: return std::ldexp(rng_.uniform(-1.0, 1.0), static_cast<int>(rng_.integer(-60, 60)));
      default: return -static_cast<double>(rng_.integer(0, 3));
    }
  }

  Rng& rng() { return rng_; }

 private:
  Vocabulary vocab_;
  Rng rng_;
};

}  // namespace medfeat::testing
