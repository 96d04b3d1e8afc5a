#include <algorithm>
#include <cctype>
#include <set>

#include "medfeat/error.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/text.hpp"

namespace medfeat::fdsl {

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
};

constexpr OpInfo kOps[] = {
    {Op::add, "+"},           {Op::sub, "-"},             {Op::mul, "*"},
    {Op::div, "/"},           {Op::min, "min"},           {Op::max, "max"},
    {Op::pow, "pow"},         {Op::log1p, "log1p"},       {Op::abs, "abs"},
    {Op::sqrt, "sqrt"},       {Op::neg, "neg"},           {Op::clip01, "clip01"},
    {Op::gt, ">"},            {Op::ge, ">="},             {Op::lt, "<"},
    {Op::le, "<="},           {Op::eq, "=="},             {Op::train_mean, "trainmean"},
    {Op::train_std, "trainstd"}, {Op::train_min, "trainmin"}, {Op::train_max, "trainmax"},
    {Op::train_median, "trainmedian"}, {Op::g_mean, "gmean"}, {Op::g_std, "gstd"},
    {Op::g_min, "gmin"},      {Op::g_max, "gmax"},        {Op::g_first, "gfirst"},
    {Op::g_last, "glast"},    {Op::g_delta, "gdelta"},    {Op::g_slope, "gslope"},
    {Op::g_missing, "gmissing"},
};

std::optional<Op> lookup(std::string_view name, std::initializer_list<Op> family) {
  for (Op op : family) {
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

constexpr std::initializer_list<Op> kUnary = {Op::log1p, Op::abs, Op::sqrt, Op::neg, Op::clip01};
constexpr std::initializer_list<Op> kStats = {Op::train_mean, Op::train_std, Op::train_min, Op::train_max,
                                              Op::train_median};
constexpr std::initializer_list<Op> kGroupAggs = {Op::g_mean,  Op::g_std,   Op::g_min,   Op::g_max,    Op::g_first,
                                                  Op::g_last, Op::g_delta, Op::g_slope, Op::g_missing};
constexpr std::initializer_list<Op> kCompare = {Op::gt, Op::ge, Op::lt, Op::le, Op::eq};

constexpr std::size_t kMaxDepth = 256;

// --- Lexer ------------------------------------------------------------------

enum class Tok { ident, number, text, punct, comment, end };

struct Token {
  Tok type;
  std::string value;
  double number = 0.0;
  std::size_t pos = 0;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '@' || c == '.';
}

std::vector<Token> lex(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (c == '#') {
      std::size_t end = text.find('\n', i);
      if (end == std::string_view::npos) end = text.size();
      std::string body(text.substr(i + 1, end - i - 1));
      if (!body.empty() && body.back() == '\r') body.pop_back();
      if (!body.empty() && body.front() == ' ') body.erase(body.begin());
      tokens.push_back({Tok::comment, std::move(body), 0.0, start});
      i = end;
      continue;
    }
    if (ident_start(c)) {
      while (i < text.size() && ident_char(text[i])) ++i;
      tokens.push_back({Tok::ident, std::string(text.substr(start, i - start)), 0.0, start});
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
      while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
      if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < text.size() && (text[j] == '+' || text[j] == '-')) ++j;
        if (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
          i = j;
          while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
        }
      }
      double value = 0.0;
      if (!parse_double(text.substr(start, i - start), value)) {
        throw ParseError("malformed number '" + std::string(text.substr(start, i - start)) + "'", start);
      }
      tokens.push_back({Tok::number, std::string(text.substr(start, i - start)), value, start});
      continue;
    }
    if (c == '"') {
      std::string value;
      ++i;
      bool closed = false;
      while (i < text.size()) {
        if (text[i] == '\\' && i + 1 < text.size()) {
          value.push_back(text[i + 1]);
          i += 2;
        } else if (text[i] == '"') {
          ++i;
          closed = true;
          break;
        } else {
          value.push_back(text[i++]);
        }
      }
      if (!closed) throw ParseError("unterminated string literal", start);
      tokens.push_back({Tok::text, std::move(value), 0.0, start});
      continue;
    }
    if ((c == '>' || c == '<' || c == '=') && i + 1 < text.size() && text[i + 1] == '=') {
      tokens.push_back({Tok::punct, std::string(text.substr(i, 2)), 0.0, start});
      i += 2;
      continue;
    }
    if (std::string_view("()+-*/<>=,").find(c) != std::string_view::npos) {
      tokens.push_back({Tok::punct, std::string(1, c), 0.0, start});
      ++i;
      continue;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", start);
  }
  tokens.push_back({Tok::end, "", 0.0, text.size()});
  return tokens;
}

// --- Parser -----------------------------------------------------------------

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  Program program() {
    Program out;
    std::vector<std::string> rationale;
    while (peek().type == Tok::comment) rationale.push_back(next().value);
    for (std::size_t i = 0; i < rationale.size(); ++i) {
      if (i) out.rationale += '\n';
      out.rationale += rationale[i];
    }
    expect_word("feature");
    const auto& name = peek();
    if (name.type != Tok::ident) fail("expected feature name", name.pos);
    out.name = next().value;
    expect_punct("=");
    out.ast = expr();
    if (peek().type != Tok::end) fail("unexpected '" + peek().value + "' after expression", peek().pos);
    return out;
  }

 private:
  struct DepthGuard {
    explicit DepthGuard(Parser& p) : parser(p) {
      if (++parser.depth_ > kMaxDepth) parser.fail("expression nested too deeply", parser.peek().pos);
    }
    ~DepthGuard() { --parser.depth_; }
    Parser& parser;
  };

  [[noreturn]] void fail(const std::string& message, std::size_t pos) { throw ParseError(message, pos); }

  const Token& peek(std::size_t ahead = 0) const { return tokens_[std::min(index_ + ahead, tokens_.size() - 1)]; }
  const Token& next() {
    const Token& tok = tokens_[index_];
    if (index_ + 1 < tokens_.size()) ++index_;
    return tok;
  }

  bool is_punct(std::string_view p, std::size_t ahead = 0) const {
    return peek(ahead).type == Tok::punct && peek(ahead).value == p;
  }
  bool is_word(std::string_view w) const { return peek().type == Tok::ident && peek().value == w; }

  void expect_punct(std::string_view p) {
    if (!is_punct(p)) fail("expected '" + std::string(p) + "'", peek().pos);
    next();
  }
  void expect_word(std::string_view w) {
    if (!is_word(w)) fail("expected '" + std::string(w) + "'", peek().pos);
    next();
  }

  // Separator between call arguments; a premature ')' or a surplus ',' is an arity error.
  void expect_separator(std::string_view fn, std::size_t arity) {
    if (is_punct(")")) fail("arity mismatch: " + std::string(fn) + " expects " + std::to_string(arity) + " arguments", peek().pos);
    expect_punct(",");
  }
  void expect_close(std::string_view fn, std::size_t arity) {
    if (is_punct(",")) fail("arity mismatch: " + std::string(fn) + " expects " + std::to_string(arity) + " argument" + (arity == 1 ? "" : "s"), peek().pos);
    expect_punct(")");
  }

  std::string identifier(std::string_view what) {
    if (peek().type != Tok::ident) fail("expected " + std::string(what), peek().pos);
    return next().value;
  }

  Expr expr() {
    DepthGuard guard(*this);
    Expr lhs = additive();
    while (is_word("min") || is_word("max")) {
      const Op op = next().value == "min" ? Op::min : Op::max;
      lhs = Expr::bin(op, std::move(lhs), additive());
    }
    return lhs;
  }

  Expr additive() {
    Expr lhs = multiplicative();
    while (is_punct("+") || is_punct("-")) {
      const Op op = next().value == "+" ? Op::add : Op::sub;
      lhs = Expr::bin(op, std::move(lhs), multiplicative());
    }
    return lhs;
  }

  Expr multiplicative() {
    Expr lhs = power();
    while (is_punct("*") || is_punct("/")) {
      const Op op = next().value == "*" ? Op::mul : Op::div;
      lhs = Expr::bin(op, std::move(lhs), power());
    }
    return lhs;
  }

  Expr power() {
    DepthGuard guard(*this);
    Expr base = atom();
    if (is_word("pow")) {
      next();
      return Expr::bin(Op::pow, std::move(base), power());
    }
    return base;
  }

  Expr atom() {
    DepthGuard guard(*this);
    const Token& tok = peek();
    switch (tok.type) {
      case Tok::number:
        return Expr::literal(next().number);
      case Tok::text:
        fail("string literal is only allowed in an equality comparison with a categorical column", tok.pos);
      case Tok::comment:
        fail("comments are only allowed before 'feature'", tok.pos);
      case Tok::end:
        fail("unexpected end of input", tok.pos);
      case Tok::punct:
        if (tok.value == "(") {
          next();
          Expr inner = expr();
          expect_punct(")");
          return inner;
        }
        if (tok.value == "-" && peek(1).type == Tok::number) {
          next();
          return Expr::literal(-next().number);
        }
        fail("unexpected '" + tok.value + "'", tok.pos);
      case Tok::ident:
        break;
    }
    const std::string word = next().value;
    const std::size_t word_pos = tok.pos;
    if (!is_punct("(")) fail("unexpected identifier '" + word + "'", word_pos);
    if (word == "col") {
      next();
      Expr out = Expr::col(identifier("column name"));
      expect_close(word, 1);
      return out;
    }
    if (auto op = lookup(word, kUnary)) {
      next();
      Expr arg = expr();
      expect_close(word, 1);
      return Expr::call(*op, std::move(arg));
    }
    if (auto op = lookup(word, kStats)) {
      next();
      Expr arg = expr();
      expect_close(word, 1);
      Expr out = Expr::call(*op, std::move(arg));
      out.kind = Kind::stat;
      return out;
    }
    if (auto op = lookup(word, kGroupAggs)) {
      next();
      Expr out = Expr::group(*op, identifier("temporal group name"));
      expect_close(word, 1);
      return out;
    }
    if (word == "coalesce") {
      next();
      Expr first = expr();
      expect_separator(word, 2);
      Expr fallback = expr();
      expect_close(word, 2);
      return Expr::coalesce(std::move(first), std::move(fallback));
    }
    if (word == "if") {
      next();
      Expr cond = condition();
      expect_separator(word, 3);
      Expr then_branch = expr();
      expect_separator(word, 3);
      Expr else_branch = expr();
      expect_close(word, 3);
      return Expr::if_(std::move(cond), std::move(then_branch), std::move(else_branch));
    }
    if (word == "is_missing") fail("is_missing is a condition and may only appear inside if()", word_pos);
    fail("unknown function '" + word + "'", word_pos);
  }

  Expr condition() {
    DepthGuard guard(*this);
    Expr lhs = conjunction();
    while (is_word("or")) {
      next();
      lhs = Expr::either(std::move(lhs), conjunction());
    }
    return lhs;
  }

  Expr conjunction() {
    Expr lhs = negation();
    while (is_word("and")) {
      next();
      lhs = Expr::both(std::move(lhs), negation());
    }
    return lhs;
  }

  Expr negation() {
    DepthGuard guard(*this);
    if (is_word("not")) {
      next();
      return Expr::negate(negation());
    }
    return condition_atom();
  }

  Expr condition_atom() {
    if (is_word("is_missing") && is_punct("(", 1)) {
      next();
      next();
      Expr arg = expr();
      expect_close("is_missing", 1);
      return Expr::missing_test(std::move(arg));
    }
    if (is_punct("(")) {
      const std::size_t saved = index_;
      try {
        next();
        Expr inner = condition();
        expect_punct(")");
        return inner;
      } catch (const ParseError&) {
        index_ = saved;
      }
    }
    return comparison();
  }

  Expr comparison_operand() {
    if (peek().type == Tok::text) return Expr::token(next().value);
    return expr();
  }

  Expr comparison() {
    Expr lhs = comparison_operand();
    const Token& tok = peek();
    std::optional<Op> op;
    if (tok.type == Tok::punct) op = lookup(tok.value, kCompare);
    if (!op) fail("expected comparison operator", tok.pos);
    next();
    const std::size_t rhs_pos = peek().pos;
    Expr rhs = comparison_operand();
    const bool lhs_text = lhs.kind == Kind::text;
    const bool rhs_text = rhs.kind == Kind::text;
    if (lhs_text || rhs_text) {
      const Expr& other = lhs_text ? rhs : lhs;
      if (*op != Op::eq || other.kind != Kind::column) {
        fail("category tokens may only be compared with == against col(...)", lhs_text ? tok.pos : rhs_pos);
      }
    }
    return Expr::cmp(*op, std::move(lhs), std::move(rhs));
  }

  std::vector<Token> tokens_;
  std::size_t index_ = 0;
  std::size_t depth_ = 0;
};

// --- Renderer ---------------------------------------------------------------

int precedence(const Expr& e) {
  switch (e.kind) {
    case Kind::binary:
      switch (e.op) {
        case Op::min:
        case Op::max: return 1;
        case Op::add:
        case Op::sub: return 2;
        case Op::mul:
        case Op::div: return 3;
        default: return 4;
      }
    case Kind::logic_or: return 1;
    case Kind::logic_and: return 2;
    case Kind::logic_not: return 3;
    default: return 5;
  }
}

std::string quote_token(const std::string& token) {
  std::string out = "\"";
  for (char c : token) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void render_into(const Expr& e, std::string& out);

void render_child(const Expr& child, bool parens, std::string& out) {
  if (parens) out += '(';
  render_into(child, out);
  if (parens) out += ')';
}

void render_into(const Expr& e, std::string& out) {
  switch (e.kind) {
    case Kind::number:
      out += format_double(e.number);
      return;
    case Kind::text:
      out += quote_token(e.name);
      return;
    case Kind::column:
      out += "col(" + e.name + ")";
      return;
    case Kind::unary:
    case Kind::stat:
      out += op_name(e.op);
      out += '(';
      render_into(e.args[0], out);
      out += ')';
      return;
    case Kind::group:
      out += op_name(e.op);
      out += "(" + e.name + ")";
      return;
    case Kind::binary: {
      const int p = precedence(e);
      const bool right_assoc = e.op == Op::pow;
      const int lp = precedence(e.args[0]);
      const int rp = precedence(e.args[1]);
      render_child(e.args[0], right_assoc ? lp <= p : lp < p, out);
      out += ' ';
      out += op_name(e.op);
      out += ' ';
      render_child(e.args[1], right_assoc ? rp < p : rp <= p, out);
      return;
    }
    case Kind::conditional:
      out += "if(";
      render_into(e.args[0], out);
      out += ", ";
      render_into(e.args[1], out);
      out += ", ";
      render_into(e.args[2], out);
      out += ')';
      return;
    case Kind::coalesce:
      out += "coalesce(";
      render_into(e.args[0], out);
      out += ", ";
      render_into(e.args[1], out);
      out += ')';
      return;
    case Kind::compare:
      render_into(e.args[0], out);
      out += ' ';
      out += op_name(e.op);
      out += ' ';
      render_into(e.args[1], out);
      return;
    case Kind::is_missing:
      out += "is_missing(";
      render_into(e.args[0], out);
      out += ')';
      return;
    case Kind::logic_and:
    case Kind::logic_or: {
      const int p = precedence(e);
      render_child(e.args[0], precedence(e.args[0]) < p, out);
      out += e.kind == Kind::logic_and ? " and " : " or ";
      render_child(e.args[1], precedence(e.args[1]) <= p, out);
      return;
    }
    case Kind::logic_not:
      out += "not ";
      render_child(e.args[0], precedence(e.args[0]) < precedence(e), out);
      return;
  }
}

void collect(const Expr& e, Kind kind, std::vector<std::string>& out) {
  if (e.kind == kind && std::find(out.begin(), out.end(), e.name) == out.end()) out.push_back(e.name);
  for (const auto& arg : e.args) collect(arg, kind, out);
}

void rename_in_place(Expr& e, const std::map<std::string, std::string>& mapping) {
  if (e.kind == Kind::column || e.kind == Kind::group) {
    if (auto it = mapping.find(e.name); it != mapping.end()) e.name = it->second;
  }
  for (auto& arg : e.args) rename_in_place(arg, mapping);
}

}  // namespace

std::string_view op_name(Op op) {
  for (const auto& info : kOps) {
    if (info.op == op) return info.name;
  }
  return "?";
}

Expr Expr::literal(double value) { return Expr{Kind::number, Op::none, value, {}, {}}; }
Expr Expr::token(std::string value) { return Expr{Kind::text, Op::none, 0.0, std::move(value), {}}; }
Expr Expr::col(std::string column) { return Expr{Kind::column, Op::none, 0.0, std::move(column), {}}; }

Expr Expr::call(Op op, Expr arg) {
  const bool is_stat = lookup(op_name(op), kStats).has_value();
  Expr out{is_stat ? Kind::stat : Kind::unary, op, 0.0, {}, {}};
  out.args.push_back(std::move(arg));
  return out;
}

Expr Expr::bin(Op op, Expr lhs, Expr rhs) {
  Expr out{Kind::binary, op, 0.0, {}, {}};
  out.args.push_back(std::move(lhs));
  out.args.push_back(std::move(rhs));
  return out;
}

Expr Expr::cmp(Op op, Expr lhs, Expr rhs) {
  Expr out = bin(op, std::move(lhs), std::move(rhs));
  out.kind = Kind::compare;
  return out;
}

Expr Expr::if_(Expr cond, Expr then_branch, Expr else_branch) {
  Expr out{Kind::conditional, Op::none, 0.0, {}, {}};
  out.args.push_back(std::move(cond));
  out.args.push_back(std::move(then_branch));
  out.args.push_back(std::move(else_branch));
  return out;
}

Expr Expr::group(Op op, std::string group_id) { return Expr{Kind::group, op, 0.0, std::move(group_id), {}}; }

Expr Expr::coalesce(Expr first, Expr fallback) {
  Expr out = bin(Op::none, std::move(first), std::move(fallback));
  out.kind = Kind::coalesce;
  return out;
}

Expr Expr::missing_test(Expr arg) {
  Expr out{Kind::is_missing, Op::none, 0.0, {}, {}};
  out.args.push_back(std::move(arg));
  return out;
}

Expr Expr::both(Expr lhs, Expr rhs) {
  Expr out = bin(Op::none, std::move(lhs), std::move(rhs));
  out.kind = Kind::logic_and;
  return out;
}

Expr Expr::either(Expr lhs, Expr rhs) {
  Expr out = bin(Op::none, std::move(lhs), std::move(rhs));
  out.kind = Kind::logic_or;
  return out;
}

Expr Expr::negate(Expr arg) {
  Expr out{Kind::logic_not, Op::none, 0.0, {}, {}};
  out.args.push_back(std::move(arg));
  return out;
}

bool Expr::is_condition() const {
  return kind == Kind::compare || kind == Kind::is_missing || kind == Kind::logic_and || kind == Kind::logic_or ||
         kind == Kind::logic_not;
}

Program parse(std::string_view text) { return Parser(lex(text)).program(); }

std::string render(const Expr& expr) {
  std::string out;
  render_into(expr, out);
  return out;
}

std::string render(const Program& program) {
  std::string out;
  if (!program.rationale.empty()) {
    std::size_t start = 0;
    while (true) {
      const auto end = program.rationale.find('\n', start);
      const auto line = std::string_view(program.rationale).substr(start, end == std::string::npos ? std::string::npos : end - start);
      out += line.empty() ? "#\n" : "# " + std::string(line) + "\n";
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  out += "feature " + program.name + " = ";
  render_into(program.ast, out);
  return out;
}

std::vector<std::string> referenced_columns(const Expr& expr) {
  std::vector<std::string> out;
  collect(expr, Kind::column, out);
  return out;
}

std::vector<std::string> referenced_groups(const Expr& expr) {
  std::vector<std::string> out;
  collect(expr, Kind::group, out);
  return out;
}

bool contains_op(const Expr& expr, Op op) {
  if (expr.op == op) return true;
  return std::any_of(expr.args.begin(), expr.args.end(), [op](const Expr& a) { return contains_op(a, op); });
}

std::size_t count_stat_nodes(const Expr& expr) {
  std::size_t n = expr.kind == Kind::stat ? 1 : 0;
  for (const auto& arg : expr.args) n += count_stat_nodes(arg);
  return n;
}

Program rename(Program program, const std::map<std::string, std::string>& mapping) {
  rename_in_place(program.ast, mapping);
  return program;
}

}  // namespace medfeat::fdsl
