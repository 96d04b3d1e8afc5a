#pragma once

// A closed feature-transformation language. Programs are parsed into an
// expression tree, statistics are fitted on training rows only, and
// evaluation maps every failure mode to a missing cell.
//
//   program := ["#" rationale-line]* "feature" IDENT "=" expr
//   expr    := literal | col(IDENT) | unary(expr) | expr binop expr
//            | if(cond, expr, expr) | stat(expr) | gagg(GROUP) | coalesce(expr, expr)
//   cond    := expr cmp expr | col(CAT) == "token" | is_missing(expr)
//            | cond and cond | cond or cond | not cond | (cond)
//
// Binary operator precedence, loosest first: min max, + -, * /, pow.
// pow is right-associative, the others left-associative.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medfeat/datamodel.hpp"

namespace medfeat::fdsl {

enum class Kind : std::uint8_t {
  number,     // numeric literal
  text,       // quoted category token (comparison operand only)
  column,     // col(name)
  unary,
  binary,
  conditional,  // if(cond, then, else)
  stat,         // train-fitted statistic of a sub-expression
  group,        // aggregation over a temporal group
  coalesce,
  compare,
  is_missing,
  logic_and,
  logic_or,
  logic_not,
};

enum class Op : std::uint8_t {
  none,
  // binary
  add, sub, mul, div, min, max, pow,
  // unary
  log1p, abs, sqrt, neg, clip01,
  // comparison
  gt, ge, lt, le, eq,
  // train statistics
  train_mean, train_std, train_min, train_max, train_median,
  // group aggregations
  g_mean, g_std, g_min, g_max, g_first, g_last, g_delta, g_slope, g_missing,
};

std::string_view op_name(Op op);

struct Expr {
  Kind kind = Kind::number;
  Op op = Op::none;
  double number = 0.0;
  /// Column name, group id, or category token depending on kind.
  std::string name;
  std::vector<Expr> args;

  bool operator==(const Expr&) const = default;

  static Expr literal(double value);
  static Expr token(std::string value);
  static Expr col(std::string column);
  static Expr call(Op op, Expr arg);
  static Expr bin(Op op, Expr lhs, Expr rhs);
  static Expr cmp(Op op, Expr lhs, Expr rhs);
  static Expr if_(Expr cond, Expr then_branch, Expr else_branch);
  static Expr group(Op op, std::string group_id);
  static Expr coalesce(Expr first, Expr fallback);
  static Expr missing_test(Expr arg);
  static Expr both(Expr lhs, Expr rhs);
  static Expr either(Expr lhs, Expr rhs);
  static Expr negate(Expr arg);

  bool is_condition() const;
};

struct Program {
  std::string name;
  std::string rationale;
  Expr ast;

  bool operator==(const Program&) const = default;
};

Program parse(std::string_view text);
std::string render(const Program& program);
std::string render(const Expr& expr);

/// Column names referenced by col() nodes, in first-appearance order.
std::vector<std::string> referenced_columns(const Expr& expr);
/// Group ids referenced by aggregation nodes, in first-appearance order.
std::vector<std::string> referenced_groups(const Expr& expr);
bool contains_op(const Expr& expr, Op op);
std::size_t count_stat_nodes(const Expr& expr);

/// Rewrites column names and group ids through `mapping`; unmapped names stay.
Program rename(Program program, const std::map<std::string, std::string>& mapping);

/// Throws FitError if any reference fails to resolve against `schema` or names
/// the label column; also enforces the categorical-comparison rule.
void resolve(const Program& program, std::span<const ColumnSchema> schema, const ColumnSchema& label);
void resolve(const Program& program, const Dataset& dataset);

struct Provenance {
  int iteration = 0;
  int island = 0;
  std::string proposer;

  bool operator==(const Provenance&) const = default;
};

struct FittedTransformation {
  Program program;
  /// Stat-node pre-order index -> value fitted on training rows.
  std::map<int, double> fitted_stats;
  bool fitted = false;
  Provenance provenance;

  bool operator==(const FittedTransformation&) const = default;
};

using TransformationSet = std::vector<FittedTransformation>;

FittedTransformation fit(const Program& program, const Dataset& dataset, std::span<const std::size_t> train_rows);

/// Evaluates the frozen transformation on every row of `dataset`.
std::vector<std::optional<double>> apply(const FittedTransformation& fitted, const Dataset& dataset);

enum class ValidityReason { ok, non_finite_output, all_missing, zero_variance, excess_missing, runtime_error };
std::string_view to_string(ValidityReason reason);

struct ValidityReport {
  bool valid = false;
  ValidityReason reason = ValidityReason::runtime_error;
  double missing_fraction = 0.0;
};

inline constexpr double kMaxMissingFraction = 0.95;

ValidityReport validate(const FittedTransformation& fitted, const Dataset& dataset,
                        std::span<const std::size_t> train_rows);
/// Same checks on an already-computed output column.
ValidityReport validate_output(std::span<const std::optional<double>> output, std::span<const std::size_t> train_rows);

/// Fits each program in order against the progressively augmented dataset.
TransformationSet fit_all(std::span<const Program> programs, const Dataset& dataset,
                          std::span<const std::size_t> train_rows);

std::string to_json(const TransformationSet& set, bool include_stats);
TransformationSet transformations_from_json(std::string_view text);
void save_transformations(const TransformationSet& set, const std::filesystem::path& path, bool include_stats = true);
TransformationSet load_transformations(const std::filesystem::path& path);

}  // namespace medfeat::fdsl

namespace medfeat {

/// Appends one numeric column per transformation, in order; later entries see
/// the columns produced by earlier ones.
Dataset augment(const Dataset& dataset, const fdsl::TransformationSet& sigma);

}  // namespace medfeat
