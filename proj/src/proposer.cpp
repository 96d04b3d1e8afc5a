#include "medfeat/proposer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>

#include <json.hpp>

#include "medfeat/error.hpp"
#include "medfeat/text.hpp"

namespace medfeat::proposer {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string signed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

std::string entry_label(const std::string& name, const std::string& rationale) {
  std::string out = "- " + (name.empty() ? std::string("(unnamed program)") : name);
  if (!rationale.empty()) {
    std::string flat = rationale;
    std::replace(flat.begin(), flat.end(), '\n', ' ');
    out += ": " + flat;
  }
  return out;
}

std::string learner_name(learners::LearnerKind kind) {
  return kind == learners::LearnerKind::logreg ? "logistic regression" : "gradient-boosted tree ensemble";
}

bool plain_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '@';
  });
}

// Feature names derived from column names; '.' and '@' are legal in columns but read poorly.
std::string slug(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '.' || c == '@') c = '_';
  }
  return out;
}

const ColumnSchema* lookup(std::span<const ColumnSchema> schema, std::string_view name) {
  for (const auto& c : schema) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::string zscore(const std::string& column) {
  const std::string c = "col(" + column + ")";
  return "(" + c + " - trainmean(" + c + ")) / trainstd(" + c + ")";
}

const char* kOutputContract =
    "Reply with exactly one program in the feature language below, wrapped in a fenced code block\n"
    "(``` ... ```). Put your rationale on lines starting with # above the program.\n"
    "\n"
    "  # rationale line\n"
    "  feature <name> = <expression>\n"
    "\n"
    "Expressions:\n"
    "- numbers, col(<column>), parentheses\n"
    "- arithmetic: + - * / and the infix operators pow, min, max (e.g. col(a) max col(b));\n"
    "  precedence from loosest: min max, + -, * /, pow\n"
    "- log1p(x), abs(x), sqrt(x), neg(x), clip01(x)\n"
    "- statistics fitted on training rows only: trainmean(x), trainstd(x), trainmin(x), trainmax(x),\n"
    "  trainmedian(x)\n"
    "- temporal group aggregates over a group id: gmean(g), gstd(g), gmin(g), gmax(g), gfirst(g),\n"
    "  glast(g), gdelta(g), gslope(g), gmissing(g)\n"
    "- if(<condition>, x, y) and coalesce(x, y)\n"
    "Conditions: x > y, x >= y, x < y, x <= y, x == y, is_missing(x), and, or, not.\n"
    "A categorical column may only be compared with a quoted category inside a condition,\n"
    "e.g. if(col(sex) == \"F\", 1, 0). The outcome column must not be referenced.";

}  // namespace

std::string_view to_string(RejectReason reason) {
  return reason == RejectReason::invalid ? "invalid" : "no_improvement";
}

bool MemoryBank::seen(std::string_view program) const {
  const auto key = trim(program);
  for (const auto& e : accepted) {
    if (trim(e.program) == key) return true;
  }
  for (const auto& e : rejected) {
    if (trim(e.program) == key) return true;
  }
  return false;
}

MemoryBlocks render_memory(const MemoryBank& memory, std::size_t cap) {
  MemoryBlocks out;
  std::size_t shown = 0;
  for (auto it = memory.accepted.rbegin(); it != memory.accepted.rend() && shown < cap; ++it, ++shown) {
    out.accepted += entry_label(it->name, it->rationale) + " (validation gain " + signed4(it->validation_gain) + ")\n";
  }
  shown = 0;
  for (auto it = memory.rejected.rbegin(); it != memory.rejected.rend() && shown < cap; ++it, ++shown) {
    std::string line = entry_label(it->name, it->rationale) + " [" + std::string(to_string(it->reason));
    if (!it->detail.empty()) line += ": " + it->detail;
    if (it->metric_delta) line += ", validation change " + signed4(*it->metric_delta);
    out.failed += line + "]\n";
  }
  if (out.accepted.empty()) out.accepted = "(none yet)\n";
  if (out.failed.empty()) out.failed = "(none yet)\n";
  return out;
}

std::string to_json(const MemoryBank& memory) {
  nlohmann::json accepted = nlohmann::json::array();
  for (const auto& e : memory.accepted) {
    accepted.push_back(
        {{"program", e.program}, {"name", e.name}, {"rationale", e.rationale}, {"validation_gain", e.validation_gain}});
  }
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& e : memory.rejected) {
    rejected.push_back({{"program", e.program},
                        {"name", e.name},
                        {"rationale", e.rationale},
                        {"reason", std::string(to_string(e.reason))},
                        {"detail", e.detail},
                        {"metric_delta", e.metric_delta ? nlohmann::json(*e.metric_delta) : nlohmann::json()}});
  }
  nlohmann::json doc{{"format", "medfeat.memory"}, {"version", 1}, {"accepted", accepted}, {"rejected", rejected}};
  return doc.dump(1) + "\n";
}

MemoryBank memory_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("format") != "medfeat.memory" || doc.at("version") != 1) throw DataError("not a medfeat memory file");
    MemoryBank out;
    for (const auto& e : doc.at("accepted")) {
      out.accepted.push_back({e.at("program"), e.at("name"), e.at("rationale"), e.at("validation_gain")});
    }
    for (const auto& e : doc.at("rejected")) {
      RejectedEntry r{e.at("program"), e.at("name"), e.at("rationale"), RejectReason::invalid, e.at("detail"), {}};
      const std::string reason = e.at("reason");
      if (reason == "no_improvement") {
        r.reason = RejectReason::no_improvement;
      } else if (reason != "invalid") {
        throw DataError("unknown rejection reason '" + reason + "'");
      }
      if (!e.at("metric_delta").is_null()) r.metric_delta = e.at("metric_delta").get<double>();
      out.rejected.push_back(std::move(r));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed memory file: ") + e.what());
  }
}

void save_memory(const MemoryBank& memory, const std::filesystem::path& path) { write_file(path, to_json(memory)); }

MemoryBank load_memory(const std::filesystem::path& path) { return memory_from_json(read_file(path)); }

// --- prompts ------------------------------------------------------------------

std::string PromptBundle::render() const {
  std::string out = preamble;
  auto section = [&](std::string_view title, const std::string& body) {
    if (body.empty()) return;
    out += "\n\n## ";
    out += title;
    out += "\n";
    out += body;
  };
  section("Learner guidance", learner_guidance);
  section("Dataset", dataset_description);
  section("Features in this island", feature_listing);
  section("Previously accepted features", accepted_block);
  section("Previously rejected features", failed_block);
  section("Output format", output_contract);
  out += "\n";
  return out;
}

PromptBundle build_prompt(const islands::Island& island, const explain::ImportanceVector& importance,
                          const MemoryBank& memory, learners::LearnerKind kind, std::string_view task_description,
                          std::span<const ColumnSchema> schema, const PromptOptions& options) {
  if (island.groups.empty()) throw ConfigError("cannot build a prompt for an empty island");
  PromptBundle p;

  p.preamble = "You are a clinician-epidemiologist and data scientist. Design one new feature for a binary clinical "
               "prediction task. The feature should complement ";
  p.preamble += options.model_awareness ? "a " + learner_name(kind) + " model" : std::string("the downstream model");
  p.preamble += " trained on the existing features.\n\nTask: ";
  p.preamble += task_description.empty() ? std::string_view("predict the outcome described below") : task_description;
  p.preamble +=
      "\n\nPrinciples:\n"
      "- Justify the feature clinically in a short rationale.\n"
      "- Use only the columns listed below.\n"
      "- Prefer information the model cannot easily derive by itself.\n";
  if (options.show_importance) {
    p.preamble += "- Importance scores show how much the current model relies on each feature; use them to decide "
                  "where new signal is most likely to help.\n";
  }

  if (options.model_awareness) {
    if (kind == learners::LearnerKind::logreg) {
      p.learner_guidance =
          "The model is logistic regression. Its decision function is linear in the inputs, so it cannot represent "
          "curvature or interactions on its own. Propose nonlinear transformations, interaction terms, and composite "
          "features that a linear model cannot build from the raw columns.\n";
    } else {
      p.learner_guidance =
          "The model is a gradient-boosted tree ensemble. Its splits already capture thresholds and simple "
          "interactions, but each split looks at one column of one row. Propose complex temporal patterns, global "
          "statistics, and context-driven interactions that are hard for trees to learn. Avoid simple thresholding, "
          "trivial interactions, naive scaling, and patterns that use a single time point.\n";
    }
  }

  for (const auto& c : schema) {
    if (!c.is_label) continue;
    p.dataset_description += "Outcome: " + c.name;
    if (!c.description.empty()) p.dataset_description += " (" + c.description + ")";
    p.dataset_description += ", binary\n";
  }
  p.dataset_description += "Columns available in this island:\n";
  for (const auto& name : island.columns) {
    const ColumnSchema* c = lookup(schema, name);
    if (!c || c->is_label) continue;
    std::string line = "- " + c->name + " (" + std::string(to_string(c->kind));
    if (c->temporal_group) {
      line += ", temporal group " + c->temporal_group->group_id + " at time " + format_double(c->temporal_group->time_offset);
    }
    line += ")";
    if (!c->description.empty()) line += ": " + c->description;
    p.dataset_description += line + "\n";
  }

  const std::size_t total = importance.entries.size();
  for (const auto& g : island.groups) {
    std::string line = "- " + g.group_id;
    if (g.is_temporal) {
      line += " (temporal group:";
      for (std::size_t i = 0; i < g.member_columns.size(); ++i) line += (i ? ", " : " ") + g.member_columns[i];
      line += ")";
    }
    if (options.show_importance) {
      const auto it = importance.entries.find(g.group_id);
      const double v = it == importance.entries.end() ? 0.0 : it->second.normalized;
      const std::size_t rank = it == importance.entries.end() ? total : static_cast<std::size_t>(it->second.rank);
      line += ", importance: " + fixed4(v) + ", ranking " + std::to_string(rank) + " among " + std::to_string(total) +
              " features";
    }
    p.feature_listing += line + "\n";
  }

  p.output_contract = kOutputContract;
  p.output_contract += "\n";

  // Shrink the memory blocks until the rendered prompt fits the budget.
  std::size_t cap = options.memory_cap;
  while (true) {
    const auto blocks = render_memory(memory, cap);
    p.accepted_block = blocks.accepted;
    p.failed_block = blocks.failed;
    if (cap == 0 || p.render().size() <= options.max_chars) break;
    --cap;
  }
  return p;
}

// --- offline proposer ---------------------------------------------------------

std::string offline_propose(const islands::Island& island, const MemoryBank& memory, learners::LearnerKind kind,
                            std::span<const ColumnSchema> schema, std::uint64_t seed) {
  if (island.groups.empty()) throw ConfigError("cannot propose for an empty island");

  // Island columns in schema order keep the templates independent of draw order.
  std::vector<std::string> numeric;
  std::vector<std::string> static_numeric;
  for (const auto& c : schema) {
    if (c.is_label || c.kind == ColumnKind::categorical || !plain_identifier(c.name)) continue;
    if (std::find(island.columns.begin(), island.columns.end(), c.name) == island.columns.end()) continue;
    numeric.push_back(c.name);
    if (!c.temporal_group) static_numeric.push_back(c.name);
  }
  std::vector<std::string> temporal;
  for (const auto& c : schema) {
    if (!c.temporal_group || !plain_identifier(c.temporal_group->group_id)) continue;
    const auto& id = c.temporal_group->group_id;
    const bool in_island = std::any_of(island.groups.begin(), island.groups.end(),
                                       [&](const FeatureGroup& g) { return g.is_temporal && g.group_id == id; });
    if (in_island && std::find(temporal.begin(), temporal.end(), id) == temporal.end()) temporal.push_back(id);
  }

  std::vector<std::string> templates;
  if (kind == learners::LearnerKind::logreg) {
    // Centered products first: a raw product of uncentered columns needs large,
    // heavily penalized coefficients to cancel its linear parts.
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      for (std::size_t j = i + 1; j < numeric.size(); ++j) {
        templates.push_back("feature " + slug(numeric[i]) + "_x_" + slug(numeric[j]) + "_norm = (" + zscore(numeric[i]) +
                            ") * (" + zscore(numeric[j]) + ")");
      }
    }
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      for (std::size_t j = i + 1; j < numeric.size(); ++j) {
        templates.push_back("feature " + slug(numeric[i]) + "_x_" + slug(numeric[j]) + " = col(" + numeric[i] +
                            ") * col(" + numeric[j] + ")");
      }
    }
    for (const auto& c : numeric) {
      templates.push_back("feature " + slug(c) + "_high = if(col(" + c + ") > trainmedian(col(" + c + ")), 1, 0)");
    }
  } else {
    for (const char* fn : {"gslope", "gdelta", "gstd"}) {
      for (const auto& g : temporal) {
        templates.push_back("feature " + slug(g) + "_" + std::string(fn + 1) + " = " + fn + "(" + g + ")");
      }
    }
    auto zsum = [&](const std::vector<std::string>& cols) {
      std::string name;
      std::string body;
      for (std::size_t i = 0; i < cols.size(); ++i) {
        name += slug(cols[i]) + "_";
        body += (i ? " + " : "") + zscore(cols[i]);
      }
      return "feature " + name + "zsum = " + body;
    };
    if (static_numeric.size() > 2) templates.push_back(zsum(static_numeric));
    for (std::size_t i = 0; i < static_numeric.size(); ++i) {
      for (std::size_t j = i + 1; j < static_numeric.size(); ++j) templates.push_back(zsum({static_numeric[i], static_numeric[j]}));
    }
  }

  const std::size_t n = templates.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& candidate = templates[(seed % n + k) % n];
    if (!memory.seen(candidate)) return candidate;
  }
  std::string ids;
  for (const auto& g : island.groups) ids += (ids.empty() ? "" : ", ") + g.group_id;
  throw IslandExhausted("offline templates exhausted for island {" + ids + "}");
}

std::string OfflineProposer::propose(const ProposalRequest& request) {
  return offline_propose(request.island, request.memory, request.kind, request.schema, request.seed);
}

std::string extract_fenced_block(std::string_view response) {
  const auto open = response.find("```");
  if (open == std::string_view::npos) throw GenerationFailure("response contains no fenced code block");
  // Skip an optional info string on the opening fence line.
  auto body_start = response.find('\n', open + 3);
  if (body_start == std::string_view::npos) throw GenerationFailure("unterminated fenced code block");
  ++body_start;
  const auto close = response.find("```", body_start);
  if (close == std::string_view::npos) throw GenerationFailure("unterminated fenced code block");
  const auto body = trim(response.substr(body_start, close - body_start));
  if (body.empty()) throw GenerationFailure("fenced code block is empty");
  return std::string(body);
}

}  // namespace medfeat::proposer
