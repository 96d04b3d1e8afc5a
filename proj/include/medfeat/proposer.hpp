#pragma once

// Prompt construction, proposal backends and the accepted/rejected memory.
//
// Prompts carry metadata only: column names, kinds, descriptions, temporal
// layout and importance scores. No cell value or label value is ever rendered.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medfeat/datamodel.hpp"
#include "medfeat/explain.hpp"
#include "medfeat/islands.hpp"
#include "medfeat/learners.hpp"

namespace medfeat::proposer {

// --- memory -------------------------------------------------------------------

enum class RejectReason { invalid, no_improvement };

std::string_view to_string(RejectReason reason);

struct AcceptedEntry {
  std::string program;
  std::string name;
  std::string rationale;
  double validation_gain = 0.0;

  bool operator==(const AcceptedEntry&) const = default;
};

struct RejectedEntry {
  std::string program;
  std::string name;
  std::string rationale;
  RejectReason reason = RejectReason::invalid;
  /// Short machine-readable cause, e.g. "zero_variance" or "parse_error".
  std::string detail;
  std::optional<double> metric_delta;

  bool operator==(const RejectedEntry&) const = default;
};

struct MemoryBank {
  std::vector<AcceptedEntry> accepted;
  std::vector<RejectedEntry> rejected;

  void record_accepted(AcceptedEntry entry) { accepted.push_back(std::move(entry)); }
  void record_rejected(RejectedEntry entry) { rejected.push_back(std::move(entry)); }
  /// True when `program` (compared after trimming) appears in either list.
  bool seen(std::string_view program) const;
  bool operator==(const MemoryBank&) const = default;
};

struct MemoryBlocks {
  std::string accepted;
  std::string failed;
};

/// Newest entries first, at most `cap` per list; names, rationales and reasons only.
MemoryBlocks render_memory(const MemoryBank& memory, std::size_t cap = 10);

std::string to_json(const MemoryBank& memory);
MemoryBank memory_from_json(std::string_view text);
void save_memory(const MemoryBank& memory, const std::filesystem::path& path);
MemoryBank load_memory(const std::filesystem::path& path);

// --- prompts ------------------------------------------------------------------

struct PromptOptions {
  /// Include the learner-specific guidance block.
  bool model_awareness = true;
  /// Include importance scores and rankings in the feature listing.
  bool show_importance = true;
  std::size_t memory_cap = 10;
  /// Upper bound on the rendered length; memory entries are dropped (oldest first) to fit.
  std::size_t max_chars = 24000;
};

struct PromptBundle {
  std::string preamble;
  std::string learner_guidance;  // empty when model awareness is off
  std::string dataset_description;
  std::string feature_listing;
  std::string accepted_block;
  std::string failed_block;
  std::string output_contract;

  std::string render() const;
  bool operator==(const PromptBundle&) const = default;
};

PromptBundle build_prompt(const islands::Island& island, const explain::ImportanceVector& importance,
                          const MemoryBank& memory, learners::LearnerKind kind, std::string_view task_description,
                          std::span<const ColumnSchema> schema, const PromptOptions& options = {});

// --- proposers ----------------------------------------------------------------

struct ProposalRequest {
  const PromptBundle& prompt;
  const islands::Island& island;
  /// Run memory merged with the island's scratch failures.
  const MemoryBank& memory;
  learners::LearnerKind kind;
  std::span<const ColumnSchema> schema;
  std::uint64_t seed = 0;
};

class Proposer {
 public:
  virtual ~Proposer() = default;
  /// Returns one program text. Throws GenerationFailure (or IslandExhausted).
  virtual std::string propose(const ProposalRequest& request) = 0;
  /// Recorded in transformation provenance.
  virtual std::string name() const = 0;
};

/// Deterministic template chooser standing in for the language model.
std::string offline_propose(const islands::Island& island, const MemoryBank& memory, learners::LearnerKind kind,
                            std::span<const ColumnSchema> schema, std::uint64_t seed);

class OfflineProposer final : public Proposer {
 public:
  std::string propose(const ProposalRequest& request) override;
  std::string name() const override { return "offline"; }
};

/// First fenced code block of a response, stripped. Throws GenerationFailure when absent.
std::string extract_fenced_block(std::string_view response);

struct HttpConfig {
  /// Full URL of a chat-completions endpoint, e.g. https://host/v1/chat/completions.
  std::string endpoint;
  std::string model = "gpt-4o";
  double temperature = 0.7;
  double timeout_seconds = 120.0;
  int max_retries = 2;
  double backoff_seconds = 1.0;
};

/// Name of the environment variable holding the bearer token.
inline constexpr const char* kApiKeyEnv = "MEDFEAT_API_KEY";

class HttpChatProposer final : public Proposer {
 public:
  explicit HttpChatProposer(HttpConfig config);
  std::string propose(const ProposalRequest& request) override;
  std::string name() const override { return "http_chat:" + config_.model; }
  /// Sends the prompt and returns the raw assistant message.
  std::string complete(const PromptBundle& prompt);
  int requests_sent() const { return requests_sent_; }

 private:
  HttpConfig config_;
  int requests_sent_ = 0;
};

}  // namespace medfeat::proposer
