#include "medfeat/proposer.hpp"

#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>

#include <cstdlib>
#include <thread>

#include "medfeat/error.hpp"
#include "medfeat/fdsl.hpp"
#include "medfeat/random.hpp"
#include "support.hpp"

namespace medfeat::proposer {
namespace {

using learners::LearnerKind;
using testing::label_schema;

std::vector<ColumnSchema> panel_schema() {
  return {ColumnSchema{"age", ColumnKind::numeric, "age at admission in years", std::nullopt, false},
          ColumnSchema{"imd", ColumnKind::numeric, "index of multiple deprivation score", std::nullopt, false},
          ColumnSchema{"sex", ColumnKind::categorical, "recorded sex", std::nullopt, false},
          ColumnSchema{"hr_0", ColumnKind::numeric, "heart rate", TemporalTag{"hr", 0}, false},
          ColumnSchema{"hr_1", ColumnKind::numeric, "heart rate", TemporalTag{"hr", 6}, false},
          ColumnSchema{"hr_2", ColumnKind::numeric, "heart rate", TemporalTag{"hr", 12}, false},
          ColumnSchema{"y", ColumnKind::binary, "in-hospital mortality", std::nullopt, true}};
}

FeatureGroup single(std::string name) { return FeatureGroup{name, {name}, false}; }
FeatureGroup hr_group() { return FeatureGroup{"hr", {"hr_0", "hr_1", "hr_2"}, true}; }

explain::ImportanceVector panel_importance() {
  return explain::normalize(std::map<std::string, double>{{"age", 4}, {"imd", 2}, {"sex", 1}, {"hr", 3}});
}

TEST(Memory, EmptyBlocksSayNoneYet) {
  const auto blocks = render_memory({});
  EXPECT_EQ(blocks.accepted, "(none yet)\n");
  EXPECT_EQ(blocks.failed, "(none yet)\n");
  const auto island = islands::make_island({single("age")}, 0, 0);
  const auto prompt = build_prompt(island, panel_importance(), {}, LearnerKind::logreg, "mortality", panel_schema());
  EXPECT_EQ(prompt.accepted_block, "(none yet)\n");
  EXPECT_EQ(prompt.failed_block, "(none yet)\n");
}

TEST(Memory, RenderShowsNewestFirstCappedAtTen) {
  MemoryBank m;
  for (int i = 0; i < 12; ++i) {
    m.record_rejected({"feature f" + std::to_string(i) + " = col(age)", "f" + std::to_string(i), "reason " + std::to_string(i),
                       RejectReason::no_improvement, "", -0.001 * i});
  }
  m.record_accepted({"feature good = col(age) * col(imd)", "good", "deprivation modifies age risk", 0.022});
  const auto blocks = render_memory(m);
  EXPECT_EQ(blocks.accepted, "- good: deprivation modifies age risk (validation gain +0.0220)\n");
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < blocks.failed.size()) {
    const auto end = blocks.failed.find('\n', start);
    lines.push_back(blocks.failed.substr(start, end - start));
    start = end + 1;
  }
  ASSERT_EQ(lines.size(), 10u);
  EXPECT_EQ(lines.front(), "- f11: reason 11 [no_improvement, validation change -0.0110]");
  EXPECT_EQ(lines.back(), "- f2: reason 2 [no_improvement, validation change -0.0020]");
  // Program bodies stay out of the prompt.
  EXPECT_EQ(blocks.failed.find("col("), std::string::npos);
}

TEST(Memory, ReloadReproducesRenderByteIdentically) {
  MemoryBank m;
  m.record_accepted({"feature a = col(x) * col(z)", "a", "line one\nline two", 0.1 + 0.2});
  m.record_rejected({"feature b = col(x)", "b", "", RejectReason::invalid, "zero_variance", std::nullopt});
  m.record_rejected({"feature c = col(z)", "c", "why", RejectReason::no_improvement, "", 1.0 / 3.0});
  testing::TempDir dir("memory");
  save_memory(m, dir / "memory.json");
  const auto back = load_memory(dir / "memory.json");
  EXPECT_EQ(back, m);
  EXPECT_EQ(to_json(back), to_json(m));
  const auto a = render_memory(m);
  const auto b = render_memory(back);
  EXPECT_EQ(a.accepted, b.accepted);
  EXPECT_EQ(a.failed, b.failed);
  EXPECT_TRUE(back.seen("  feature c = col(z)\n"));
  EXPECT_FALSE(back.seen("feature d = col(z)"));
}

TEST(Prompt, LearnerGuidanceFollowsKind) {
  const auto island = islands::make_island({single("age"), hr_group()}, 0, 0);
  const auto gbdt = build_prompt(island, panel_importance(), {}, LearnerKind::gbdt, "mortality", panel_schema()).render();
  EXPECT_NE(gbdt.find("complex temporal patterns, global statistics, and context-driven interactions"), std::string::npos);
  EXPECT_NE(gbdt.find("Avoid simple thresholding, trivial interactions"), std::string::npos);
  EXPECT_EQ(gbdt.find("nonlinear transformations, interaction terms, and composite features"), std::string::npos);

  const auto lr = build_prompt(island, panel_importance(), {}, LearnerKind::logreg, "mortality", panel_schema()).render();
  EXPECT_NE(lr.find("nonlinear transformations, interaction terms, and composite features"), std::string::npos);
  EXPECT_EQ(lr.find("complex temporal patterns"), std::string::npos);

  PromptOptions blind;
  blind.model_awareness = false;
  const auto none = build_prompt(island, panel_importance(), {}, LearnerKind::gbdt, "mortality", panel_schema(), blind);
  EXPECT_TRUE(none.learner_guidance.empty());
  EXPECT_EQ(none.render().find("## Learner guidance"), std::string::npos);
  EXPECT_EQ(none.render().find("tree"), std::string::npos);
}

TEST(Prompt, ImportanceLinesMatchLogFormat) {
  const auto island = islands::make_island({single("age"), hr_group()}, 0, 0);
  const auto p = build_prompt(island, panel_importance(), {}, LearnerKind::logreg, "mortality", panel_schema());
  EXPECT_EQ(p.feature_listing,
            "- age, importance: 0.4000, ranking 1 among 4 features\n"
            "- hr (temporal group: hr_0, hr_1, hr_2), importance: 0.3000, ranking 2 among 4 features\n");
  PromptOptions plain;
  plain.show_importance = false;
  const auto q = build_prompt(island, panel_importance(), {}, LearnerKind::logreg, "mortality", panel_schema(), plain);
  EXPECT_EQ(q.feature_listing, "- age\n- hr (temporal group: hr_0, hr_1, hr_2)\n");
  EXPECT_EQ(q.render().find("importance"), std::string::npos);
  EXPECT_EQ(q.render().find("ranking"), std::string::npos);
}

TEST(Prompt, ListsOnlyIslandColumns) {
  const auto island = islands::make_island({single("imd")}, 0, 0);
  const auto p = build_prompt(island, panel_importance(), {}, LearnerKind::logreg, "mortality", panel_schema());
  EXPECT_NE(p.dataset_description.find("- imd (numeric): index of multiple deprivation score"), std::string::npos);
  EXPECT_NE(p.dataset_description.find("Outcome: y (in-hospital mortality)"), std::string::npos);
  for (const char* other : {"age", "sex", "hr_0", "heart rate"}) {
    EXPECT_EQ(p.dataset_description.find(other), std::string::npos) << other;
    EXPECT_EQ(p.feature_listing.find(other), std::string::npos) << other;
  }
}

TEST(Prompt, ExtraFeaturesOutsideIslandDoNotGrowPrompt) {
  auto schema = panel_schema();
  const auto island = islands::make_island({single("age"), single("imd")}, 0, 0);
  std::map<std::string, double> raw{{"age", 4}, {"imd", 2}, {"sex", 1}, {"hr", 3}};
  const auto base = build_prompt(island, explain::normalize(raw), {}, LearnerKind::logreg, "t", schema).render();
  for (int i = 0; i < 5; ++i) {
    schema.insert(schema.begin(), ColumnSchema{"extra" + std::to_string(i), ColumnKind::numeric, "filler", std::nullopt, false});
    raw["extra" + std::to_string(i)] = 0.5;
  }
  const auto grown = build_prompt(island, explain::normalize(raw), {}, LearnerKind::logreg, "t", schema).render();
  EXPECT_LE(grown.size(), base.size());
  EXPECT_EQ(grown.find("extra"), std::string::npos);
}

TEST(Prompt, BudgetDropsMemoryEntries) {
  MemoryBank m;
  for (int i = 0; i < 10; ++i) {
    m.record_rejected({"feature r" + std::to_string(i) + " = col(age)", "r" + std::to_string(i), std::string(200, 'w'),
                       RejectReason::no_improvement, "", 0.0});
  }
  const auto island = islands::make_island({single("age")}, 0, 0);
  const auto full = build_prompt(island, panel_importance(), m, LearnerKind::logreg, "t", panel_schema());
  PromptOptions tight;
  tight.max_chars = full.render().size() - 500;
  const auto cut = build_prompt(island, panel_importance(), m, LearnerKind::logreg, "t", panel_schema(), tight);
  EXPECT_LE(cut.render().size(), tight.max_chars);
  EXPECT_NE(cut.failed_block.find("- r9:"), std::string::npos);
  EXPECT_EQ(cut.failed_block.find("- r0:"), std::string::npos);
}

TEST(Prompt, SentinelCellValuesNeverReachThePrompt) {
  // Every cell of every column carries a sentinel; the schema is all the prompt sees.
  const std::size_t n = 40;
  std::vector<Column> cols;
  std::vector<FeatureGroup> groups;
  for (int j = 0; j < 8; ++j) {
    const std::string name = "v" + std::to_string(j);
    if (j % 3 == 0) {
      cols.push_back(testing::cat(name, std::vector<std::optional<std::string>>(n, std::string("XQZ913"))));
    } else {
      cols.push_back(testing::num(name, std::vector<std::optional<double>>(n, 987654.321)));
    }
    groups.push_back(single(name));
  }
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i % 2;
  const Dataset d(std::move(cols), label_schema(), y);
  const auto schema = d.schema();
  Rng rng(1);
  std::map<std::string, double> raw;
  for (const auto& g : groups) raw[g.group_id] = rng.uniform01();
  const auto imp = explain::normalize(raw);
  MemoryBank m;
  m.record_rejected({"feature v1_x_v2 = col(v1) * col(v2)", "v1_x_v2", "", RejectReason::no_improvement, "", 0.0});
  for (const auto& island : islands::sample_islands(imp, groups, 100, 3, 5)) {
    const auto text = build_prompt(island, imp, m, LearnerKind::logreg, "task", schema.columns).render();
    EXPECT_EQ(text.find("XQZ913"), std::string::npos);
    EXPECT_EQ(text.find("987654"), std::string::npos);
  }
}

TEST(Offline, FirstTemplateIsCenteredPairwiseProduct) {
  std::vector<ColumnSchema> schema{testing::numeric_schema("age"), testing::numeric_schema("imd"), label_schema()};
  const auto island = islands::make_island({single("imd"), single("age")}, 0, 0);
  MemoryBank m;
  const auto first = offline_propose(island, m, LearnerKind::logreg, schema, 0);
  EXPECT_EQ(first,
            "feature age_x_imd_norm = ((col(age) - trainmean(col(age))) / trainstd(col(age))) * "
            "((col(imd) - trainmean(col(imd))) / trainstd(col(imd)))");
  EXPECT_EQ(offline_propose(island, m, LearnerKind::logreg, schema, 0), first);
  EXPECT_EQ(fdsl::count_stat_nodes(fdsl::parse(first).ast), 4u);

  m.record_rejected({first, "age_x_imd_norm", "", RejectReason::no_improvement, "", 0.0});
  EXPECT_EQ(offline_propose(island, m, LearnerKind::logreg, schema, 0), "feature age_x_imd = col(age) * col(imd)");
}

TEST(Offline, NeverRepeatsRejectedAndThenExhausts) {
  std::vector<ColumnSchema> schema{testing::numeric_schema("a"), testing::numeric_schema("b"),
                                   testing::numeric_schema("c"), label_schema()};
  const auto island = islands::make_island({single("a"), single("b"), single("c")}, 0, 0);
  MemoryBank m;
  std::set<std::string> proposed;
  for (int i = 0; i < 9; ++i) {
    const auto text = offline_propose(island, m, LearnerKind::logreg, schema, 4);
    EXPECT_TRUE(proposed.insert(text).second) << text;
    EXPECT_NO_THROW(fdsl::parse(text));
    m.record_rejected({text, "", "", RejectReason::no_improvement, "", 0.0});
  }
  EXPECT_THROW(offline_propose(island, m, LearnerKind::logreg, schema, 4), IslandExhausted);
}

TEST(Offline, SeedRotatesTemplates) {
  std::vector<ColumnSchema> schema{testing::numeric_schema("a"), testing::numeric_schema("b"), label_schema()};
  const auto island = islands::make_island({single("a"), single("b")}, 0, 0);
  EXPECT_NE(offline_propose(island, {}, LearnerKind::logreg, schema, 0), offline_propose(island, {}, LearnerKind::logreg, schema, 1));
  EXPECT_EQ(offline_propose(island, {}, LearnerKind::logreg, schema, 0), offline_propose(island, {}, LearnerKind::logreg, schema, 4));
}

TEST(Offline, TreeTemplatesUseTemporalAggregates) {
  const auto schema = panel_schema();
  const auto island = islands::make_island({single("age"), hr_group()}, 0, 0);
  const auto program = fdsl::parse(offline_propose(island, {}, LearnerKind::gbdt, schema, 0));
  EXPECT_TRUE(fdsl::contains_op(program.ast, fdsl::Op::g_slope) || fdsl::contains_op(program.ast, fdsl::Op::g_delta));
  EXPECT_EQ(fdsl::referenced_groups(program.ast), (std::vector<std::string>{"hr"}));

  // Without a temporal group the tree family falls back to train-normalized sums.
  const auto statics = islands::make_island({single("age"), single("imd"), single("sex")}, 0, 0);
  const auto sum = fdsl::parse(offline_propose(statics, {}, LearnerKind::gbdt, schema, 0));
  EXPECT_EQ(sum.name, "age_imd_zsum");
  EXPECT_EQ(fdsl::referenced_columns(sum.ast), (std::vector<std::string>{"age", "imd"}));
}

TEST(Offline, CategoricalOnlyIslandIsExhausted) {
  const auto island = islands::make_island({single("sex")}, 0, 0);
  EXPECT_THROW(offline_propose(island, {}, LearnerKind::logreg, panel_schema(), 0), IslandExhausted);
}

TEST(Fence, ExtractsFirstBlockExactly) {
  EXPECT_EQ(extract_fenced_block("Here is my idea.\n```\n# age matters\nfeature f = col(age)\n```\nThanks"),
            "# age matters\nfeature f = col(age)");
  EXPECT_EQ(extract_fenced_block("```dsl\nfeature a = 1\n```\n```\nfeature b = 2\n```"), "feature a = 1");
  EXPECT_THROW(extract_fenced_block("feature f = col(age)"), GenerationFailure);
  EXPECT_THROW(extract_fenced_block("```\nfeature f = 1"), GenerationFailure);
}

class ChatServer {
 public:
  ChatServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      auth_ = req.get_header_value("Authorization");
      body_ = req.body;
      if (hits_ <= failures_) {
        res.status = 503;
        return;
      }
      const nlohmann::json reply{
          {"choices", {{{"message", {{"role", "assistant"}, {"content", "Sure.\n```\nfeature z = col(age)\n```"}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ChatServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  int failures_ = 0;
  int hits_ = 0;
  std::string auth_;
  std::string body_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

PromptBundle tiny_prompt() {
  const auto island = islands::make_island({single("age")}, 0, 0);
  return build_prompt(island, panel_importance(), {}, LearnerKind::logreg, "mortality", panel_schema());
}

TEST(Http, SendsChatRequestWithEnvironmentKeyAndRetries) {
  ChatServer server;
  server.failures_ = 2;
  ::setenv(kApiKeyEnv, "test-key", 1);
  HttpConfig config;
  config.endpoint = server.endpoint();
  config.backoff_seconds = 0;
  config.timeout_seconds = 5;
  HttpChatProposer proposer(config);
  const auto prompt = tiny_prompt();
  const auto island = islands::make_island({single("age")}, 0, 0);
  const MemoryBank memory;
  EXPECT_EQ(proposer.propose({prompt, island, memory, LearnerKind::logreg, panel_schema(), 0}), "feature z = col(age)");
  EXPECT_EQ(server.hits_, 3);
  EXPECT_EQ(proposer.requests_sent(), 3);
  EXPECT_EQ(server.auth_, "Bearer test-key");
  const auto body = nlohmann::json::parse(server.body_);
  EXPECT_EQ(body.at("model"), "gpt-4o");
  EXPECT_EQ(body.at("temperature"), 0.7);
  EXPECT_EQ(body.at("n"), 1);
  EXPECT_EQ(body.at("messages").at(0).at("role"), "system");
  EXPECT_EQ(body.at("messages").at(0).at("content"), prompt.preamble);
  EXPECT_NE(body.at("messages").at(1).at("content").get<std::string>().find("## Output format"), std::string::npos);
  ::unsetenv(kApiKeyEnv);
}

TEST(Http, GivesUpAfterTwoRetries) {
  ChatServer server;
  server.failures_ = 3;
  ::setenv(kApiKeyEnv, "k", 1);
  HttpConfig config;
  config.endpoint = server.endpoint();
  config.backoff_seconds = 0;
  HttpChatProposer proposer(config);
  EXPECT_THROW(proposer.complete(tiny_prompt()), GenerationFailure);
  EXPECT_EQ(server.hits_, 3);
  ::unsetenv(kApiKeyEnv);
}

TEST(Http, TransportFailureIsGenerationFailure) {
  ::setenv(kApiKeyEnv, "k", 1);
  HttpConfig config;
  // Reserved port with nothing listening.
  config.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  config.backoff_seconds = 0;
  config.timeout_seconds = 2;
  HttpChatProposer proposer(config);
  EXPECT_THROW(proposer.complete(tiny_prompt()), GenerationFailure);
  EXPECT_EQ(proposer.requests_sent(), 3);
  ::unsetenv(kApiKeyEnv);
}

TEST(Http, MissingKeyIsAConfigError) {
  ::unsetenv(kApiKeyEnv);
  HttpConfig config;
  config.endpoint = "http://127.0.0.1:1/v1/chat/completions";
  HttpChatProposer proposer(config);
  EXPECT_THROW(proposer.complete(tiny_prompt()), ConfigError);
  EXPECT_EQ(proposer.requests_sent(), 0);
  EXPECT_THROW(HttpChatProposer(HttpConfig{"ftp://x/y"}), ConfigError);
}

}  // namespace
}  // namespace medfeat::proposer
