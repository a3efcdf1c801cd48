// Copyright 2026 The curatune Authors.
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

#include <gtest/gtest.h>

#include <algorithm>
#include <thread>

#include "curatune/eval/service.hpp"
#include "eval_fixtures.hpp"
#include "support.hpp"

using namespace curatune;
using namespace curatune::eval;

namespace {

ComparisonTask one_task(Metric m, bool a_is_x) {
  ComparisonTask t;
  t.task_id = make_task_id(m, "p1");
  t.prompt_id = "p1";
  t.metric = m;
  t.required = required_judgments(m);
  t.assignment = a_is_x ? ModelAssignment{"model_x", "model_y", "x.png", "y.png"}
                        : ModelAssignment{"model_y", "model_x", "y.png", "x.png"};
  return t;
}

std::vector<PreferenceJudgment> verdicts(const ComparisonTask& t, std::vector<std::string> vs) {
  std::vector<PreferenceJudgment> out;
  for (std::size_t i = 0; i < vs.size(); ++i) out.push_back({t.task_id, "a" + std::to_string(i), vs[i], ""});
  return out;
}

std::optional<Outcome> outcome_of(Metric m, bool a_is_x, std::vector<std::string> vs) {
  const auto t = one_task(m, a_is_x);
  return aggregate_task(t, verdicts(t, std::move(vs)), "model_x").outcome;
}

}  // namespace

TEST(EvalAggregation, PluralityAndTieRules) {
  const auto VA = Metric::VisualAppeal;
  EXPECT_EQ(outcome_of(VA, true, {"A", "A", "A", "B", "B"}), Outcome::XWins);
  EXPECT_EQ(outcome_of(VA, false, {"A", "A", "A", "B", "B"}), Outcome::YWins);
  EXPECT_EQ(outcome_of(VA, true, {"A", "A", "B", "B", "Tie"}), Outcome::Tie);  // plurality tie
  EXPECT_EQ(outcome_of(VA, true, {"Tie", "Tie", "Tie", "A", "B"}), Outcome::Tie);
  EXPECT_EQ(outcome_of(VA, true, {"A", "A", "Tie", "Tie", "B"}), Outcome::Tie);
  EXPECT_EQ(outcome_of(VA, true, {"B", "B", "Tie", "A", "B"}), Outcome::YWins);
  EXPECT_FALSE(outcome_of(VA, true, {"A", "A", "A", "A"}).has_value());  // pending
}

TEST(EvalAggregation, BothAndNeitherMapToTie) {
  const auto TF = Metric::TextFaithfulness;
  EXPECT_EQ(outcome_of(TF, true, {"Both", "Both", "A"}), Outcome::Tie);
  EXPECT_EQ(outcome_of(TF, true, {"Neither", "Neither", "A"}), Outcome::Tie);
  EXPECT_EQ(outcome_of(TF, true, {"Both", "Neither", "B"}), Outcome::Tie);
  EXPECT_EQ(outcome_of(TF, true, {"A", "B", "Both"}), Outcome::Tie);
  EXPECT_EQ(outcome_of(TF, true, {"A", "A", "Neither"}), Outcome::XWins);
  // The mapping is exact: replacing every Both/Neither with Tie (on a VA-like
  // tally) gives the same tally.
  const auto t = one_task(TF, true);
  const auto tally = aggregate_task(t, verdicts(t, {"Both", "Neither", "A"}), "model_x");
  EXPECT_EQ(tally.votes_tie, 2);
  EXPECT_EQ(tally.votes_x, 1);
}

TEST(EvalAggregation, InvalidInputsAreRejected) {
  const auto va = one_task(Metric::VisualAppeal, true);
  const auto tf = one_task(Metric::TextFaithfulness, true);
  EXPECT_THROW(aggregate_task(va, verdicts(va, {"Both", "A", "A", "A", "A"}), "model_x"), DataError);
  EXPECT_THROW(aggregate_task(tf, verdicts(tf, {"Tie", "A", "A"}), "model_x"), DataError);
  EXPECT_THROW(aggregate_task(va, verdicts(va, {"A"}), "someone_else"), DataError);
  auto dup = verdicts(va, {"A", "A"});
  dup[1].annotator_id = dup[0].annotator_id;
  EXPECT_THROW(aggregate_task(va, dup, "model_x"), DataError);
  auto foreign = verdicts(va, {"A"});
  foreign[0].task_id = "other";
  EXPECT_THROW(aggregate_task(va, foreign, "model_x"), DataError);
  EXPECT_THROW(parse_metric("beauty"), DataError);
}

TEST(EvalReport, PercentRoundingIsHalfUp) {
  EXPECT_EQ(percent_one_decimal(684, 1000), 68.4);
  EXPECT_EQ(percent_one_decimal(1, 2000), 0.1);  // 0.05 rounds up
  EXPECT_EQ(percent_one_decimal(1, 3), 33.3);
  EXPECT_EQ(percent_one_decimal(2, 3), 66.7);
  EXPECT_EQ(percent_one_decimal(0, 7), 0.0);
  EXPECT_EQ(percent_one_decimal(7, 7), 100.0);
  EXPECT_THROW(percent_one_decimal(1, 0), DataError);
}

TEST(EvalReport, ReproducesPublishedRowsFromConstructedLogs) {
  struct Row {
    double w, t, l;
  };
  const std::vector<Row> rows{{68.4, 2.1, 29.5}, {60.3, 1.5, 38.2}, {63.2, 1.9, 35.0}, {67.0, 2.6, 30.4},
                              {24.8, 1.4, 73.9}};
  std::uint64_t seed = 1;
  for (const auto& r : rows) {
    const auto counts = testutil::find_counts(r.w, r.t, r.l);
    ASSERT_TRUE(counts) << r.w;
    const auto prompts = testutil::make_prompts(static_cast<std::size_t>(counts->n()), seed);
    const auto tasks = testutil::make_tasks(prompts, Metric::VisualAppeal, seed);
    const auto log = testutil::make_log(tasks, testutil::spread_outcomes(*counts, seed), "model_x", seed);
    const auto rep = report_from_log(tasks, prompts, log, ModelPair{});
    const auto& row = rep.row(kSourceParti, Metric::VisualAppeal, kSliceAll);
    EXPECT_EQ(row.n_tasks, counts->n());
    EXPECT_EQ(*row.win_pct, r.w);
    EXPECT_EQ(*row.tie_pct, r.t);
    EXPECT_EQ(*row.lose_pct, r.l);
    EXPECT_EQ(rep.pending_tasks, 0);
    ++seed;
  }
}

TEST(EvalReport, LabelSwapAndPermutationProperties) {
  const auto prompts = testutil::make_prompts(40, 5);
  auto tasks = testutil::make_tasks(prompts, Metric::VisualAppeal, 5);
  const auto tf = testutil::make_tasks(prompts, Metric::TextFaithfulness, 5);
  tasks.insert(tasks.end(), tf.begin(), tf.end());
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto log = testutil::random_log(tasks, rng);
    const auto base = report_from_log(tasks, prompts, log, ModelPair{});
    // Swapping verdict labels with the assignment fixed exchanges wins and losses.
    const auto swapped = report_from_log(tasks, prompts, testutil::swap_verdicts(log), ModelPair{});
    ASSERT_EQ(base.rows.size(), swapped.rows.size());
    for (std::size_t i = 0; i < base.rows.size(); ++i) {
      EXPECT_EQ(base.rows[i].wins, swapped.rows[i].losses);
      EXPECT_EQ(base.rows[i].losses, swapped.rows[i].wins);
      EXPECT_EQ(base.rows[i].ties, swapped.rows[i].ties);
      EXPECT_EQ(base.rows[i].win_pct, swapped.rows[i].lose_pct);
    }
    // Swapping both the labels and the hidden sides leaves the report unchanged.
    const auto both = report_from_log(testutil::swap_sides(tasks), prompts, testutil::swap_verdicts(log), ModelPair{});
    EXPECT_EQ(nlohmann::json(both).dump(), nlohmann::json(base).dump());
    // Log order is irrelevant.
    auto shuffled = log;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(nlohmann::json(report_from_log(tasks, prompts, shuffled, ModelPair{})).dump(),
              nlohmann::json(base).dump());
  }
}

TEST(EvalReport, SlicesAndPending) {
  auto prompts = testutil::make_prompts(60, 3);
  const auto oui = testutil::make_prompts(40, 4, kSourceOui);
  prompts.insert(prompts.end(), oui.begin(), oui.end());
  const auto tasks = testutil::make_tasks(prompts, Metric::VisualAppeal, 3);
  std::vector<Outcome> outs(tasks.size(), Outcome::XWins);
  auto log = testutil::make_log(tasks, outs, "model_x", 3);
  // Drop one judgment of the first task: it becomes pending.
  const auto first = tasks.front().task_id;
  log.erase(std::find_if(log.begin(), log.end(), [&](const auto& j) { return j.task_id == first; }));
  const auto rep = report_from_log(tasks, prompts, log, ModelPair{});
  EXPECT_EQ(rep.pending_tasks, 1);
  std::int64_t stylized = 0;
  for (const auto& p : prompts) stylized += p.stylized;
  const auto& all_p = rep.row(kSourceParti, Metric::VisualAppeal, kSliceAll);
  const auto& all_o = rep.row(kSourceOui, Metric::VisualAppeal, kSliceAll);
  EXPECT_EQ(all_p.n_tasks + all_o.n_tasks, 99);
  const auto& st_p = rep.row(kSourceParti, Metric::VisualAppeal, kSliceStylized);
  const auto& st_o = rep.row(kSourceOui, Metric::VisualAppeal, kSliceStylized);
  EXPECT_GT(st_p.n_tasks + st_o.n_tasks, 0);
  EXPECT_LE(st_p.n_tasks + st_o.n_tasks, stylized);
  EXPECT_EQ(*all_p.win_pct, 100.0);
  const auto& empty = rep.row(kSourceParti, Metric::TextFaithfulness, kSliceAll);
  EXPECT_EQ(empty.n_tasks, 0);
  EXPECT_FALSE(empty.win_pct.has_value());
  EXPECT_THROW(compute_report({}, {"weird"}), ConfigError);
  EXPECT_THROW(rep.row("nope", Metric::VisualAppeal, kSliceAll), NotFoundError);
  auto bad = log;
  bad.push_back({"va-unknown", "r", "A", ""});
  EXPECT_THROW(report_from_log(tasks, prompts, bad, ModelPair{}), DataError);
}

TEST(EvalTasks, BuildIsBlindBalancedAndValidated) {
  const auto prompts = testutil::make_prompts(400, 8);
  const ModelPair models{"tuned", "baseline"};
  const auto tasks = testutil::make_tasks(prompts, Metric::TextFaithfulness, 8, models);
  ASSERT_EQ(tasks.size(), 400u);
  int a_is_x = 0;
  for (const auto& t : tasks) {
    EXPECT_EQ(t.required, 3);
    a_is_x += t.assignment.model_a == "tuned";
    const std::string visible = visible_payload(t).dump();
    EXPECT_EQ(visible.find("tuned"), std::string::npos);
    EXPECT_EQ(visible.find("baseline"), std::string::npos);
    EXPECT_EQ(visible.find(".png"), std::string::npos);
    EXPECT_FALSE(t.caption.empty());
  }
  EXPECT_GT(a_is_x, 150);
  EXPECT_LT(a_is_x, 250);
  EXPECT_EQ(testutil::make_tasks(prompts, Metric::TextFaithfulness, 8, models), tasks);

  std::map<std::string, std::string> xi, yi;
  for (const auto& p : prompts) xi[p.id] = yi[p.id] = "img.png";
  EXPECT_THROW(build_task_set(prompts, xi, yi, Metric::VisualAppeal, 1, {"same", "same"}), ConfigError);
  auto missing = yi;
  missing.erase(prompts[0].id);
  EXPECT_THROW(build_task_set(prompts, xi, missing, Metric::VisualAppeal, 1), DataError);
  auto extra = yi;
  extra["stray"] = "s.png";
  EXPECT_THROW(build_task_set(prompts, xi, extra, Metric::VisualAppeal, 1), DataError);
  auto dup = prompts;
  dup.push_back(prompts[0]);
  EXPECT_THROW(build_task_set(dup, xi, yi, Metric::VisualAppeal, 1), DataError);
  auto badcat = prompts;
  badcat[0].concept_category = "unregistered";
  EXPECT_THROW(build_task_set(badcat, xi, yi, Metric::VisualAppeal, 1), DataError);
}

TEST(EvalPrompts, GeneratorMatchesTargetHistogram) {
  const auto ps = generate_oui_like_prompts(2100, 1);
  ASSERT_EQ(ps.size(), 2100u);
  const auto chk = validate_prompt_distribution(ps, default_taxonomy(), 0.01);
  EXPECT_TRUE(chk.pass) << chk.l1;
  std::int64_t stylized = 0;
  for (const auto& p : ps) {
    EXPECT_NO_THROW(validate_prompt(p));
    stylized += p.stylized;
  }
  EXPECT_EQ(stylized, 315);  // 15%
  EXPECT_EQ(generate_oui_like_prompts(2100, 1), ps);
  // A skewed set fails the check.
  auto skew = ps;
  for (auto& p : skew) p.concept_category = "people";
  EXPECT_FALSE(validate_prompt_distribution(skew, default_taxonomy(), 0.1).pass);
  EXPECT_THROW(validate_prompt_distribution({}, default_taxonomy(), 0.1), DataError);
}

namespace {

std::filesystem::path make_eval_dir(const std::string& name, std::size_t n, Metric m, double timeout = 600.0) {
  const auto dir = testutil::scratch_dir(name);
  const auto prompts = testutil::make_prompts(n, 2);
  write_eval_state(dir, prompts, testutil::make_tasks(prompts, m, 2), ModelPair{}, 2, timeout);
  return dir;
}

}  // namespace

TEST(EvalService, ClaimsSlotsAndConflicts) {
  const auto dir = make_eval_dir("eval_svc", 1, Metric::TextFaithfulness);
  double now = 0.0;
  EvalService svc(dir, [&] { return now; });
  EXPECT_EQ(svc.next_task("").status, 400);
  const auto r1 = svc.next_task("a1");
  ASSERT_EQ(r1.status, 200);
  const std::string id = r1.body["task_id"];
  EXPECT_EQ(svc.next_task("a1").body["task_id"], id);  // idempotent claim
  EXPECT_EQ(svc.next_task("a2").status, 200);
  EXPECT_EQ(svc.next_task("a3").status, 200);
  EXPECT_EQ(svc.next_task("a4").status, 204);  // all three slots claimed
  EXPECT_EQ(svc.submit_judgment("nope", {{"annotator", "a1"}, {"verdict", "A"}}).status, 404);
  EXPECT_EQ(svc.submit_judgment(id, {{"annotator", "a1"}, {"verdict", "Tie"}}).status, 400);
  EXPECT_EQ(svc.submit_judgment(id, {{"verdict", "A"}}).status, 400);
  EXPECT_EQ(svc.submit_judgment(id, {{"annotator", "a4"}, {"verdict", "A"}}).status, 409);  // no slot
  EXPECT_EQ(svc.submit_judgment(id, {{"annotator", "a1"}, {"verdict", "Both"}}).status, 200);
  EXPECT_EQ(svc.submit_judgment(id, {{"annotator", "a1"}, {"verdict", "A"}}).status, 409);  // twice
  now = 10000.0;  // claims of a2/a3 expire
  EXPECT_EQ(svc.next_task("a4").status, 200);
  EXPECT_EQ(svc.submit_judgment(id, {{"annotator", "a4"}, {"verdict", "B"}}).status, 200);
  const auto last = svc.submit_judgment(id, {{"annotator", "a5"}, {"verdict", "Neither"}});
  EXPECT_EQ(last.status, 200);
  EXPECT_EQ(last.body["complete"], true);
  const auto rep = svc.report().body;
  EXPECT_EQ(rep["pending_tasks"], 0);
  EXPECT_EQ(svc.report("bogus").status, 400);
  // Judgments persist across reload.
  EvalService reloaded(dir, [&] { return now; });
  EXPECT_EQ(reloaded.report().body, rep);
  EXPECT_EQ(reloaded.next_task("a6").status, 204);
}

TEST(EvalService, HttpRoundTrip) {
  const auto dir = make_eval_dir("eval_http", 2, Metric::VisualAppeal);
  EvalService svc(dir);
  httplib::Server server;
  register_eval_routes(server, svc);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client cli("127.0.0.1", port);
  auto next = cli.Get("/eval/tasks/next?annotator=alice");
  ASSERT_TRUE(next);
  ASSERT_EQ(next->status, 200);
  const auto payload = nlohmann::json::parse(next->body);
  const std::string id = payload["task_id"];
  EXPECT_EQ(payload.count("caption"), 0u);
  EXPECT_EQ(payload["required_judgments"], 5);
  auto post = cli.Post("/eval/tasks/" + id + "/judgment", nlohmann::json{{"annotator", "alice"}, {"verdict", "A"}}.dump(),
                       "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 200);
  auto again = cli.Post("/eval/tasks/" + id + "/judgment",
                        nlohmann::json{{"annotator", "alice"}, {"verdict", "A"}}.dump(), "application/json");
  ASSERT_TRUE(again);
  EXPECT_EQ(again->status, 409);
  auto bad = cli.Post("/eval/tasks/" + id + "/judgment", "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto img = cli.Get("/eval/tasks/" + id + "/image/a");
  ASSERT_TRUE(img);
  EXPECT_EQ(img->status, 404);  // images were never rendered in this fixture
  auto rep = cli.Get("/eval/report?slice=all");
  ASSERT_TRUE(rep);
  EXPECT_EQ(rep->status, 200);
  EXPECT_EQ(nlohmann::json::parse(rep->body)["pending_tasks"], 2);
  server.stop();
  th.join();
}
