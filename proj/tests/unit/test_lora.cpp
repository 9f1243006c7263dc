// Copyright 2026 The coldpipe Authors.
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

#include "helpers.hpp"

namespace coldpipe {
namespace {

using testing::make_request;

TEST(Lora, EnqueueRejectsUnknownAdapter) {
  AdapterQueues q;
  const std::set<std::string> known = {"a"};
  EXPECT_TRUE(enqueue_by_adapter(make_request(0, 0, 1, 1, "a"), q, known).accepted);
  EXPECT_TRUE(enqueue_by_adapter(make_request(1, 0, 1, 1), q, known).accepted);
  const auto out = enqueue_by_adapter(make_request(2, 0, 1, 1, "zz"), q, known);
  EXPECT_FALSE(out.accepted);
  EXPECT_NE(out.error.find("zz"), std::string::npos);
  EXPECT_EQ(q["a"], (std::deque<RequestId>{0}));
  EXPECT_EQ(q[""], (std::deque<RequestId>{1}));
  EXPECT_EQ(q.count("zz"), 0u);
}

TEST(Lora, EpochTickWaitsForTheBoundary) {
  EpochState st{"a", 0, {}};
  EpochConfig cfg{0.05, 3};
  EXPECT_FALSE(epoch_tick(to_nanos(0.049), {{"a", 1}, {"b", 1}}, st, cfg).has_value());
  const auto d = epoch_tick(to_nanos(0.05), {{"a", 1}, {"b", 1}}, st, cfg);
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(d->next_adapter, "b");
  EXPECT_EQ(st.active_adapter, "b");
  EXPECT_EQ(st.epoch_started, to_nanos(0.05));
}

TEST(Lora, EpochStaysWhenNobodyElseWaits) {
  EpochState st{"a", 0, {}};
  EpochConfig cfg{0.05, 3};
  EXPECT_FALSE(epoch_tick(to_nanos(0.06), {{"a", 4}, {"b", 0}}, st, cfg).has_value());
  EXPECT_EQ(st.active_adapter, "a");
  EXPECT_EQ(st.epoch_started, to_nanos(0.06));
}

TEST(Lora, RoundRobinOverAdaptersWithWork) {
  EpochState st{"a", 0, {}};
  EpochConfig cfg{0.01, 100};
  const std::map<std::string, std::int64_t> pending = {{"a", 1}, {"b", 1}, {"c", 1}};
  std::vector<std::string> seen;
  for (int i = 1; i <= 4; ++i) seen.push_back(epoch_tick(to_nanos(0.01 * i), pending, st, cfg)->next_adapter);
  EXPECT_EQ(seen, (std::vector<std::string>{"b", "c", "a", "b"}));
}

TEST(Lora, StarvingAdapterGoesFirst) {
  EpochState st{"a", 0, {}};
  EpochConfig cfg{0.05, 1};
  const std::map<std::string, std::int64_t> pending = {{"a", 1}, {"b", 1}, {"c", 1}};
  auto d = epoch_tick(to_nanos(0.05), pending, st, cfg);
  EXPECT_EQ(d->next_adapter, "b");
  EXPECT_FALSE(d->forced_by_starvation);
  d = epoch_tick(to_nanos(0.10), pending, st, cfg);
  EXPECT_EQ(d->next_adapter, "c");
  EXPECT_TRUE(d->forced_by_starvation);
  EXPECT_EQ(st.waited_epochs["c"], 0);
}

TEST(Lora, NoAdapterWaitsForever) {
  EpochState st{"a", 0, {}};
  EpochConfig cfg{0.01, 2};
  const std::map<std::string, std::int64_t> pending = {{"a", 1}, {"b", 1}, {"c", 1}, {"d", 1}, {"e", 1}};
  std::map<std::string, int> since;
  for (int i = 1; i <= 200; ++i) {
    const auto d = epoch_tick(to_nanos(0.01 * i), pending, st, cfg);
    ASSERT_TRUE(d.has_value());
    for (auto& [a, _] : pending) ++since[a];
    since[d->next_adapter] = 0;
    for (auto& [a, n] : since) EXPECT_LE(n, static_cast<int>(pending.size())) << a;
  }
}

TEST(Lora, SequentialSwitchFollowsThePipeline) {
  const auto m = apply_switch_sequentially({1.0, 0.5, 2.0}, {10, 10, 10}, {10, 10, 10}, 10.0);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_DOUBLE_EQ(m[0].start, 1.0);
  EXPECT_DOUBLE_EQ(m[1].start, 1.0);
  EXPECT_DOUBLE_EQ(m[2].start, 2.0);
  EXPECT_DOUBLE_EQ(m[0].end, 3.0);
  EXPECT_DOUBLE_EQ(m[2].end, 4.0);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_GE(m[i].start, m[i - 1].start);
}

TEST(Lora, EagerSwitchCount) {
  EXPECT_EQ(count_eager_switches({}), 0);
  EXPECT_EQ(count_eager_switches({"a", "a", "b", "a", "a", "c"}), 3);
}

TEST(Lora, ContinuousBatchAdmission) {
  EXPECT_EQ(continuous_batch_admit(10, 3, 8), 5);
  EXPECT_EQ(continuous_batch_admit(2, 3, 8), 2);
  EXPECT_EQ(continuous_batch_admit(10, 8, 8), 0);
  EXPECT_EQ(continuous_batch_admit(10, 9, 8), 0);
}

}  // namespace
}  // namespace coldpipe
