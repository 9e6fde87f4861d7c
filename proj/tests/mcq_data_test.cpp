// Copyright 2026 The TruthV Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "truthv/mcq_data.hpp"

namespace truthv {
namespace {

Dataset two_item_dataset() {
  Dataset ds{"toy", "", Split::kValidation, {}};
  ds.items.push_back({"a", "Q", {"A", "B"}, 0});
  ds.items.push_back({"b", "Sky colour?", {"blue", "green", "red"}, std::nullopt});
  return ds;
}

class DatasetFileTest : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = oracle::scratch_dir("dataset"); }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  ErrorKind load_error(const std::string& text, std::string* message = nullptr) {
    const auto path = dir_ / "bad.jsonl";
    io::write_file(path, text);
    try {
      load_dataset(path);
    } catch (const Error& e) {
      if (message) *message = e.what();
      return e.kind();
    }
    ADD_FAILURE() << "load succeeded for: " << text;
    return ErrorKind::kUsage;
  }

  std::filesystem::path dir_;
};

TEST_F(DatasetFileTest, RoundTripsThroughItemsAndSidecar) {
  Dataset ds = two_item_dataset();
  ds.instruction = "Pick one.";
  ds.split = Split::kTrain;
  const auto path = dir_ / "toy.jsonl";
  write_dataset(ds, path);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "toy.dataset.json"));
  EXPECT_EQ(load_dataset(path), ds);
}

TEST_F(DatasetFileTest, FallsBackToDirectorySidecarThenStem) {
  const auto path = dir_ / "items.jsonl";
  io::write_file(path, serialize_items(two_item_dataset()));
  EXPECT_EQ(load_dataset(path).name, "items");
  EXPECT_EQ(load_dataset(path).instruction, "");
  io::write_file(dir_ / "dataset.json",
                 R"({"name":"arc","instruction":"Answer.","split":"labeled_budget"})");
  const Dataset ds = load_dataset(path);
  EXPECT_EQ(ds.name, "arc");
  EXPECT_EQ(ds.instruction, "Answer.");
  EXPECT_EQ(ds.split, Split::kLabeledBudget);
}

TEST_F(DatasetFileTest, MalformedLineReportsLineNumber) {
  std::string msg;
  EXPECT_EQ(load_error("{\"item_id\":\"a\",\"question\":\"q\",\"candidates\":[\"x\"]}\n"
                       "\n{not json\n",
                       &msg),
            ErrorKind::kFormat);
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST_F(DatasetFileTest, RejectsStructuralProblems) {
  EXPECT_EQ(load_error(R"({"item_id":"a","question":"q","candidates":[]})"), ErrorKind::kFormat);
  EXPECT_EQ(load_error(R"({"item_id":"a","candidates":["x"]})"), ErrorKind::kFormat);
  EXPECT_EQ(load_error("{\"item_id\":\"a\",\"question\":\"q\",\"candidates\":[\"x\"]}\n"
                       "{\"item_id\":\"a\",\"question\":\"r\",\"candidates\":[\"y\"]}\n"),
            ErrorKind::kFormat);
  EXPECT_EQ(load_error(R"({"item_id":"a","question":"q","candidates":["x","y"],"label":2})"),
            ErrorKind::kRange);
  EXPECT_EQ(load_error(R"({"item_id":"a","question":"q","candidates":["x"],"label":-1})"),
            ErrorKind::kFormat);
  EXPECT_EQ(load_error(""), ErrorKind::kFormat);
}

TEST(PromptTest, CandidatesShareThePrefix) {
  const Dataset ds = two_item_dataset();
  const Prompt a = assemble_prompt(ds, ds.items[0], 0, 64);
  const Prompt b = assemble_prompt(ds, ds.items[0], 1, 64);
  ASSERT_EQ(a.answer_span.begin, b.answer_span.begin);
  EXPECT_TRUE(std::equal(a.tokens.begin(), a.tokens.begin() + a.answer_span.begin, b.tokens.begin()));
  EXPECT_EQ(a.tokens, (std::vector<std::int32_t>{ByteTokenizer::kBos, 'Q', '\n', 'A'}));
  EXPECT_EQ(a.answer_span.begin, 3u);
  EXPECT_EQ(a.answer_span.end, 4u);
}

TEST(PromptTest, InstructionIsAPurePrefix) {
  Dataset plain = two_item_dataset();
  Dataset instructed = plain;
  instructed.instruction = "I.";
  for (std::size_t c = 0; c < 3; ++c) {
    const Prompt p = assemble_prompt(plain, plain.items[1], c, 64);
    const Prompt q = assemble_prompt(instructed, instructed.items[1], c, 64);
    const std::vector<std::int32_t> head{ByteTokenizer::kBos, 'I', '.', '\n'};
    ASSERT_EQ(q.tokens.size(), p.tokens.size() + 3);
    EXPECT_TRUE(std::equal(head.begin(), head.end(), q.tokens.begin()));
    EXPECT_TRUE(std::equal(p.tokens.begin() + 1, p.tokens.end(), q.tokens.begin() + 4));
    EXPECT_EQ(q.answer_span.size(), p.answer_span.size());
    EXPECT_EQ(ByteTokenizer{}.decode(std::span(q.tokens).subspan(q.answer_span.begin,
                                                                 q.answer_span.size())),
              plain.items[1].candidates[c]);
  }
}

TEST(PromptTest, RefusesToTruncate) {
  const Dataset ds = two_item_dataset();
  EXPECT_NO_THROW(assemble_prompt(ds, ds.items[1], 1, 18));
  try {
    assemble_prompt(ds, ds.items[1], 1, 17);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRange);
    EXPECT_NE(std::string(e.what()).find("truncation"), std::string::npos);
  }
  EXPECT_THROW(assemble_prompt(ds, ds.items[1], 3, 64), Error);
}

TEST(TokenizerTest, EncodesRawBytes) {
  const ByteTokenizer tok;
  const std::string utf8 = "caf\xc3\xa9";
  const auto ids = tok.encode(utf8);
  EXPECT_EQ(ids, (std::vector<std::int32_t>{'c', 'a', 'f', 0xc3, 0xa9}));
  EXPECT_EQ(tok.decode(ids), utf8);
  EXPECT_EQ(tok.display(ByteTokenizer::kBos), "<bos>");
  EXPECT_EQ(tok.display(' '), "\\x20");
  EXPECT_EQ(tok.display('x'), "x");
}

Dataset numbered(std::size_t n, std::size_t unlabeled_every = 0) {
  Dataset ds{"nums", "", Split::kTrain, {}};
  for (std::size_t i = 0; i < n; ++i) {
    char id[8];
    std::snprintf(id, sizeof(id), "q%03zu", i);
    McqItem it{id, "q", {"x", "y"}, i % 2};
    if (unlabeled_every && i % unlabeled_every == 0) it.label.reset();
    ds.items.push_back(it);
  }
  return ds;
}

TEST(SampleBudgetTest, DeterministicSortedAndDistinct) {
  const Dataset ds = numbered(100);
  const Dataset a = sample_budget(ds, 30, 4);
  EXPECT_EQ(a, sample_budget(ds, 30, 4));
  EXPECT_NE(a, sample_budget(ds, 30, 5));
  EXPECT_EQ(a.items.size(), 30u);
  EXPECT_EQ(a.split, Split::kLabeledBudget);
  EXPECT_TRUE(std::is_sorted(a.items.begin(), a.items.end(),
                             [](auto& x, auto& y) { return x.item_id < y.item_id; }));
  EXPECT_NO_THROW(a.validate());
  const Dataset all = sample_budget(ds, 100, 9);
  EXPECT_EQ(all.items, ds.items);
}

TEST(SampleBudgetTest, DrawsOnlyLabeledItems) {
  const Dataset ds = numbered(40, 4);
  const Dataset s = sample_budget(ds, 30, 1);
  EXPECT_TRUE(s.fully_labeled());
  EXPECT_THROW(sample_budget(ds, 31, 1), Error);
  EXPECT_THROW(sample_budget(ds, 0, 1), Error);
}

TEST(SampleBudgetTest, IndicesAreUniformEnough) {
  std::vector<int> hits(10, 0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed)
    for (std::size_t i : sample_indices(10, 3, seed)) ++hits[i];
  for (int h : hits) EXPECT_NEAR(h, 600, 90);
}

}  // namespace
}  // namespace truthv
