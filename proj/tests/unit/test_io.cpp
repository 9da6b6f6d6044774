#include <gtest/gtest.h>

#include <filesystem>
#include <nlohmann/json.hpp>

#include "flowcryst/config.hpp"
#include "flowcryst/io.hpp"
#include "flowcryst/synthetic.hpp"
#include "support.hpp"

using namespace flowcryst;
using namespace testing_support;

namespace {

std::string temp_path(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  return (std::filesystem::temp_directory_path() /
          (std::string("flowcryst_") + info->test_suite_name() + "_" + info->name() + "_" + name))
      .string();
}

const char* kRecord =
    R"({"id":"x1","atomic_numbers":[38,22,8],"frac_coords":[[0,0,0],[0.5,0.5,0.5],[0.5,0.5,0]],)"
    R"("lattice":{"a":3.9,"b":3.9,"c":3.9,"alpha":90,"beta":90,"gamma":90},"split":"val"})";

}  // namespace

TEST(Records, ParseParametersAndClasses) {
  const CrystalRecord r = parse_record(kRecord);
  EXPECT_EQ(r.id, "x1");
  EXPECT_EQ(r.crystal.kinds, (std::vector<int>{37, 21, 7}));
  EXPECT_EQ(r.crystal.lattice.a, 3.9);
  ASSERT_TRUE(r.split.has_value());
  EXPECT_EQ(*r.split, Split::Val);
}

TEST(Records, MatrixRowsAreLatticeVectors) {
  // Rows a = (4,0,0), b = (0,5,0), c = (1,0,6): beta = angle(a, c).
  const CrystalRecord r = parse_record(
      R"({"atomic_numbers":[6],"frac_coords":[[0.1,0.2,0.3]],"lattice":[[4,0,0],[0,5,0],[1,0,6]]})");
  EXPECT_NEAR(r.crystal.lattice.a, 4.0, 1e-12);
  EXPECT_NEAR(r.crystal.lattice.b, 5.0, 1e-12);
  EXPECT_NEAR(r.crystal.lattice.c, std::sqrt(37.0), 1e-12);
  EXPECT_NEAR(r.crystal.lattice.alpha, 90.0, 1e-9);
  EXPECT_NEAR(r.crystal.lattice.beta, std::acos(1.0 / std::sqrt(37.0)) * 180.0 / std::numbers::pi, 1e-9);
  EXPECT_NEAR(r.crystal.lattice.gamma, 90.0, 1e-9);
  EXPECT_FALSE(r.split.has_value());
}

TEST(Records, Errors) {
  EXPECT_ERROR_CODE(parse_record("{not json"), Data);
  EXPECT_ERROR_CODE(parse_record(R"({"atomic_numbers":[0],"frac_coords":[[0,0,0]],"lattice":[[1,0,0],[0,1,0],[0,0,1]]})"),
                    Range);
  EXPECT_ERROR_CODE(parse_record(R"({"atomic_numbers":[6,6],"frac_coords":[[0,0,0]],"lattice":[[1,0,0],[0,1,0],[0,0,1]]})"),
                    Data);
  EXPECT_ERROR_CODE(parse_record(R"({"atomic_numbers":[6],"frac_coords":[[0,0,0]],"lattice":[[1,0,0],[2,0,0],[0,0,1]]})"),
                    DegenerateCell);
  EXPECT_ERROR_CODE(parse_split("holdout"), Data);
}

TEST(Records, JsonRoundTripIsExact) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    CrystalRecord r{"id" + std::to_string(trial), Crystal({0, 5, 99}, random_cloud(3, rng), random_lattice(rng)),
                    Split::Test};
    const CrystalRecord back = parse_record(record_to_json(r));
    EXPECT_EQ(back.id, r.id);
    EXPECT_EQ(back.crystal.kinds, r.crystal.kinds);
    EXPECT_EQ(back.crystal.frac.coords(), r.crystal.frac.coords());
    EXPECT_EQ(back.crystal.lattice, r.crystal.lattice);
    EXPECT_EQ(back.split, r.split);
  }
}

TEST(Dataset, PositionalSplitAndExplicitLabels) {
  Rng rng(2);
  std::vector<CrystalRecord> records;
  for (int i = 0; i < 10; ++i) records.push_back({std::to_string(i), perovskite_family(1, rng)[0], std::nullopt});
  records[9].split = Split::Train;
  const Dataset d = make_dataset(records);
  // Nine unlabeled records: round(5.4) = 5 train, round(1.8) = 2 val, 2 test.
  EXPECT_EQ(d.train.size(), 6u);
  EXPECT_EQ(d.val.size(), 2u);
  EXPECT_EQ(d.test.size(), 2u);
  EXPECT_EQ(d.train.front().id, "9");
  EXPECT_EQ(d.train[1].id, "0");
  EXPECT_EQ(d.test.back().id, "8");
  EXPECT_EQ(d.counts.counts.at(5), 6.0);
}

TEST(Dataset, MalformedFractionAndEmptyFile) {
  const std::string path = temp_path("data.jsonl");
  std::string text;
  for (int i = 0; i < 199; ++i) text += std::string(kRecord) + "\n";
  text += "garbage\n";
  write_text_file(path, text);
  const Dataset ok = load_dataset(path);
  EXPECT_EQ(ok.lines, 200);
  ASSERT_EQ(ok.rejected.size(), 1u);
  EXPECT_EQ(ok.rejected[0].line, 200);
  EXPECT_EQ(ok.val.size(), 199u);

  write_text_file(path, text + "garbage\ngarbage\n");
  EXPECT_ERROR_CODE(load_dataset(path), Data);
  write_text_file(path, "");
  EXPECT_ERROR_CODE(load_dataset(path), InsufficientData);
  EXPECT_ERROR_CODE(load_dataset(path + ".missing"), Io);
  std::filesystem::remove(path);
}

TEST(Corpus, GeneratedLinesRoundTrip) {
  Rng rng(3);
  const Crystal c = perovskite_family(1, rng)[0];
  Generated good;
  good.crystal = c;
  Generated bad;
  bad.reason = "unused bit pattern";
  const std::string header = header_json("generations", "00ff", 7, {{"steps", "50"}});
  const auto h = nlohmann::json::parse(header);
  EXPECT_EQ(h["header"]["config_hash"], "00ff");
  EXPECT_EQ(h["header"]["seed"], 7);
  EXPECT_EQ(h["header"]["config"]["steps"], "50");

  const std::string path = temp_path("gen.jsonl");
  write_text_file(path, header + "\n" + generated_to_json(good, "g0") + "\n" + generated_to_json(bad, "g1") + "\n");
  const std::vector<CorpusEntry> corpus = read_corpus(path);
  ASSERT_EQ(corpus.size(), 2u);
  ASSERT_TRUE(corpus[0].crystal.has_value());
  EXPECT_EQ(corpus[0].crystal->frac.coords(), c.frac.coords());
  EXPECT_FALSE(corpus[1].crystal.has_value());
  EXPECT_EQ(corpus[1].id, "g1");

  write_text_file(path, header + "\n" + generated_to_json(good, "g0") + "\n");
  const std::vector<CompositionEntry> comps = read_compositions(path);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].kinds, c.kinds);
  std::filesystem::remove(path);
}

TEST(PriorFile, RoundTripIsExact) {
  PriorFile p;
  p.prior.loc = Eigen::Vector3d(1.1, 1.2, 1.3) / 3.0;
  p.prior.scale = Eigen::Vector3d(0.1, 0.2, 0.3) / 7.0;
  p.counts.counts = {{2, 10.0}, {5, 3.0}};
  p.config_hash = "abc";
  p.seed = 99;
  const PriorFile q = prior_from_json(prior_to_json(p));
  EXPECT_EQ(q.prior.loc, p.prior.loc);
  EXPECT_EQ(q.prior.scale, p.prior.scale);
  EXPECT_EQ(q.counts.counts, p.counts.counts);
  EXPECT_EQ(q.config_hash, "abc");
  EXPECT_EQ(q.seed, 99u);
  EXPECT_ERROR_CODE(prior_from_json("{}"), Data);
}

TEST(Config, ParsingAndModeDefaults) {
  const ConfigEntries e = parse_config_text("# comment\nmode = dng\n\nhidden_dim=32  # trailing\n");
  EXPECT_EQ(e.at("mode"), "dng");
  EXPECT_EQ(e.at("hidden_dim"), "32");
  const Settings s = settings_from(e);
  EXPECT_EQ(s.run.mode, Mode::DNG);
  EXPECT_EQ(s.net.mode, Mode::DNG);
  EXPECT_EQ(s.net.hidden_dim, 32);
  EXPECT_EQ(s.run.learning_rate, 5e-4);
  EXPECT_ERROR_CODE(settings_from({{"no_such_key", "1"}}), Configuration);
  EXPECT_ERROR_CODE(settings_from({{"epochs", "many"}}), Configuration);
  EXPECT_ERROR_CODE(parse_config_text("novalue\n"), Configuration);
}

TEST(Config, CanonicalTextAndHash) {
  const Settings a = settings_from({{"seed", "5"}, {"slope", "2.5"}});
  const Settings b = settings_from({{"slope", "2.5"}, {"seed", "5"}});
  EXPECT_EQ(canonical_config(a), canonical_config(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash(settings_from({{"seed", "6"}})));
  // Reference values of 64-bit FNV-1a.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  // The canonical text feeds back to the same settings.
  EXPECT_EQ(canonical_config(settings_from(parse_config_text(canonical_config(a)))), canonical_config(a));
}
