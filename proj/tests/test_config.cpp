#include <gtest/gtest.h>

#include "mtag/config.hpp"
#include "support/tempdir.hpp"

using namespace mtag;

TEST(RunConfig, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.tree.num_trees, 3u);
  EXPECT_EQ(c.tree.max_leaf_labels, 100u);
  EXPECT_EQ(c.beam, 10u);
  EXPECT_EQ(c.min_df, 5u);
  EXPECT_EQ(c.repetitions, 5u);
  EXPECT_EQ(c.ks, (std::vector<std::size_t>{1, 3, 5}));
  EXPECT_EQ(c.test_start_year, 2016);
  EXPECT_TRUE(c.kinds.empty());
  EXPECT_NO_THROW(c.validate());
}

TEST(ApplySetting, ParsesEachKind) {
  RunConfig c;
  apply_setting(c, "metadata", "venue, author");
  EXPECT_TRUE(c.kinds.contains(MetadataKind::Venue));
  EXPECT_TRUE(c.kinds.contains(MetadataKind::Author));
  EXPECT_FALSE(c.kinds.contains(MetadataKind::Reference));
  apply_setting(c, "metadata", "none");
  EXPECT_TRUE(c.kinds.empty());
  apply_setting(c, "normalize", "off");
  EXPECT_FALSE(c.features.normalize);
  apply_setting(c, "c", "0.5");
  EXPECT_EQ(c.train.logistic.c, 0.5);
  apply_setting(c, "schema", "maple");
  EXPECT_EQ(c.schema, DatasetSchema::Maple);
  apply_setting(c, "k", "1,3,10");
  EXPECT_EQ(c.ks, (std::vector<std::size_t>{1, 3, 10}));
}

TEST(ApplySetting, Errors) {
  RunConfig c;
  EXPECT_THROW(apply_setting(c, "colour", "red"), InputError);
  EXPECT_THROW(apply_setting(c, "trees", "-1"), InputError);
  EXPECT_THROW(apply_setting(c, "trees", "3x"), InputError);
  EXPECT_THROW(apply_setting(c, "trees", "99999999999"), InputError);
  EXPECT_THROW(apply_setting(c, "c", "big"), InputError);
  EXPECT_THROW(apply_setting(c, "rerank", "maybe"), InputError);
  EXPECT_THROW(apply_setting(c, "metadata", "venue,abstract"), InputError);
}

TEST(ParseKList, Values) {
  EXPECT_EQ(parse_k_list("5"), (std::vector<std::size_t>{5}));
  EXPECT_EQ(parse_k_list(" 1 , 3 "), (std::vector<std::size_t>{1, 3}));
  EXPECT_THROW(parse_k_list("1,,3"), InputError);
  EXPECT_THROW(parse_k_list("a"), InputError);
}

TEST(Validate, RejectsBadValues) {
  auto bad = [](const std::string& key, const std::string& value) {
    RunConfig c;
    apply_setting(c, key, value);
    return c;
  };
  EXPECT_THROW(bad("repetitions", "0").validate(), InputError);
  EXPECT_THROW(bad("k", "1,1").validate(), InputError);
  EXPECT_THROW(bad("k", "0,2").validate(), InputError);
  EXPECT_THROW(bad("beam", "0").validate(), InputError);
  EXPECT_THROW(bad("top_k", "0").validate(), InputError);
  EXPECT_THROW(bad("valid_fraction", "1").validate(), InputError);
  EXPECT_THROW(bad("threshold", "0").validate(), InputError);
  EXPECT_THROW(bad("c", "0").validate(), InputError);
  EXPECT_THROW(bad("max_leaf", "1").validate(), InputError);
  EXPECT_THROW(bad("trees", "0").validate(), InputError);
  EXPECT_THROW(bad("threads", "0").validate(), InputError);
}

TEST(ConfigText, CommentsAndLineNumbers) {
  RunConfig c;
  apply_config_text(c, "# run\ntrees = 5   # more\n\n  beam=20\n", "cfg");
  EXPECT_EQ(c.tree.num_trees, 5u);
  EXPECT_EQ(c.beam, 20u);
  try {
    apply_config_text(c, "trees = 2\nbeam 3\n", "cfg");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:2"), std::string::npos);
  }
  try {
    apply_config_text(c, "\nmax_leaf = lots\n", "cfg");
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg:2: option 'max_leaf'"), std::string::npos);
  }
}

TEST(ConfigText, LaterSettingsWin) {
  fixtures::TempDir dir;
  const auto path = dir.write("run.cfg", "seed = 4\nmetadata = reference\n");
  RunConfig c;
  apply_config_file(c, path);
  apply_setting(c, "seed", "9");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_TRUE(c.kinds.contains(MetadataKind::Reference));
  EXPECT_THROW(apply_config_file(c, dir.file("absent.cfg")), InputError);
}

TEST(FormatConfig, RoundTrips) {
  RunConfig c;
  apply_config_text(c,
                    "dataset = d.jsonl\nmetadata = venue,reference\nvalid_fraction = 0.2\ntext_weight = 0.3\n"
                    "k = 1,2\nrerank = true\nthreshold = 0.01\nseed = 18446744073709551615\n",
                    "in");
  const auto text = format_config(c);
  EXPECT_NE(text.find("valid_fraction = 0.2\n"), std::string::npos);
  EXPECT_NE(text.find("text_weight = 0.3\n"), std::string::npos);
  EXPECT_NE(text.find("metadata = venue,reference\n"), std::string::npos);
  RunConfig back;
  apply_config_text(back, text, "out");
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.seed, UINT64_MAX);
  EXPECT_EQ(back.features.text_weight, 0.3);
}
