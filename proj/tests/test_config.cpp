#include <gtest/gtest.h>

#include <sstream>

#include "bnhp/config.hpp"
#include "helpers.hpp"

using namespace bnhp;
using testing_util::kind_of;

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.train.lr, 1e-4);
  EXPECT_EQ(c.train.beta1, 0.9);
  EXPECT_EQ(c.train.beta2, 0.99);
  EXPECT_EQ(c.train.l2_lambda, 0.001);
  EXPECT_EQ(c.arch.hidden, 64u);
  EXPECT_EQ(c.arch.layers, 5u);
  EXPECT_EQ(c.arch.units, 16u);
  EXPECT_EQ(c.arch.truncation, 20u);
  EXPECT_EQ(c.predict.samples, 50u);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ReadsKeysAndComments) {
  RunConfig c;
  std::istringstream in(
      "# run settings\n"
      "lr = 0.001\n"
      "epochs=30   # short\n"
      "\n"
      "p_fnn = 0.8\n"
      "k_levels = 1, 3\n"
      "persist_masks = true\n"
      "hidden = 12\n"
      "decays = 0.5,2\n");
  read_config(in, c);
  EXPECT_EQ(c.train.lr, 0.001);
  EXPECT_EQ(c.train.epochs, 30u);
  EXPECT_EQ(c.dropout.p_fnn, 0.8);
  EXPECT_EQ(c.predict.k_levels, (std::vector<double>{1, 3}));
  EXPECT_TRUE(c.predict.persist_masks);
  EXPECT_EQ(c.arch.hidden, 12u);
  EXPECT_EQ(c.ensemble.decays, (std::vector<double>{0.5, 2}));
}

TEST(Config, UnknownKeyAndBadValue) {
  RunConfig c;
  std::istringstream unknown("lr = 0.1\nlearning_rate = 0.1\n");
  try {
    read_config(unknown, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
    EXPECT_NE(e.message().find("line 2"), std::string::npos);
  }
  std::istringstream bad("epochs = ten\n");
  EXPECT_EQ(kind_of([&] { read_config(bad, c); }), ErrorKind::ParseError);
  std::istringstream noeq("epochs 10\n");
  EXPECT_EQ(kind_of([&] { read_config(noeq, c); }), ErrorKind::ParseError);
  EXPECT_FALSE(set_config_value(c, "nope", "1"));
}

TEST(Config, TextRoundTrip) {
  RunConfig c;
  c.train.lr = 0.0123;
  c.dropout.p_rnn_recurrent = 0.25;
  c.predict.k_levels = {1.5, 2};
  c.rebase = true;
  c.time_scale = 3600;
  std::istringstream in(config_text(c));
  RunConfig d;
  read_config(in, d);
  EXPECT_EQ(config_text(d), config_text(c));
  EXPECT_EQ(d.train.lr, 0.0123);
  EXPECT_TRUE(d.rebase);
}

TEST(Config, ValidationCatchesBadValues) {
  RunConfig c;
  c.dropout.p_fnn = 1.0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidParam);
  c = RunConfig{};
  c.time_scale = 0.0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidParam);
}
