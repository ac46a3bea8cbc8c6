#include <gtest/gtest.h>

#include "bnhp/error.hpp"
#include "bnhp/events.hpp"
#include "helpers.hpp"

using namespace bnhp;
using testing_util::from_taus;

using testing_util::kind_of;

TEST(InterArrivals, DifferencesFromOrigin) {
  EXPECT_EQ(inter_arrivals(EventSequence("a", {2, 5, 9})).taus, (std::vector<double>{2, 3, 4}));
  EXPECT_EQ(inter_arrivals(EventSequence("a", {1})).taus, (std::vector<double>{1}));
}

TEST(InterArrivals, RejectsDuplicatesAndEmpty) {
  EXPECT_EQ(kind_of([] { EventSequence("a", {3, 3}); }), ErrorKind::NonIncreasing);
  EXPECT_EQ(kind_of([] { inter_arrivals(EventSequence("a", {})); }), ErrorKind::EmptySequence);
}

TEST(InterArrivals, SumReachesLastTimestamp) {
  const auto seq = testing_util::random_sequence(500, 3);
  const auto ia = inter_arrivals(seq);
  const double s = std::accumulate(ia.taus.begin(), ia.taus.end(), 0.0);
  EXPECT_NEAR(s, seq.times().back(), 1e-9 * seq.times().back());
}

TEST(Split, CountsFollowFractions) {
  auto c = split_counts(10, {});
  EXPECT_EQ(c.train, 7u);
  EXPECT_EQ(c.valid, 1u);
  EXPECT_EQ(c.test, 2u);
  c = split_counts(100, {});
  EXPECT_EQ(c.train, 70u);
  EXPECT_EQ(c.valid, 10u);
  EXPECT_EQ(c.test, 20u);
  EXPECT_EQ(kind_of([] { split_counts(9, {}); }), ErrorKind::TooShort);
}

TEST(Split, ConcatenationReproducesSequence) {
  const auto seq = testing_util::random_sequence(137, 5);
  const Split s = chronological_split(seq);
  std::vector<double> all;
  for (const auto* part : {&s.train, &s.valid, &s.test}) all.insert(all.end(), part->times().begin(), part->times().end());
  EXPECT_EQ(all, seq.times());
}

TEST(Split, InvalidFractions) {
  EXPECT_EQ(kind_of([] { SplitSpec{0.5, 0.1, 0.2}.validate(); }), ErrorKind::InvalidParam);
  EXPECT_EQ(kind_of([] { SplitSpec{1.0, 0.0, 0.0}.validate(); }), ErrorKind::InvalidParam);
}

TEST(Windows, Sliding) {
  const auto w = make_windows(from_taus({1, 2, 3, 4}), 2);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].taus, (std::vector<double>{1, 2}));
  EXPECT_EQ(w[0].target_tau, 3);
  EXPECT_EQ(w[0].anchor_time, 3);
  EXPECT_EQ(w[1].taus, (std::vector<double>{2, 3}));
  EXPECT_EQ(w[1].target_tau, 4);
  EXPECT_EQ(w[1].target_index, 3u);
}

TEST(Windows, Boundaries) {
  const std::vector<double> twenty(20, 1.0);
  EXPECT_EQ(kind_of([&] { make_windows(from_taus(twenty), 20); }), ErrorKind::TooShort);
  EXPECT_EQ(make_windows(from_taus(std::vector<double>(21, 1.0)), 20).size(), 1u);
}

TEST(Windows, RangeUsesActualContext) {
  const auto seq = testing_util::random_sequence(60, 2);
  const auto all = make_windows(seq, 5);
  const auto part = make_windows(seq, 5, 40, 50);
  ASSERT_EQ(part.size(), 10u);
  for (std::size_t i = 0; i < part.size(); ++i) {
    EXPECT_EQ(part[i].taus, all[35 + i].taus);
    EXPECT_EQ(part[i].target_index, 40 + i);
  }
}

TEST(Csv, GroupsAndSortsSequences) {
  const auto seqs = parse_csv("sequence_id,timestamp\nb,3\na,1\nb,1\na,2\nb,2\n");
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].id(), "b");
  EXPECT_EQ(seqs[0].times(), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(seqs[1].times(), (std::vector<double>{1, 2}));
  EXPECT_FALSE(seqs[0].has_locations());
}

TEST(Csv, LocationsAreLoaded) {
  const auto seqs = parse_csv("sequence_id,timestamp,lat,lon\nx,1,40.5,-73.9\nx,2,40.6,-73.8\n");
  ASSERT_TRUE(seqs[0].has_locations());
  EXPECT_EQ((*seqs[0].locations())[1], (Location{40.6, -73.8}));
}

TEST(Csv, SchemaAndParseErrors) {
  try {
    parse_csv("sequence_id,time\na,1\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SchemaError);
    EXPECT_NE(std::string(e.what()).find("timestamp"), std::string::npos);
  }
  try {
    parse_csv("sequence_id,timestamp\na,1\na,x\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Csv, RoundTripIsByteIdentical) {
  const std::string text = "sequence_id,timestamp,lat,lon\nq,0.1,40.1,-74.2\nq,1.25,40.2,-74.1\nr,3,41,-73\n";
  EXPECT_EQ(to_csv(parse_csv(text)), text);
  const auto seq = testing_util::random_sequence(300, 9, true);
  const std::string canon = to_csv({seq});
  EXPECT_EQ(to_csv(parse_csv(canon)), canon);
}

TEST(Csv, TimeScaleAndRebase) {
  const auto scaled = parse_csv("sequence_id,timestamp\na,10\na,30\n", {10.0, false});
  EXPECT_EQ(scaled[0].times(), (std::vector<double>{1, 3}));
  const auto rebased = parse_csv("sequence_id,timestamp\na,100\na,101\na,103\n", {1.0, true});
  EXPECT_EQ(rebased[0].times(), (std::vector<double>{1, 3}));
  EXPECT_EQ(rebased[0].offset(), 100);
}
