#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "mfus/corpus.hpp"
#include "mfus/io.hpp"
#include "test_util.hpp"

using namespace mfus;
using testutil::error_kind_of;

TEST_SUITE("corpus") {
  TEST_CASE("duplicate cells collapse and rows are interned by kind and text") {
    const auto m = CooccurrenceMatrix::parse("P\tpat_a\tep1\nP\tpat_a\tep1\nR\trel_r\tep1\n");
    CHECK(m.row_count() == 2);
    CHECK(m.col_count() == 1);
    const std::vector<Cell> expected = {{0, 0}, {1, 0}};
    CHECK(m.positives() == expected);
    CHECK(m.row(1).kind == RowKind::KBRelation);
  }

  TEST_CASE("pattern frequency counts distinct entity pairs") {
    const auto m = CooccurrenceMatrix::parse("P\tA $ARG1 b $ARG2\tep1\nP\tA $ARG1 b $ARG2\tep2\n");
    CHECK(m.pattern_freq(0) == 2);
  }

  TEST_CASE("column degrees match a raw line scan of the fixture") {
    const auto path = testutil::fixture("cooccur_mixed.tsv");
    const auto m = CooccurrenceMatrix::load(path);
    std::map<std::string, std::set<std::string>> oracle;
    for (const auto& line : lines(read_file(path))) {
      if (line.empty()) continue;
      const auto f = split(line, '\t');
      oracle[f[2]].insert(f[0] + "|" + f[1]);
    }
    REQUIRE(m.col_count() == oracle.size());
    for (std::size_t j = 0; j < m.col_count(); ++j)
      CHECK(m.col_degree(j) == oracle[m.cols().names[j]].size());
    CHECK(m.rows_of_kind(RowKind::KBRelation).size() == 1);
  }

  TEST_CASE("serialize then parse reproduces every id") {
    const auto m = CooccurrenceMatrix::load(testutil::fixture("cooccur_mixed.tsv"));
    const auto again = CooccurrenceMatrix::parse(m.serialize());
    CHECK(again.positives() == m.positives());
    CHECK(again.cols().names == m.cols().names);
    CHECK(again.serialize() == m.serialize());
  }

  TEST_CASE("malformed input is rejected with a parse error") {
    CHECK(error_kind_of([] { CooccurrenceMatrix::parse("P\tonly two\n"); }) == ErrorKind::Parse);
    CHECK(error_kind_of([] { CooccurrenceMatrix::parse("X\ta\tb\n"); }) == ErrorKind::Parse);
    CHECK(error_kind_of([] { CooccurrenceMatrix::parse("R\ttwo tokens\tep\n"); }) ==
          ErrorKind::Parse);
    CHECK(error_kind_of([] { CooccurrenceMatrix::parse("# nothing\n"); }) == ErrorKind::EmptyInput);
  }

  TEST_CASE("weights follow inverse column degree and average to one") {
    // rows a, b; col e0 held by both, col e1 by b only.
    const auto m = CooccurrenceMatrix::parse("P\ta\te0\nP\tb\te0\nP\tb\te1\n");
    const std::vector<LabeledCell> samples = {{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 0}};
    const auto batch = compute_weights(m, samples);
    REQUIRE(batch.entries.size() == 4);
    const double expected[] = {2.0 / 3, 2.0 / 3, 4.0 / 3, 4.0 / 3};
    double total = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      CHECK(batch.entries[n].weight == doctest::Approx(expected[n]).epsilon(1e-12));
      total += batch.entries[n].weight;
    }
    CHECK(std::abs(total / 4.0 - 1.0) < 1e-12);
  }

  TEST_CASE("degree-one columns give unit weights") {
    const auto m = CooccurrenceMatrix::parse("P\ta\te0\nP\tb\te1\nP\tc\te2\n");
    const std::vector<LabeledCell> samples = {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}, {0, 1, 0}};
    for (const auto& s : compute_weights(m, samples).entries) CHECK(s.weight == 1.0);
  }

  TEST_CASE("property: weights average to one on random sample sets") {
    std::mt19937_64 rng(11);
    testutil::WarningCapture quiet;
    for (int trial = 0; trial < 50; ++trial) {
      std::string text;
      const int rows = 2 + static_cast<int>(rng() % 6), cols = 1 + static_cast<int>(rng() % 6);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          if (rng() % 2 || j == i % cols)
            text += "P\tr" + std::to_string(i) + "\tc" + std::to_string(j) + "\n";
      const auto m = CooccurrenceMatrix::parse(text);
      std::vector<LabeledCell> samples;
      for (const auto& c : m.positives()) samples.push_back({c.row, c.col, 1});
      for (const auto& n : draw_negatives(m, m.positives(), {rng(), 1, {}})) samples.push_back(n);
      const auto batch = compute_weights(m, samples);
      double total = 0.0;
      for (const auto& s : batch.entries) total += s.weight;
      CHECK(std::abs(total / static_cast<double>(batch.entries.size()) - 1.0) < 1e-9);
    }
  }

  TEST_CASE("a single candidate row is always the negative") {
    const auto m = CooccurrenceMatrix::parse("P\ta\te0\nP\tb\te1\n");
    const std::vector<Cell> pos = {{0, 0}};
    const auto neg = draw_negatives(m, pos, {5, 1, {}});
    REQUIRE(neg.size() == 1);
    CHECK(neg[0].row == 1);
    CHECK(neg[0].col == 0);
    CHECK(neg[0].y == 0);
  }

  TEST_CASE("negative draws are reproducible for a fixed seed") {
    const auto m = CooccurrenceMatrix::load(testutil::fixture("cooccur_mixed.tsv"));
    const auto a = draw_negatives(m, m.positives(), {7, 2, {}});
    const auto b = draw_negatives(m, m.positives(), {7, 2, {}});
    REQUIRE(a.size() == b.size());
    for (std::size_t n = 0; n < a.size(); ++n) {
      CHECK(a[n].row == b[n].row);
      CHECK(a[n].col == b[n].col);
    }
  }

  TEST_CASE("negatives are uniform over the zero cells of the column") {
    // 10 rows, column e holds rows 0..3; every row also owns a private column
    // so the matrix has 10 distinct rows.
    std::string text;
    for (int i = 0; i < 10; ++i) text += "P\tr" + std::to_string(i) + "\tp" + std::to_string(i) + "\n";
    for (int i = 0; i < 4; ++i) text += "P\tr" + std::to_string(i) + "\te\n";
    const auto m = CooccurrenceMatrix::parse(text);
    const std::size_t e = *m.find_col("e");
    const std::vector<Cell> pos(100, Cell{0, e});
    const auto neg = draw_negatives(m, pos, {2024, 1, {}});
    REQUIRE(neg.size() == 100);
    std::map<std::size_t, int> counts;
    for (const auto& n : neg) {
      CHECK_FALSE(m.contains(n.row, n.col));
      ++counts[n.row];
    }
    CHECK(counts.size() <= 6);
    double chi2 = 0.0;
    const double expected = 100.0 / 6.0;
    for (std::size_t i = 4; i < 10; ++i) {
      const double o = counts.count(i) ? counts[i] : 0;
      chi2 += (o - expected) * (o - expected) / expected;
    }
    // 99th percentile of chi-square with 5 degrees of freedom.
    CHECK(chi2 < 15.086);
  }

  TEST_CASE("saturated columns are skipped with a warning") {
    const auto m = CooccurrenceMatrix::parse("P\ta\te0\nP\tb\te0\n");
    testutil::WarningCapture w;
    CHECK(draw_negatives(m, m.positives(), {1, 1, {}}).empty());
    CHECK_FALSE(w.messages.empty());
  }

  TEST_CASE("validation split holds out the requested fraction of unique patterns") {
    std::string text;
    for (int i = 0; i < 100; ++i) text += "P\t$ARG1 w" + std::to_string(i) + " $ARG2\tep" + std::to_string(i) + "\n";
    const auto m = CooccurrenceMatrix::parse(text);
    const auto s = split_validation(m, 0.05, 3);
    CHECK(s.validation_rows.size() == 5);
    CHECK(s.train_rows.size() == 95);
    CHECK(split_validation(m, 0.05, 3).serialize() == s.serialize());
  }

  TEST_CASE("rows sharing a token sequence land on the same side") {
    std::string text;
    for (int i = 0; i < 30; ++i) text += "P\t$ARG1 w" + std::to_string(i) + " $ARG2\tep" + std::to_string(i) + "\n";
    // Same tokens, different spacing: two matrix rows.
    text += "P\t$ARG1  w7 $ARG2\tepx\n";
    const auto m = CooccurrenceMatrix::parse(text);
    const std::size_t a = *m.find_row(RowKind::Pattern, "$ARG1 w7 $ARG2");
    const std::size_t b = *m.find_row(RowKind::Pattern, "$ARG1  w7 $ARG2");
    REQUIRE(a != b);
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto s = split_validation(m, 0.2, seed);
      const auto in_val = [&](std::size_t r) {
        return std::find(s.validation_rows.begin(), s.validation_rows.end(), r) != s.validation_rows.end();
      };
      CHECK(in_val(a) == in_val(b));
    }
  }

  TEST_CASE("split file round-trips") {
    std::string text;
    for (int i = 0; i < 40; ++i) text += "P\t$ARG1 w" + std::to_string(i) + " $ARG2\tep" + std::to_string(i) + "\n";
    text += "R\trel\tep0\n";
    const auto m = CooccurrenceMatrix::parse(text);
    const auto s = split_validation(m, 0.1, 9);
    const auto dir = testutil::scratch("split_roundtrip");
    s.save(dir / "split.txt");
    const auto back = SplitAssignment::load(dir / "split.txt", m);
    CHECK(back.validation_rows == s.validation_rows);
    CHECK(back.train_rows == s.train_rows);
    const std::size_t rel = *m.find_row(RowKind::KBRelation, "rel");
    CHECK(std::find(s.train_rows.begin(), s.train_rows.end(), rel) != s.train_rows.end());
  }

  TEST_CASE("too few patterns for a split is a config error") {
    const auto m = CooccurrenceMatrix::parse("P\ta\te0\nP\tb\te1\n");
    CHECK(error_kind_of([&] { split_validation(m, 0.1, 1); }) == ErrorKind::Config);
  }
}
