#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mfus/embed.hpp"
#include "mfus/io.hpp"
#include "test_util.hpp"

using namespace mfus;
using testutil::error_kind_of;

TEST_SUITE("embed") {
  TEST_CASE("vocabulary puts specials first and maps unknown tokens to <unk>") {
    const auto v = Vocabulary::from_tokens({"a", "b", "a"});
    CHECK(v.size() == 6);
    CHECK(v.index("zzz") == v.index(Vocabulary::kUnk));
    CHECK(v.index("b") == 5);
    CHECK(Vocabulary::is_special("$ARG1"));
    CHECK_FALSE(Vocabulary::is_special("a"));
  }

  TEST_CASE("file lookup fills found rows and seeds the rest") {
    const auto v = Vocabulary::from_tokens({"a", "b"});
    const auto e = parse_embeddings("a 1 0\n", v, 42);
    CHECK(e.coverage == 0.5);
    CHECK(e.found == 1);
    const auto ra = e.matrix.row(v.index("a"));
    CHECK(ra[0] == 1.0);
    CHECK(ra[1] == 0.0);
    const auto again = parse_embeddings("a 1 0\n", v, 42);
    CHECK(again.matrix.data == e.matrix.data);
    CHECK(nn::norm(e.matrix.row(v.index("b"))) <= 1.0);
  }

  TEST_CASE("exact case wins over the lowercase fallback") {
    const auto v = Vocabulary::from_tokens({"Paris", "PARIS"});
    const auto e = parse_embeddings("paris 0 1\nParis 1 0\n", v, 1);
    CHECK(e.matrix(v.index("Paris"), 0) == 1.0);
    CHECK(e.matrix(v.index("PARIS"), 1) == 1.0);
    CHECK(e.coverage == 1.0);
  }

  TEST_CASE("300-dim fixture equals an independent line parser") {
    const auto path = testutil::fixture("embeddings_300d.txt");
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    std::vector<std::string> toks;
    std::vector<std::vector<double>> oracle;
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string tok;
      ls >> tok;
      std::vector<double> vals;
      double x;
      while (ls >> x) vals.push_back(x);
      toks.push_back(tok);
      oracle.push_back(vals);
    }
    REQUIRE(toks.size() == 50);
    const auto v = Vocabulary::from_tokens(toks);
    const auto e = load_embedding_file(path, v, 3);
    CHECK(e.matrix.cols == 300);
    CHECK(e.coverage == 1.0);
    for (std::size_t t = 0; t < toks.size(); ++t)
      for (std::size_t k = 0; k < 300; ++k) REQUIRE(e.matrix(v.index(toks[t]), k) == oracle[t][k]);
  }

  TEST_CASE("inconsistent dimensions and bad numbers are parse errors") {
    const auto v = Vocabulary::from_tokens({"a"});
    CHECK(error_kind_of([&] { parse_embeddings("a 1 0\nb 1\n", v, 0); }) == ErrorKind::Parse);
    CHECK(error_kind_of([&] { parse_embeddings("a 1 x\n", v, 0); }) == ErrorKind::Parse);
    CHECK(error_kind_of([&] { parse_embeddings("", v, 0); }) == ErrorKind::EmptyInput);
  }

  TEST_CASE("SIF weight is one half when p equals nu and one for unseen tokens") {
    const auto s = WordStats::fit({{"x", "y"}, {"y", "y"}}, 0.25);
    CHECK(s.probability("x") == 0.25);
    CHECK(s.sif_weight("x") == 0.5);
    CHECK(s.sif_weight("never") == 1.0);
  }

  TEST_CASE("SIF sum over unit basis vectors gives the per-token weights") {
    std::vector<std::string> corpus;
    corpus.push_back("a");
    for (int i = 0; i < 10; ++i) corpus.push_back("b");
    for (int i = 0; i < 100; ++i) corpus.push_back("c");
    while (corpus.size() < 10000) corpus.push_back("filler");
    const auto stats = WordStats::fit({corpus}, 1e-4);
    const auto v = Vocabulary::from_tokens({"a", "b", "c"});
    nn::Mat table(v.size(), 3);
    table(v.index("a"), 0) = 1;
    table(v.index("b"), 1) = 1;
    table(v.index("c"), 2) = 1;
    const std::vector<std::string> pat = {"a", "b", "c"};
    const auto s = sif_average(pat, table, v, stats);
    CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(1.0 / 11).epsilon(1e-12));
    CHECK(s[2] == doctest::Approx(1.0 / 101).epsilon(1e-12));
    const std::vector<std::string> eos = {"a", "<eos>"};
    CHECK(error_kind_of([&] { sif_average(eos, table, v, stats); }) == ErrorKind::Invariant);
  }

  TEST_CASE("H identity, zero and random matrix against a naive product") {
    const std::vector<double> s = {0.3, -1.2, 2.5};
    nn::Mat eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1;
    CHECK(apply_h(s, eye) == s);
    for (double x : apply_h(s, nn::Mat(2, 3))) CHECK(x == 0.0);

    std::mt19937_64 rng(5);
    const auto h = testutil::random_mat(4, 3, rng);
    const auto got = apply_h(s, h);
    for (std::size_t r = 0; r < 4; ++r) {
      double acc = 0;
      for (std::size_t c = 0; c < 3; ++c) acc += h(r, c) * s[c];
      CHECK(std::abs(got[r] - acc) < 1e-12);
    }
    const auto t = apply_h(nn::Tensor::constant(nn::Mat::row_vector(s)), nn::Tensor::constant(h));
    for (std::size_t r = 0; r < 4; ++r) CHECK(std::abs(t.value().data[r] - got[r]) < 1e-12);
    CHECK(error_kind_of([&] { apply_h(s, nn::Mat(2, 2)); }) == ErrorKind::Shape);
  }
}
