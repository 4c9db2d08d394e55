#include "doctest.h"
#include "mfus/io.hpp"
#include "mfus/model.hpp"
#include "test_util.hpp"

using namespace mfus;
using testutil::error_kind_of;

namespace {

ModelConfig small_config(EncoderKind enc = EncoderKind::Transformer) {
  ModelConfig c;
  c.d_word = 8;
  c.d_model = 12;
  c.d_entity = 6;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.lstm_layers = 2;
  c.heads = 3;
  c.ffn_dim = 10;
  c.k = 3;
  c.k_rel = 5;
  c.encoder = enc;
  c.dropout = 0.3;
  c.seed = 21;
  return c;
}

FacetModel small_model(EncoderKind enc = EncoderKind::Transformer, std::size_t k = 3) {
  ModelConfig c = small_config(enc);
  c.k = k;
  return FacetModel(c, Vocabulary::from_tokens({"born", "in", "the", "city", "of", "rel"}),
                    {"e0", "e1", "e2"});
}

const std::vector<std::string> kPattern = {"$ARG1", "born", "in", "the", "city", "$ARG2"};

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("encoder output has one row per token plus <eos>") {
    for (auto enc : {EncoderKind::Transformer, EncoderKind::BiLSTM}) {
      const auto m = small_model(enc);
      std::mt19937_64 rng(0);
      const auto out = m.encode({"born"}, false, rng);
      CHECK(out.states.rows() == 2);
      CHECK(out.summary.rows() == 1);
      CHECK(out.summary.cols() == 12);
    }
  }

  TEST_CASE("inference is deterministic") {
    for (auto enc : {EncoderKind::Transformer, EncoderKind::BiLSTM}) {
      const auto m = small_model(enc);
      CHECK(m.infer(kPattern, RowKind::Pattern).facets.data ==
            m.infer(kPattern, RowKind::Pattern).facets.data);
    }
  }

  TEST_CASE("word order matters to the summary") {
    for (auto enc : {EncoderKind::Transformer, EncoderKind::BiLSTM}) {
      const auto m = small_model(enc);
      std::mt19937_64 rng(0);
      auto swapped = kPattern;
      std::swap(swapped[2], swapped[3]);
      const auto a = m.encode(kPattern, false, rng).summary.value().data;
      const auto b = m.encode(swapped, false, rng).summary.value().data;
      CHECK(a != b);
    }
  }

  TEST_CASE("facet counts follow K and K_rel") {
    const auto m = small_model(EncoderKind::Transformer, 1);
    CHECK(m.infer(kPattern, RowKind::Pattern).size() == 1);
    CHECK(m.infer({"rel"}, RowKind::KBRelation).size() == 5);
    ModelConfig c = small_config();
    c.k = 5;
    c.k_rel = 11;
    FacetModel paper(c, Vocabulary::from_tokens({"rel"}), {"e0"});
    CHECK(paper.infer({"rel"}, RowKind::KBRelation).size() == 11);
    CHECK(paper.infer({"rel"}, RowKind::Pattern).size() == 5);
    CHECK(paper.infer({"rel"}, RowKind::Pattern).facets.cols == c.d_entity);
  }

  TEST_CASE("swapping two slot maps swaps the two facets exactly") {
    auto m = small_model(EncoderKind::Transformer, 2);
    const auto before = m.infer(kPattern, RowKind::Pattern).facets;
    for (const char* part : {"w", "b"}) {
      nn::Tensor a = m.params().get(std::string("ld.0.") + part);
      nn::Tensor b = m.params().get(std::string("ld.1.") + part);
      std::swap(a.mutable_value().data, b.mutable_value().data);
    }
    const auto after = m.infer(kPattern, RowKind::Pattern).facets;
    for (std::size_t c = 0; c < before.cols; ++c) {
      CHECK(after(0, c) == before(1, c));
      CHECK(after(1, c) == before(0, c));
    }
  }

  TEST_CASE("dropout changes training outputs but not inference") {
    const auto m = small_model();
    std::mt19937_64 r1(1), r2(2);
    const auto a = m.facets(kPattern, RowKind::Pattern, true, r1).value().data;
    const auto b = m.facets(kPattern, RowKind::Pattern, true, r2).value().data;
    CHECK(a != b);
  }

  TEST_CASE("empty and over-long inputs are rejected") {
    const auto m = small_model();
    std::mt19937_64 rng(0);
    CHECK(error_kind_of([&] { m.encode({}, false, rng); }) == ErrorKind::EmptyInput);
    std::vector<std::string> longer(64, "the");
    CHECK(error_kind_of([&] { m.encode(longer, false, rng); }) == ErrorKind::Config);
    const auto enc = m.encode(kPattern, false, rng);
    CHECK(error_kind_of([&] { m.decode_facets(enc, 0, false, rng); }) == ErrorKind::Config);
    CHECK(error_kind_of([&] { m.decode_facets(enc, 6, false, rng); }) == ErrorKind::Config);
  }

  TEST_CASE("config validation and JSON round trip") {
    ModelConfig c = small_config();
    CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
    c.heads = 5;
    CHECK(error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
    c = small_config(EncoderKind::BiLSTM);
    c.d_model = 9;
    c.heads = 3;
    CHECK(error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
    CHECK(error_kind_of([] { encoder_kind_from_string("gru"); }) == ErrorKind::Config);
  }

  TEST_CASE("checkpoint save, load, save is byte identical and replays bit-exactly") {
    for (auto enc : {EncoderKind::Transformer, EncoderKind::BiLSTM}) {
      const auto m = small_model(enc);
      const auto dir = testutil::scratch("ckpt");
      save_checkpoint(m, dir / "a.mfus");
      const auto back = load_checkpoint(dir / "a.mfus");
      save_checkpoint(back, dir / "b.mfus");
      CHECK(read_file(dir / "a.mfus") == read_file(dir / "b.mfus"));
      CHECK(back.infer(kPattern, RowKind::Pattern).facets.data ==
            m.infer(kPattern, RowKind::Pattern).facets.data);
      CHECK(back.infer({"rel"}, RowKind::KBRelation).facets.data ==
            m.infer({"rel"}, RowKind::KBRelation).facets.data);
      CHECK(back.entity_ids() == m.entity_ids());
      CHECK(back.vocab().tokens() == m.vocab().tokens());
    }
  }

  TEST_CASE("corrupted containers are rejected") {
    const std::string bytes = checkpoint_bytes(small_model());
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK(error_kind_of([&] { checkpoint_from_bytes(bad); }) == ErrorKind::Format);
    CHECK(error_kind_of([&] { checkpoint_from_bytes(bytes.substr(0, bytes.size() / 2)); }) ==
          ErrorKind::Format);
    CHECK(error_kind_of([&] { checkpoint_from_bytes(bytes + "x"); }) == ErrorKind::Format);
    bad = bytes;
    bad[4] = 9;  // container version
    CHECK(error_kind_of([&] { checkpoint_from_bytes(bad); }) == ErrorKind::Format);
  }

  TEST_CASE("container layout: magic, version, count and f64 tensors") {
    const std::string bytes = encode_container({{"t", nn::Mat::from(1, 2, {1.5, -2.0})}}, {{"k", 1}});
    CHECK(bytes.substr(0, 4) == "MFUS");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 1);
    const auto [tensors, meta] = decode_container(bytes);
    REQUIRE(tensors.size() == 1);
    CHECK(tensors[0].name == "t");
    CHECK(tensors[0].value.data == std::vector<double>{1.5, -2.0});
    CHECK(meta["k"] == 1);
  }

  TEST_CASE("normalized facet view rejects zero rows") {
    FacetSet f{nn::Mat::from(2, 2, {3, 4, 0, 0})};
    CHECK(error_kind_of([&] { f.normalized(); }) == ErrorKind::Numeric);
    f.facets(1, 0) = 2;
    const auto n = f.normalized();
    CHECK(n(0, 0) == doctest::Approx(0.6));
    CHECK(n(1, 0) == 1.0);
  }

  TEST_CASE("sinusoidal positions start at sin 0, cos 0") {
    const auto p = sinusoidal_positions(3, 4);
    CHECK(p(0, 0) == 0.0);
    CHECK(p(0, 1) == 1.0);
    CHECK(p(1, 0) == doctest::Approx(std::sin(1.0)));
  }
}
