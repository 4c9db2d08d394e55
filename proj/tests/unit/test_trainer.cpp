#include "doctest.h"
#include "mfus/io.hpp"
#include "mfus/synthlab.hpp"
#include "mfus/trainer.hpp"
#include "test_util.hpp"

using namespace mfus;
using testutil::error_kind_of;

namespace {

SynthSpec tiny_spec(std::uint64_t seed) {
  SynthSpec s;
  s.train_patterns = 40;
  s.eval_patterns = 10;
  s.pairs_per_relation = 20;
  s.entail_pairs = 4;
  s.seed = seed;
  return s;
}

RunConfig tiny_run(std::uint64_t seed, std::size_t epochs) {
  RunConfig c;
  c.model.d_word = 16;
  c.model.d_model = 16;
  c.model.d_entity = 16;
  c.model.enc_layers = c.model.dec_layers = 1;
  c.model.heads = 2;
  c.model.ffn_dim = 16;
  c.model.k = 3;
  c.model.k_rel = 3;
  c.model.dropout = 0.1;
  c.max_epochs = epochs;
  c.seed = seed;
  return c;
}

struct Prepared {
  SynthData data;
  Vocabulary vocab;
  nn::Mat words;
  SplitAssignment split;
};

Prepared prepare(std::uint64_t seed) {
  Prepared p{generate(tiny_spec(seed)), {}, {}, {}};
  p.vocab = Vocabulary::from_matrix(p.data.matrix);
  p.words = parse_embeddings(p.data.embeddings_text, p.vocab, seed).matrix;
  p.split = split_validation(p.data.matrix, 0.1, seed);
  return p;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("training loss falls over the first three epochs") {
    testutil::WarningCapture quiet;
    // Noise-free corpus, no dropout, batch 8 so each epoch takes many steps.
    int decreasing = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      SynthSpec spec;
      spec.noise = 0.0;
      spec.seed = seed;
      Prepared p{generate(spec), {}, {}, {}};
      p.vocab = Vocabulary::from_matrix(p.data.matrix);
      p.words = parse_embeddings(p.data.embeddings_text, p.vocab, seed).matrix;
      p.split = split_validation(p.data.matrix, 0.05, seed);
      RunConfig c = tiny_run(seed, 3);
      c.model.dropout = 0.0;
      c.batch_size = 8;
      const auto r = train(p.data.matrix, p.split, p.vocab, p.words, c);
      const auto& e = r.report.epochs;
      REQUIRE(e.size() == 3);
      if (e[1].train_loss < e[0].train_loss && e[2].train_loss < e[1].train_loss) ++decreasing;
    }
    CHECK(decreasing >= 9);
  }

  TEST_CASE("zero model learning rate leaves everything but H untouched") {
    testutil::WarningCapture quiet;
    const auto p = prepare(2);
    RunConfig c = tiny_run(2, 1);
    c.lr_model = 0.0;
    c.uschema_init = false;
    const auto r = train(p.data.matrix, p.split, p.vocab, p.words, c);
    FacetModel fresh(c.effective_model(), p.vocab, p.data.matrix.cols().names, &p.words);
    for (const auto& [name, t] : r.model.params().all()) {
      if (name == "H") {
        CHECK(t.value().data != fresh.params().get(name).value().data);
      } else {
        CHECK_MESSAGE(t.value().data == fresh.params().get(name).value().data, name);
      }
    }
  }

  TEST_CASE("identical runs give identical checkpoints") {
    testutil::WarningCapture quiet;
    const auto p = prepare(3);
    const auto a = train(p.data.matrix, p.split, p.vocab, p.words, tiny_run(3, 2));
    const auto b = train(p.data.matrix, p.split, p.vocab, p.words, tiny_run(3, 2));
    CHECK(checkpoint_bytes(a.model) == checkpoint_bytes(b.model));
    CHECK(a.report.to_jsonl(false) == b.report.to_jsonl(false));
  }

  TEST_CASE("no_autoencoder zeroes the regularizer and k11 widens both facet sets") {
    testutil::WarningCapture quiet;
    const auto p = prepare(4);
    RunConfig c = tiny_run(4, 1);
    c.ablation = Ablation::NoAutoencoder;
    const auto r = train(p.data.matrix, p.split, p.vocab, p.words, c);
    for (const auto& e : r.report.epochs) CHECK(e.train_regularizer == 0.0);
    CHECK(c.reg().enabled == false);

    c.ablation = Ablation::K11;
    CHECK(c.effective_model().k == 11);
    CHECK(c.effective_model().k_rel == 11);
    FacetModel m(c.effective_model(), p.vocab, p.data.matrix.cols().names, &p.words);
    CHECK(m.infer(p.data.matrix.row(0).tokens, RowKind::Pattern).size() == 11);
    CHECK(m.infer({"rel_0"}, RowKind::KBRelation).size() == 11);
  }

  TEST_CASE("factorization init beats random init on validation loss at epoch 5") {
    testutil::WarningCapture quiet;
    int wins = 0;
    // Default benchmark corpus.
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      SynthSpec spec;
      spec.seed = seed;
      Prepared p{generate(spec), {}, {}, {}};
      p.vocab = Vocabulary::from_matrix(p.data.matrix);
      p.words = parse_embeddings(p.data.embeddings_text, p.vocab, seed).matrix;
      p.split = split_validation(p.data.matrix, 0.1, seed);
      RunConfig c = tiny_run(seed, 5);
      c.model.dropout = 0.0;
      c.batch_size = 8;
      c.uschema_epochs = 20;
      const auto with = train(p.data.matrix, p.split, p.vocab, p.words, c);
      c.uschema_init = false;
      const auto without = train(p.data.matrix, p.split, p.vocab, p.words, c);
      if (with.report.epochs.back().validation_loss < without.report.epochs.back().validation_loss)
        ++wins;
    }
    CHECK(wins >= 7);
  }

  TEST_CASE("epoch selection takes the first minimum, else the last epoch") {
    testutil::WarningCapture quiet;
    std::vector<EpochRecord> e(3);
    for (std::size_t n = 0; n < 3; ++n) e[n].epoch = n + 1;
    CHECK(select_epoch(e) == 3);
    e[0].has_validation = e[1].has_validation = e[2].has_validation = true;
    e[0].validation_loss = 0.5;
    e[1].validation_loss = 0.2;
    e[2].validation_loss = 0.2;
    CHECK(select_epoch(e) == 2);
  }

  TEST_CASE("epoch plan: weights average to one and negatives stay inside the rows") {
    testutil::WarningCapture quiet;
    const auto p = prepare(5);
    const auto& rows = p.split.train_rows;
    const auto plans = plan_epoch(p.data.matrix, rows, 8, 1, 11, true);
    double total = 0;
    std::size_t n = 0;
    std::set<std::size_t> allowed(rows.begin(), rows.end());
    for (const auto& b : plans) {
      for (const auto& s : b.samples) {
        total += s.weight;
        ++n;
        CHECK(allowed.count(s.row));
        CHECK(p.data.matrix.contains(s.row, s.col) == (s.y == 1));
      }
      for (const auto& [i, q] : b.regularizer_pairs) {
        CHECK(i != q);
        CHECK(allowed.count(q));
      }
    }
    CHECK(std::abs(total / static_cast<double>(n) - 1.0) < 1e-9);
  }

  TEST_CASE("coordinate descent picks per-axis optima") {
    testutil::WarningCapture quiet;
    RunConfig base = tiny_run(0, 1);
    const std::vector<HpoAxis> one = {{"gamma", {0.1, 0.2, 0.3}}};
    auto f1 = [](const RunConfig& c) { return -std::abs(c.gamma - 0.2); };
    const auto r1 = coordinate_descent_hpo(base, one, f1);
    CHECK(r1.best.gamma == 0.2);

    const std::vector<HpoAxis> two = {{"gamma", {0.1, 0.2, 0.3}}, {"dropout", {0.25, 0.3, 0.35}}};
    auto f2 = [](const RunConfig& c) {
      return -std::abs(c.gamma - 0.3) - std::abs(c.model.dropout - 0.25);
    };
    const auto r2 = coordinate_descent_hpo(base, two, f2);
    CHECK(r2.best.gamma == 0.3);
    CHECK(r2.best.model.dropout == 0.25);
    CHECK(r2.best_score == doctest::Approx(0.0));
  }

  TEST_CASE("default search ranges") {
    testutil::WarningCapture quiet;
    const auto axes = default_search_axes();
    REQUIRE(axes.size() == 6);
    auto values = [&](const std::string& name) {
      for (const auto& a : axes)
        if (a.name == name) return nlohmann::json(a.values).dump();
      return std::string();
    };
    CHECK(values("gamma") == "[0.1,0.2,0.3]");
    CHECK(values("K") == "[1,2,3,4,5,6,11]");
    CHECK(values("K_rel") == "[1,8,9,10,11,12,13,14,15]");
    CHECK(values("dropout") == "[0.25,0.3,0.35]");
    CHECK(values("lr_H") == "[1.0,0.1,0.01]");
    CHECK(values("max_epochs") == "[15,20,25,30,50]");
  }

  TEST_CASE("run config JSON round trip and rejection of unknown keys") {
    testutil::WarningCapture quiet;
    RunConfig c = tiny_run(7, 4);
    c.extra["synth"] = {{"relations", 3}};
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(error_kind_of([] { RunConfig::parse(R"({"gama": 0.2})"); }) == ErrorKind::Config);
    CHECK(error_kind_of([] { RunConfig::parse(R"({"ablation": "bogus"})"); }) == ErrorKind::Config);
    CHECK(error_kind_of([] { RunConfig::parse("{not json"); }) == ErrorKind::Config);
    RunConfig d;
    CHECK(d.epochs() == 50);
    d.model.encoder = EncoderKind::BiLSTM;
    CHECK(d.epochs() == 30);
  }

  TEST_CASE("Adam and plain gradient steps") {
    testutil::WarningCapture quiet;
    nn::Tensor x = nn::Tensor::leaf(nn::Mat::row_vector({1.0, -2.0}), true);
    nn::backward(nn::squared_norm(x));
    std::vector<nn::Tensor*> ps = {&x};
    Adam adam(0.1);
    adam.step(ps);
    // First Adam step moves each coordinate by lr against the gradient sign.
    CHECK(x.value().data[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(x.value().data[1] == doctest::Approx(-1.9).epsilon(1e-6));
    nn::Tensor y = nn::Tensor::leaf(nn::Mat::row_vector({1.0}), true);
    nn::backward(nn::squared_norm(y));
    sgd_step(y, 0.25);
    CHECK(y.value().data[0] == 0.5);
  }
}
