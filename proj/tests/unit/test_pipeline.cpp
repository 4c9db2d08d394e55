#include <atomic>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mfus/io.hpp"
#include "mfus/pipeline.hpp"
#include "mfus/scoring.hpp"
#include "mfus/synthlab.hpp"
#include "mfus/uschema.hpp"
#include "test_util.hpp"

using namespace mfus;
using nlohmann::json;

namespace {

json small_config() {
  return {{"d_word", 16},   {"d_model", 16},  {"d_entity", 16},      {"enc_layers", 1},
          {"dec_layers", 1}, {"heads", 2},    {"ffn_dim", 16},       {"K", 3},
          {"K_rel", 3},      {"dropout", 0.0}, {"batch_size", 8},    {"max_epochs", 2},
          {"uschema_epochs", 3}, {"seed", 4},
          {"synth", {{"train_patterns", 30}, {"eval_patterns", 8}, {"pairs_per_relation", 16},
                     {"entail_pairs", 6}}}};
}

FacetModel small_model(const SynthData& d, std::size_t k) {
  ModelConfig c;
  c.d_word = c.d_model = c.d_entity = c.ffn_dim = 16;
  c.enc_layers = c.dec_layers = 1;
  c.heads = 2;
  c.k = c.k_rel = k;
  c.seed = 2;
  return FacetModel(c, Vocabulary::from_matrix(d.matrix), d.matrix.cols().names);
}

SynthData small_data() {
  SynthSpec s;
  s.train_patterns = 30;
  s.eval_patterns = 8;
  s.pairs_per_relation = 16;
  s.entail_pairs = 6;
  s.seed = 8;
  return generate(s);
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<std::atomic<int>> hits(97);
    parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                      if (i == 7) fail(ErrorKind::Numeric, "boom");
                    }),
                    Error);
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
  }

  TEST_CASE("retrieval scores are sim against relation facets, independent of threads") {
    const auto d = small_data();
    const auto model = small_model(d, 3);
    const auto rels = d.test.relations();
    const auto one = re_scores(model, d.test, rels, 1);
    const auto many = re_scores(model, d.test, rels, 3);
    CHECK(one == many);
    for (std::size_t n = 0; n < d.test.instances.size(); ++n) {
      const auto p = model.infer(tokenize(d.test.instances[n].pattern), RowKind::Pattern);
      for (std::size_t r = 0; r < rels.size(); ++r)
        CHECK(one[n][r] == sim(p, model.infer(tokenize(rels[r]), RowKind::KBRelation)));
    }
  }

  TEST_CASE("an empty eval pattern never fires") {
    testutil::WarningCapture w;
    const auto d = small_data();
    const auto model = small_model(d, 2);
    REEvalSet set;
    set.instances.push_back({"", "ep", {"rel_0"}});
    const auto s = re_scores(model, set, {"rel_0"}, 1);
    CHECK(std::isinf(s[0][0]));
    CHECK(s[0][0] < 0);
    CHECK(w.messages.size() == 1);
  }

  TEST_CASE("ensemble is the elementwise max on matrix rows only") {
    const auto d = small_data();
    const auto model = small_model(d, 3);
    UschemaConfig uc;
    uc.dim = 8;
    uc.epochs = 2;
    const auto fm = train_uschema(d.matrix, uc);
    REEvalSet set = d.test;
    // Training patterns are matrix rows; eval patterns are not.
    for (std::size_t i : d.matrix.rows_of_kind(RowKind::Pattern)) {
      if (set.instances.size() >= d.test.instances.size() + 5) break;
      set.instances.push_back({d.matrix.row(i).text, "ep", {"rel_0"}});
    }
    const auto rels = set.relations();
    const auto base = re_scores(model, set, rels, 1);
    const auto ens = re_scores(model, set, rels, 1, &fm, &d.matrix);
    std::size_t merged = 0;
    for (std::size_t n = 0; n < set.instances.size(); ++n) {
      const auto prow = d.matrix.find_row(RowKind::Pattern, set.instances[n].pattern);
      for (std::size_t r = 0; r < rels.size(); ++r) {
        const auto rrow = d.matrix.find_row(RowKind::KBRelation, rels[r]);
        double want = base[n][r];
        if (prow && rrow) {
          const double c = fm.row_cosine(*prow, *rrow);
          want = c > want ? c : want;
          ++merged;
        }
        CHECK(ens[n][r] == want);
      }
    }
    CHECK(merged > 0);
    CHECK(testutil::error_kind_of([&] { re_scores(model, set, rels, 1, &fm, nullptr); }) ==
          ErrorKind::Config);
  }

  TEST_CASE("entailment scores follow the scoring functions") {
    const auto d = small_data();
    const auto model = small_model(d, 3);
    const auto s = entail_scores(model, d.entailment, 2);
    REQUIRE(s.classification.size() == d.entailment.size());
    for (std::size_t n = 0; n < d.entailment.size(); ++n) {
      const auto& c = d.entailment[n];
      const auto p = model.infer(tokenize(c.premise), RowKind::Pattern);
      const auto h = model.infer(tokenize(c.hypothesis), RowKind::Pattern);
      CHECK(s.classification[n] == asym(p, h));
      CHECK(s.direction[n] == ours_diff(p, h).diff);
      CHECK(s.freq_direction[n] ==
            static_cast<double>(c.freq_hypothesis) - static_cast<double>(c.freq_premise));
    }
  }

  TEST_CASE("options override the config file") {
    const auto c = config_from_options(
        {{"config_json", small_config().dump()}, {"seed", 99}, {"ablation", "k11"}, {"encoder", "bilstm"}});
    CHECK(c.seed == 99);
    CHECK(c.ablation == Ablation::K11);
    CHECK(c.model.encoder == EncoderKind::BiLSTM);
    CHECK(testutil::error_kind_of([] { config_from_options(json::object()); }) ==
          ErrorKind::Config);
    CHECK(testutil::error_kind_of([] { config_from_options({{"config_json", "{"}}); }) ==
          ErrorKind::Config);
    CHECK(testutil::error_kind_of([] {
            run_command("nope", {{"config_json", "{}"}});
          }) == ErrorKind::Config);
  }

  TEST_CASE("commands chain end to end and manifests hash their outputs") {
    testutil::WarningCapture quiet;
    const auto dir = testutil::scratch("pipeline_chain");
    const std::string cfg = small_config().dump();
    auto opts = [&](json extra) {
      extra["config_json"] = cfg;
      return extra;
    };
    const auto synth = run_command("synth", opts({{"out", (dir / "data").string()}}));
    CHECK(synth["rows"].get<int>() > 0);
    const auto data = (dir / "data").string();
    const json train_opts = opts({{"out", (dir / "run").string()},
                                  {"matrix", data + "/cooccur.tsv"},
                                  {"embeddings", data + "/embeddings.txt"}});
    const auto tr = run_command("train", train_opts);
    CHECK(tr["epochs"] == 2);

    const auto manifest = json::parse(read_file(dir / "run" / "manifest.json"));
    CHECK(manifest["command"] == "train");
    for (const auto& [file, hash] : manifest["outputs"].items())
      CHECK(hash == sha256_hex(read_file(dir / "run" / file)));
    CHECK(manifest["inputs"]["matrix"]["sha256"] == sha256_hex(read_file(data + "/cooccur.tsv")));

    json again = train_opts;
    again["out"] = (dir / "run2").string();
    run_command("train", again);
    const auto manifest2 = json::parse(read_file(dir / "run2" / "manifest.json"));
    CHECK(manifest2["outputs"] == manifest["outputs"]);

    const std::string ckpt = tr["checkpoint"];
    const auto re = run_command("eval-re", opts({{"out", (dir / "re").string()},
                                                 {"checkpoint", ckpt},
                                                 {"eval_validation", data + "/eval_validation.tsv"},
                                                 {"eval_test", data + "/eval_test.tsv"}}));
    CHECK(re["test"]["f1"].get<double>() >= 0.0);
    const auto en = run_command("eval-entail", opts({{"out", (dir / "en").string()},
                                                     {"checkpoint", ckpt},
                                                     {"candidates", data + "/entail.tsv"}}));
    CHECK(en["ours"]["candidates"].get<int>() > 0);
    run_command("score", opts({{"out", (dir / "sc").string()}, {"checkpoint", ckpt},
                               {"matrix", data + "/cooccur.tsv"}}));
    CHECK(read_file(dir / "sc" / "scores.csv").rfind("i,j,asym_ij,asym_ji,sim,ours_diff\n", 0) == 0);
  }

  TEST_CASE("missing inputs are configuration errors and inputs come from the config") {
    const auto dir = testutil::scratch("pipeline_inputs");
    json cfg = small_config();
    CHECK(testutil::error_kind_of([&] {
            run_command("train", {{"config_json", cfg.dump()}, {"out", dir.string()}});
          }) == ErrorKind::Config);
    small_data().matrix.save(dir / "m.tsv");
    cfg["inputs"] = {{"matrix", (dir / "m.tsv").string()}};
    cfg["max_epochs"] = 1;
    testutil::WarningCapture quiet;
    const auto r =
        run_command("train", {{"config_json", cfg.dump()}, {"out", (dir / "run").string()}});
    CHECK(r["epochs"] == 1);
  }
}
