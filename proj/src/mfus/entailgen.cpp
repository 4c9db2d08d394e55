#include "mfus/entailgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_map>

#include "mfus/embed.hpp"
#include "mfus/error.hpp"
#include "mfus/io.hpp"
#include "mfus/log.hpp"

namespace mfus {

HypernymLexicon HypernymLexicon::from_entries(std::vector<LexiconEntry> entries) {
  HypernymLexicon lex;
  std::map<std::string, std::set<std::string>> senses;          // lemma -> synsets
  std::map<std::string, std::set<std::string>> synset_hypers;   // synset -> hypernym synsets
  std::map<std::string, std::set<std::string>> synset_lemmas;   // synset -> lemmas
  for (const auto& e : entries) {
    if (e.lemma.empty() || e.hypernym_lemma.empty() || e.synset_id.empty() ||
        e.hypernym_synset_id.empty())
      fail(ErrorKind::Parse, "lexicon entry with an empty field");
    const std::string lemma = to_lower(e.lemma);
    const std::string hyper = to_lower(e.hypernym_lemma);
    if (lemma == hyper) fail(ErrorKind::Parse, "lexicon self-loop on '" + e.lemma + "'");
    senses[lemma].insert(e.synset_id);
    synset_hypers[e.synset_id].insert(e.hypernym_synset_id);
    synset_lemmas[e.synset_id].insert(lemma);
    synset_lemmas[e.hypernym_synset_id].insert(hyper);
  }
  for (const auto& [lemma, synsets] : senses) {
    std::set<std::string> out;
    for (const auto& s : synsets) {
      auto h = synset_hypers.find(s);
      if (h == synset_hypers.end()) continue;
      for (const auto& hs : h->second)
        for (const auto& l : synset_lemmas[hs])
          if (l != lemma) out.insert(l);
    }
    lex.hypernyms_[lemma].assign(out.begin(), out.end());
  }
  lex.entries_ = std::move(entries);
  return lex;
}

HypernymLexicon HypernymLexicon::parse(const std::string& contents) {
  std::vector<LexiconEntry> entries;
  std::size_t line_no = 0;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    const auto t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    const auto f = split(raw, '\t');
    if (f.size() != 4)
      fail(ErrorKind::Parse, "lexicon line " + std::to_string(line_no) + ": expected 4 fields");
    entries.push_back({std::string(trim(f[0])), std::string(trim(f[1])),
                       std::string(trim(f[2])), std::string(trim(f[3]))});
  }
  return from_entries(std::move(entries));
}

HypernymLexicon HypernymLexicon::load(const std::filesystem::path& path) {
  return parse(read_file(path));
}

const std::vector<std::string>& HypernymLexicon::hypernym_lemmas(const std::string& word) const {
  static const std::vector<std::string> none;
  auto it = hypernyms_.find(to_lower(word));
  return it == hypernyms_.end() ? none : it->second;
}

bool HypernymLexicon::is_hypernym_of(const std::string& general,
                                     const std::string& specific) const {
  const auto& h = hypernym_lemmas(specific);
  return std::binary_search(h.begin(), h.end(), to_lower(general));
}

const char* to_string(EntailLabel l) {
  switch (l) {
    case EntailLabel::Unlabeled: return "unlabeled";
    case EntailLabel::Entailment: return "entailment";
    case EntailLabel::Paraphrase: return "paraphrase";
    case EntailLabel::Other: return "other";
  }
  return "unlabeled";
}

EntailLabel entail_label_from_string(const std::string& s) {
  const std::string l = to_lower(trim(s));
  if (l.empty() || l == "unlabeled") return EntailLabel::Unlabeled;
  if (l == "entailment") return EntailLabel::Entailment;
  if (l == "paraphrase") return EntailLabel::Paraphrase;
  if (l == "other") return EntailLabel::Other;
  fail(ErrorKind::Parse, "unknown entailment label '" + s + "'");
}

namespace {

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    if (n) out += ' ';
    out += tokens[n];
  }
  return out;
}

bool never_replaced(const std::string& tok) {
  return tok == Vocabulary::kArg1 || tok == Vocabulary::kArg2 || tok == Vocabulary::kEos;
}

}  // namespace

std::vector<EntailmentCandidate> mine_candidates(const CooccurrenceMatrix& m,
                                                 const HypernymLexicon& lexicon) {
  std::map<std::vector<std::string>, std::size_t> by_tokens;
  for (std::size_t i : m.rows_of_kind(RowKind::Pattern)) by_tokens.emplace(m.row(i).tokens, i);

  std::vector<EntailmentCandidate> out;
  std::set<std::tuple<std::string, std::string, std::string, std::string>> seen;
  for (std::size_t i : m.rows_of_kind(RowKind::Pattern)) {
    const SentencePattern& p = m.row(i);
    for (std::size_t pos = 0; pos < p.tokens.size(); ++pos) {
      const std::string& word = p.tokens[pos];
      if (never_replaced(word)) continue;
      for (const std::string& hyper : lexicon.hypernym_lemmas(word)) {
        std::vector<std::string> sub = p.tokens;
        sub[pos] = hyper;
        auto it = by_tokens.find(sub);
        if (it == by_tokens.end() || it->second == i) continue;
        const SentencePattern& h = m.row(it->second);
        EntailmentCandidate c;
        c.premise = join(p.tokens);
        c.hypothesis = join(h.tokens);
        c.replaced = word;
        c.replacing = hyper;
        c.freq_premise = m.pattern_freq(i);
        c.freq_hypothesis = m.pattern_freq(it->second);
        c.candidate_freq = std::min(c.freq_premise, c.freq_hypothesis);
        if (!seen.emplace(c.premise, c.hypothesis, c.replaced, c.replacing).second) continue;
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

std::vector<EntailmentCandidate> exclude_mutual(const std::vector<EntailmentCandidate>& cands,
                                                const HypernymLexicon& lexicon) {
  std::vector<EntailmentCandidate> out;
  for (const auto& c : cands)
    if (!lexicon.is_hypernym_of(c.replaced, c.replacing)) out.push_back(c);
  return out;
}

Selection rank_and_select(const std::vector<EntailmentCandidate>& cands, long long n) {
  if (n <= 0) fail(ErrorKind::Config, "selection size must be positive");
  std::map<std::string, std::vector<EntailmentCandidate>> grouped;
  for (const auto& c : cands) grouped[c.hypothesis].push_back(c);

  Selection sel;
  for (auto& [hyp, members] : grouped) {
    std::stable_sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
      if (a.candidate_freq != b.candidate_freq) return a.candidate_freq > b.candidate_freq;
      return a.premise < b.premise;
    });
    if (members.size() > kPremisesPerHypothesis) members.resize(kPremisesPerHypothesis);
    HypothesisGroup g;
    g.hypothesis = hyp;
    double total = 0.0;
    for (const auto& c : members) total += static_cast<double>(c.candidate_freq);
    g.popularity = total / static_cast<double>(members.size());
    g.premises = std::move(members);
    sel.groups.push_back(std::move(g));
  }
  std::stable_sort(sel.groups.begin(), sel.groups.end(), [](const auto& a, const auto& b) {
    if (a.popularity != b.popularity) return a.popularity > b.popularity;
    return a.hypothesis < b.hypothesis;
  });
  const auto limit = static_cast<std::size_t>(n);
  for (const auto& g : sel.groups) {
    for (const auto& c : g.premises) {
      if (sel.selected.size() == limit) break;
      sel.selected.push_back(c);
    }
  }
  return sel;
}

EntailSplit split_by_hypernym(const std::vector<EntailmentCandidate>& selected,
                              double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    fail(ErrorKind::Config, "validation fraction must lie in (0,1)");
  std::map<std::string, std::size_t> sizes;
  for (const auto& c : selected) ++sizes[c.replacing];
  std::vector<std::string> order;
  for (const auto& [word, count] : sizes) order.push_back(word);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const double total = static_cast<double>(selected.size());
  const double target = val_fraction * total;
  for (const auto& [word, count] : sizes)
    if (static_cast<double>(count) > (1.0 - val_fraction) * total)
      warn("replacing word '" + word + "' covers " + std::to_string(count) + " of " +
           std::to_string(selected.size()) + " candidates; the split is best effort");

  std::set<std::string> val_words;
  double val_count = 0.0;
  for (const auto& word : order) {
    const double size = static_cast<double>(sizes[word]);
    if (val_count < target && val_count + size <= 1.5 * target) {
      val_words.insert(word);
      val_count += size;
    }
  }
  if (val_words.empty() && order.size() > 1) {
    const auto smallest = std::min_element(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      if (sizes[a] != sizes[b]) return sizes[a] < sizes[b];
      return a < b;
    });
    val_words.insert(*smallest);
  }

  EntailSplit out;
  for (auto c : selected) {
    if (val_words.count(c.replacing)) {
      c.split = "validation";
      out.validation.push_back(std::move(c));
    } else {
      c.split = "test";
      out.test.push_back(std::move(c));
    }
  }
  return out;
}

std::string candidates_tsv(const std::vector<EntailmentCandidate>& cands) {
  std::string out =
      "premise\thypothesis\treplaced\treplacing\tfreq_premise\tfreq_hypothesis\tcandidate_freq\t"
      "split\tlabel\n";
  for (const auto& c : cands) {
    out += c.premise + "\t" + c.hypothesis + "\t" + c.replaced + "\t" + c.replacing + "\t" +
           std::to_string(c.freq_premise) + "\t" + std::to_string(c.freq_hypothesis) + "\t" +
           std::to_string(c.candidate_freq) + "\t" + c.split + "\t" + to_string(c.label) + "\n";
  }
  return out;
}

namespace {

std::size_t parse_count(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "candidate line " + std::to_string(line_no) + ": bad count '" + s + "'");
  }
}

}  // namespace

std::vector<EntailmentCandidate> parse_candidates_tsv(const std::string& contents) {
  std::vector<EntailmentCandidate> out;
  std::size_t line_no = 0;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    if (trim(raw).empty() || raw.front() == '#') continue;
    if (line_no == 1 && raw.rfind("premise\t", 0) == 0) continue;
    const auto f = split(raw, '\t');
    if (f.size() != 9)
      fail(ErrorKind::Parse, "candidate line " + std::to_string(line_no) + ": expected 9 fields");
    EntailmentCandidate c;
    c.premise = f[0];
    c.hypothesis = f[1];
    c.replaced = f[2];
    c.replacing = f[3];
    c.freq_premise = parse_count(f[4], line_no);
    c.freq_hypothesis = parse_count(f[5], line_no);
    c.candidate_freq = parse_count(f[6], line_no);
    c.split = f[7];
    c.label = entail_label_from_string(f[8]);
    if (c.premise.empty() || c.hypothesis.empty() || c.premise == c.hypothesis)
      fail(ErrorKind::Parse, "candidate line " + std::to_string(line_no) +
                                 ": premise and hypothesis must be distinct patterns");
    out.push_back(std::move(c));
  }
  return out;
}

void merge_annotations(std::vector<EntailmentCandidate>& cands, const std::string& contents) {
  std::map<std::pair<std::string, std::string>, std::vector<EntailmentCandidate*>> index;
  for (auto& c : cands) index[{c.premise, c.hypothesis}].push_back(&c);
  std::size_t line_no = 0;
  for (const std::string& raw : lines(contents)) {
    ++line_no;
    if (trim(raw).empty() || raw.front() == '#') continue;
    const auto f = split(raw, '\t');
    if (f.size() != 3)
      fail(ErrorKind::Parse, "annotation line " + std::to_string(line_no) + ": expected 3 fields");
    auto it = index.find({f[0], f[1]});
    if (it == index.end()) {
      warn("annotation line " + std::to_string(line_no) + " matches no candidate");
      continue;
    }
    const EntailLabel label = entail_label_from_string(f[2]);
    for (auto* c : it->second) c->label = label;
  }
}

}  // namespace mfus
