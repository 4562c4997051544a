// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "topicllm/cli.hpp"
#include "topicllm/topicllm.hpp"

using namespace topicllm;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() /
             ("topicllm-acceptance-" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  return dir;
}

// 1. Analytic DPO gradient vs central finite differences.
void gradient_check(Check& c) {
  const auto start = std::chrono::steady_clock::now();
  auto summary = dpo::run_gradcheck(100, 42, dpo::Beta(0.1), 1e-5, 8, 6);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.expect(summary.instances >= 100, "fewer than 100 instances");
  c.expect(summary.max_relative_error <= 1e-5, "max relative error " + std::to_string(summary.max_relative_error));
  c.expect(seconds < 5.0, "took " + std::to_string(seconds) + " s");
  c.why << (c.ok ? "" : "; ") << "max rel err " << summary.max_relative_error << ", " << seconds << " s";
}

// 2. Loss identities and monotonicity.
void loss_identities(Check& c) {
  const dpo::Beta beta(0.1);
  c.expect(std::abs(dpo::dpo_loss({-1.2, -3.4, -1.2, -3.4}, beta) - std::log(2.0)) <= 1e-12, "loss at symmetry");
  c.expect(std::abs(dpo::implicit_reward(-2.5, -2.5, beta)) <= 1e-12, "reward at symmetry");
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const double d = -60.0 + 120.0 * i / 999.0;
    const double loss = dpo::dpo_loss({-5.0 + d, -5.0, -5.0, -5.0}, beta);
    c.expect(loss >= 0.0 && loss < prev, "non-monotone at " + std::to_string(d));
    prev = loss;
  }
}

// 3. Similar N against a brute-force double loop, plus hand examples.
void similar_n_oracle(Check& c) {
  auto brute = [](const std::vector<std::string>& topics) {
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < topics.size(); ++i) {
      for (std::size_t j = i + 1; j < topics.size(); ++j) {
        auto a = embed_local(topics[i]), b = embed_local(topics[j]);
        double d = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < a.dim(); ++k) {
          d += a.values[k] * b.values[k];
          na += a.values[k] * a.values[k];
          nb += b.values[k] * b.values[k];
        }
        sum += d / std::sqrt(na * nb);
        ++pairs;
      }
    }
    return sum / pairs;
  };
  const auto& pool = fixture::canonical_topics();
  std::mt19937 rng(3);
  LocalEmbedder embedder;
  for (int trial = 0; trial < 50; ++trial) {
    std::set<std::string> used;
    std::vector<std::string> topics;
    const std::size_t n = 2 + rng() % 9;
    while (topics.size() < n) {
      const auto& t = pool[rng() % pool.size()];
      if (used.insert(t).second) topics.push_back(t);
    }
    TopicStats stats;
    for (const auto& t : topics) stats.add(t);
    const double got = similar_n(stats, 10, embedder).value;
    c.expect(std::abs(got - brute(topics)) <= 1e-12, "trial " + std::to_string(trial));
  }
  auto hand = [](std::unordered_map<std::string, std::vector<double>> table) {
    TableEmbedder e(std::move(table));
    TopicStats s;
    for (const char* t : {"a", "b", "c"}) s.add(t);
    return similar_n(s, 10, e).value;
  };
  const double h = std::sqrt(2.0) / 2.0;
  c.expect(std::abs(hand({{"a", {1, 1}}, {"b", {2, 2}}, {"c", {3, 3}}}) - 1.0) <= 1e-6, "identical case");
  c.expect(std::abs(hand({{"a", {1, 0, 0}}, {"b", {0, 1, 0}}, {"c", {0, 0, 1}}})) <= 1e-6, "orthogonal case");
  c.expect(std::abs(hand({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {h, h}}}) - 0.4714045207910317) <= 1e-6,
           "mixed case");
}

// 4. Matrix assignment vs exhaustive oracle, reconstruction idempotence, baseballs -> Baseball.
void matrix_oracle(Check& c) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    const std::size_t k = 1 + rng() % n;
    std::unordered_map<std::string, std::vector<double>> table;
    std::vector<std::string> names;
    std::vector<int> counts;
    TopicStats stats;
    for (std::size_t i = 0; i < n; ++i) {
      names.push_back("t" + std::to_string(i));
      table[names.back()] = {u(rng), u(rng), u(rng)};
      counts.push_back(static_cast<int>(1 + rng() % 4));
      for (int j = 0; j < counts.back(); ++j) stats.add(names.back());
    }
    TableEmbedder embedder(table);
    auto m = build_matrix(stats, embedder, k, 0.5);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return counts[a] > counts[b]; });
    auto cos = [&](const std::string& a, const std::string& b) {
      const auto &x = table[a], &y = table[b];
      double d = 0, nx = 0, ny = 0;
      for (int i = 0; i < 3; ++i) {
        d += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
      }
      return d / std::sqrt(nx * ny);
    };
    for (std::size_t r = k; r < n; ++r) {
      const std::string& topic = names[order[r]];
      std::string expected;
      double best = -2.0;
      for (std::size_t cidx = 0; cidx < k; ++cidx) {
        const std::string& cand = names[order[cidx]];
        const double s = cos(cand, topic);
        if (s >= 0.5 && s > best) {
          best = s;
          expected = cand;
        }
      }
      const MatrixEntry* e = m.lookup(topic);
      c.expect((e ? e->canonical : std::string()) == expected, "assignment mismatch in trial " + std::to_string(trial));
    }
  }

  TopicStats stats;
  for (int i = 0; i < 5; ++i) stats.add("Baseball");
  for (int i = 0; i < 3; ++i) stats.add("Hockey");
  stats.add("baseballs");
  for (const auto& [canon, variant] : fixture::variants()) {
    for (int i = 0; i < 3; ++i) stats.add(canon);
    stats.add(variant);
  }
  LocalEmbedder local;
  auto m = build_matrix(stats, local, fixture::variants().size());
  TopicRecord rec = make_record("x", "p", "baseballs, Hockey", kDefaultSentinel);
  auto r = reconstruct_record(rec, m);
  c.expect(!r.accepted.empty() && r.accepted.front() == "Baseball" && r.modified, "baseballs was not replaced");

  std::vector<std::string> pool = {"Baseball", "baseballs", "Hockey", "Jazz", "ice hockey", "Medicine", "medicines"};
  std::mt19937 prng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> topics;
    for (std::size_t i = 0; i < 1 + prng() % 5; ++i) topics.push_back(pool[prng() % pool.size()]);
    auto once = reconstruct_topics(topics, m);
    auto twice = reconstruct_topics(once.accepted, m);
    c.expect(once.accepted == twice.accepted && !twice.modified, "reconstruction not idempotent");
  }
}

// 5. Dynamic seeds against an independent frequency recount.
void dynamic_seeds(Check& c) {
  Corpus corpus;
  ScriptedChatBackend backend;
  std::vector<std::vector<std::string>> outputs;
  const std::vector<std::string> names = {"Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta",
                                          "Eta", "Theta", "Iota", "Kappa", "Lambda", "Mu"};
  for (int i = 0; i < 25; ++i) {
    const std::string marker = "<doc " + std::to_string(i) + ">";
    corpus.documents.push_back(Document{"d" + std::to_string(i), marker + " text", {}, {}});
    std::vector<std::string> topics = {names[i % 12], names[(i * 5 + 3) % 12]};
    if (topics[0] == topics[1]) topics.pop_back();
    if (i % 7 == 6) topics.clear();
    outputs.push_back(topics);
    backend.add_rule(marker, topics.empty() ? "No related topics" : join(topics, ", "));
  }
  DynamicOptions opts;
  opts.warmup_n = 20;
  opts.seed_k = 10;
  auto run = extract_dynamic(corpus, {"Initial"}, backend, opts);

  c.expect(run.spec_history.size() >= 2 && run.spec_history[1].doc_index == 21, "first recomputation not at 21");
  for (std::size_t i = 0; i <= 20; ++i) {
    c.expect(seeds_at(run, i) == std::vector<std::string>{"Initial"}, "seeds changed during warmup");
  }
  for (std::size_t i = 21; i < 25; ++i) {
    std::map<std::string, int> count;
    std::map<std::string, int> first;
    int pos = 0;
    for (std::size_t j = 0; j < i; ++j) {
      for (const auto& t : outputs[j]) {
        if (!first.count(t)) first[t] = pos++;
        ++count[t];
      }
    }
    std::vector<std::string> ranked;
    for (const auto& [t, n] : count) ranked.push_back(t);
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      return count[a] != count[b] ? count[a] > count[b] : first[a] < first[b];
    });
    if (ranked.size() > 10) ranked.resize(10);
    c.expect(seeds_at(run, i) == ranked, "seeds at index " + std::to_string(i));
    c.expect(run.records[i].prompt.find("example topics: " + join(ranked, ", ") + ".") != std::string::npos,
             "prompt at index " + std::to_string(i));
  }
}

// 6. End-to-end fixture through the CLI: pair counts, split sizes, byte-identical rerun.
void end_to_end(Check& c) {
  const auto dir = scratch_dir();
  auto f = fixture::make(100);
  auto files = fixture::write(f, dir);
  std::ostringstream sink;
  auto run_cli = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  auto pipeline = [&](const std::string& tag) {
    auto p = [&](const std::string& n) { return (dir / (tag + n)).string(); };
    int rc = 0;
    rc |= run_cli({"extract", "--corpus", files.corpus.string(), "--mock-script", files.granularity_script.string(),
               "--strategy", "granularity", "--granularity", "Newsgroup discussion themes", "--out", p("run.jsonl")});
    rc |= run_cli({"extract", "--corpus", files.corpus.string(), "--mock-script", files.ood_script.string(), "--strategy",
               "granularity", "--granularity", "COVID-19", "--out", p("ood.jsonl")});
    rc |= run_cli({"build-matrix", "--run", p("run.jsonl"), "--out", p("matrix.json")});
    rc |= run_cli({"build-dpo", "--run", p("run.jsonl"), "--matrix", p("matrix.json"), "--hallucination-run",
               p("ood.jsonl"), "--out", p("pairs.jsonl")});
    return rc;
  };
  c.expect(pipeline("a_") == 0, "pipeline failed: " + sink.str());
  c.expect(pipeline("b_") == 0, "second pipeline failed");
  if (c.ok) {
    auto pairs = read_pairs(dir / "a_pairs.jsonl");
    std::size_t g = 0, h = 0;
    for (const auto& p : pairs) (p.kind == PairKind::kGranularity ? g : h)++;
    c.expect(g == f.expected_granularity_pairs, "granularity pairs " + std::to_string(g));
    c.expect(h == f.expected_hallucination_pairs, "hallucination pairs " + std::to_string(h));
    for (const char* n : {"run.jsonl", "ood.jsonl", "matrix.json", "pairs.jsonl"}) {
      c.expect(read_file(dir / (std::string("a_") + n)) == read_file(dir / (std::string("b_") + n)),
               std::string(n) + " differs between reruns");
    }
  }

  std::vector<PreferencePair> synthetic;
  for (int i = 0; i < 3400; ++i) {
    synthetic.push_back({"p" + std::to_string(i), "c", "r", i % 3 == 0 ? PairKind::kHallucination : PairKind::kGranularity,
                         "d" + std::to_string(i)});
  }
  auto ds = split(synthetic, 600.0 / 3400.0, 42);
  c.expect(ds.train.size() == 2800 && ds.validation.size() == 600, "split sizes");
  std::filesystem::remove_all(dir);
  c.why << (c.ok ? "" : "; ") << f.expected_granularity_pairs << " granularity + " << f.expected_hallucination_pairs
        << " hallucination pairs, split 2800/600";
}

// 7. Rate arithmetic.
void rates_arithmetic(Check& c) {
  std::mt19937 rng(5);
  const std::vector<Verdict> triple = {Verdict::kAdherent, Verdict::kHallucinated, Verdict::kAligned};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<JudgmentRecord> js;
    const int n = 1 + static_cast<int>(rng() % 200);
    for (int i = 0; i < n; ++i) js.push_back({"d" + std::to_string(i), triple[rng() % 3], JudgmentSource::kAuto});
    auto r = rates(js, true);
    c.expect(std::abs(r[Verdict::kAdherent] + r[Verdict::kHallucinated] + r[Verdict::kAligned] - 100.0) <= 1e-9,
             "triple does not sum to 100");
  }
  std::vector<JudgmentRecord> js;
  for (int i = 0; i < 100; ++i) {
    js.push_back({"d" + std::to_string(i), i < 50 ? Verdict::kAdherent : i < 55 ? Verdict::kHallucinated : Verdict::kAligned,
                  JudgmentSource::kHuman});
  }
  auto r = rates(js, true);
  c.expect(r[Verdict::kAdherent] == 50.0 && r[Verdict::kHallucinated] == 5.0 && r[Verdict::kAligned] == 45.0,
           "50/5/45 fixture");
}

// 8. MI boundary cases.
void mi_boundaries(Check& c) {
  Corpus corpus;
  std::vector<TopicRecord> same, ortho;
  std::unordered_map<std::string, std::vector<double>> table;
  const std::vector<std::string> labels = {"Baseball", "Hockey", "Space", "Medicine"};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    corpus.documents.push_back(Document{"d" + std::to_string(i), "text", labels[i], {}});
    same.push_back(make_record("d" + std::to_string(i), "p", labels[i], kDefaultSentinel));
    ortho.push_back(make_record("d" + std::to_string(i), "p", "o" + std::to_string(i), kDefaultSentinel));
    std::vector<double> lv(8, 0.0), ov(8, 0.0);
    lv[i] = 1.0;
    ov[4 + i] = 1.0;
    table[labels[i]] = lv;
    table["o" + std::to_string(i)] = ov;
  }
  LocalEmbedder local;
  TableEmbedder fixed(table);
  const double one = mutual_information(same, corpus, local).value;
  const double zero = mutual_information(ortho, corpus, fixed).value;
  c.expect(std::abs(one - 1.0) <= 1e-12, "identical case gave " + std::to_string(one));
  c.expect(std::abs(zero) <= 1e-12, "orthogonal case gave " + std::to_string(zero));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"DPO gradient check (100 random toy instances, step 1e-5, tol 1e-5, < 5 s)", gradient_check},
      {"DPO loss identities and monotonicity", loss_identities},
      {"Similar N oracle equivalence and hand examples", similar_n_oracle},
      {"Replacement matrix oracle, reconstruction idempotence, baseballs -> Baseball", matrix_oracle},
      {"Dynamic seed topics recount (25 docs, warmup 20, seed_k 10)", dynamic_seeds},
      {"End-to-end fixture pair counts, 2800/600 split, byte-identical rerun", end_to_end},
      {"Hallucination rate arithmetic (triple sums to 100, 50/5/45)", rates_arithmetic},
      {"MI boundary cases (1.0 and 0.0)", mi_boundaries},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.why << "exception: " << e.what();
    }
    const std::string detail = c.why.str();
    std::cout << (c.ok ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first
              << (detail.empty() ? "" : "  [" + detail + "]") << "\n";
    failures += c.ok ? 0 : 1;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
