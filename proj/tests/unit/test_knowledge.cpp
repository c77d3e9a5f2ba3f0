#include "doctest.h"
#include "unit/helpers.hpp"
#include "unit/mining_repo.hpp"

#include "rsmig/knowledge.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <cmath>
#include <random>
#include <thread>

using namespace rsmig;
using namespace rsmig::knowledge;

namespace {

std::string fmt_key(size_t i) { return "doc" + std::to_string(100 + i); }

/// Straight from the formula, nothing shared with the index.
std::vector<double> brute_bm25(const std::vector<std::string>& q, const std::vector<std::vector<std::string>>& docs,
                               double k1 = 1.2, double b = 0.75) {
    double total = 0;
    for (const auto& d : docs) total += static_cast<double>(d.size());
    double avg = total / static_cast<double>(docs.size());
    std::vector<double> out;
    for (const auto& d : docs) {
        double s = 0;
        for (const auto& t : q) {
            double df = 0;
            for (const auto& o : docs) df += std::count(o.begin(), o.end(), t) > 0 ? 1 : 0;
            double tf = static_cast<double>(std::count(d.begin(), d.end(), t));
            if (df == 0 || tf == 0) continue;
            double idf = std::log(1 + (static_cast<double>(docs.size()) - df + 0.5) / (df + 0.5));
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(d.size()) / avg));
        }
        out.push_back(s);
    }
    return out;
}

void check_against_brute(const std::vector<std::string>& q, const std::vector<std::vector<std::string>>& docs, size_t n) {
    std::vector<Bm25Doc> bd;
    for (size_t i = 0; i < docs.size(); ++i) bd.push_back({fmt_key(i), docs[i]});
    auto expect = brute_bm25(q, docs);
    auto got = Bm25Index(bd).scores(q);
    REQUIRE(got.size() == expect.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-9));
    // ranking: score desc, key asc
    std::vector<size_t> order(docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (std::abs(expect[a] - expect[b]) > 1e-12) return expect[a] > expect[b];
        return fmt_key(a) < fmt_key(b);
    });
    auto top = bm25_top_n(q, bd, n);
    REQUIRE(top.size() == std::min(n, docs.size()));
    for (size_t i = 0; i < top.size(); ++i) CHECK(top[i].index == order[i]);
}

class FixedReranker : public Reranker {
public:
    explicit FixedReranker(std::vector<double> s) : s_(std::move(s)) {}
    std::vector<double> score(const std::vector<RerankItem>&) override { return s_; }

private:
    std::vector<double> s_;
};

class BrokenReranker : public Reranker {
public:
    std::vector<double> score(const std::vector<RerankItem>&) override { throw KnowledgeError("offline"); }
};

bool has_candidate(const MiningReport& r, const std::string& c, const std::string& rs, const std::string& tag) {
    for (const auto& cand : r.candidates)
        if (cand.c_path == c && cand.rust_path == rs) return tag.empty() || cand.evidence.count(tag);
    return false;
}

AlignedFunctionPair make_pair(std::string c, std::string r) {
    AlignedFunctionPair p;
    p.c_source = std::move(c);
    p.rust_source = std::move(r);
    p.id = pair_id(p.c_source, p.rust_source);
    return p;
}

const char* kOffsetC = "size_t field_pos(void) {\n    return offsetof(struct rec, tail);\n}\n";
const char* kOffsetRust = "pub fn field_pos() -> usize {\n    core::mem::offset_of!(rec, tail)\n}\n";

}  // namespace

TEST_CASE("code tokenizer") {
    auto t = tokenize_code("int HdfSbufRecycle(ht_set *x) { puts(\"Out of memory\"); /* hash */ return 42; }");
    std::vector<std::string> expect = {"int", "hdf", "sbuf", "recycle", "ht", "set", "x", "puts", "out", "of", "memory",
                                       "return", "42"};
    CHECK(t == expect);
    CHECK(tokenize_code("fn f<'a>(x: &'a str) -> char { 'z' }") ==
          std::vector<std::string>{"fn", "f", "a", "x", "a", "str", "char"});
}

TEST_CASE("BM25 hand computed value") {
    // D2 = [b, c, c], query [c]: df 1 of 2 docs, idf ln 2; dl 3, avgdl 2.5.
    auto s = Bm25Index({{"d1", {"a", "b"}}, {"d2", {"b", "c", "c"}}}).scores({"c"});
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(std::log(2.0) * 2 * 2.2 / (2 + 1.2 * (0.25 + 0.75 * 3 / 2.5))).epsilon(1e-12));
}

TEST_CASE("BM25 agrees with brute force on three corpora") {
    SUBCASE("hand corpus") {
        std::vector<std::vector<std::string>> docs = {{"hash", "table", "insert"}, {"list", "push", "node", "node"},
                                                      {"hash", "key", "bucket", "hash"}, {}, {"insert", "list"}};
        check_against_brute({"hash", "insert", "hash"}, docs, 3);
        check_against_brute({"nothing"}, docs, 10);
    }
    SUBCASE("random corpus") {
        std::mt19937 rng(7);
        for (int round = 0; round < 30; ++round) {
            std::uniform_int_distribution<int> len(0, 30), word(0, 15), ndocs(1, 40);
            std::vector<std::vector<std::string>> docs(static_cast<size_t>(ndocs(rng)));
            for (auto& d : docs)
                for (int i = len(rng); i > 0; --i) d.push_back("w" + std::to_string(word(rng)));
            std::vector<std::string> q;
            for (int i = 0; i < 5; ++i) q.push_back("w" + std::to_string(word(rng)));
            if (std::all_of(docs.begin(), docs.end(), [](auto& d) { return d.empty(); })) docs[0].push_back("w1");
            check_against_brute(q, docs, 20);
        }
    }
    SUBCASE("fixture sources") {
        std::vector<std::vector<std::string>> docs;
        for (auto f : {"mini_list/src/list.c", "cyclic/src/core/even.c", "hdf_power/src/power/power_token.c", "cyclic/src/util/walk.c"}) {
            auto p = testing::fixtures() / f;
            if (fs::exists(p)) docs.push_back(tokenize_code(read_file(p)));
        }
        REQUIRE(docs.size() >= 2);
        check_against_brute(tokenize_code("int list_push(struct list *l, int v)"), docs, 20);
    }
}

TEST_CASE("BM25 ties break by key") {
    std::vector<Bm25Doc> docs = {{"zeta", {"x"}}, {"alpha", {"x"}}, {"mid", {"x"}}};
    auto top = bm25_top_n({"x"}, docs, 2);
    REQUIRE(top.size() == 2);
    CHECK(top[0].key == "alpha");
    CHECK(top[1].key == "mid");
}

TEST_CASE("rerank keeps the best and falls back to lexical order") {
    std::vector<RerankItem> items = {{"a", "", ""}, {"b", "", ""}, {"c", "", ""}};
    FixedReranker fixed({0.6, 0.2, 0.9});
    CHECK(rerank_top_n(items, 5, fixed) == std::vector<size_t>{2, 0, 1});
    CHECK(rerank_top_n(items, 2, fixed) == std::vector<size_t>{2, 0});
    BrokenReranker broken;
    CHECK(rerank_top_n(items, 2, broken) == std::vector<size_t>{0, 1});
}

TEST_CASE("overlap reranker aligns shared vocabulary") {
    FilePair fp;
    fp.c_path = "table.c";
    fp.c_text = "int ht_set(struct table *t, const char *key, int value) {\n"
                "    unsigned hash = hash_key(key);\n    int bucket = hash % t->size;\n"
                "    t->slots[bucket] = value;\n    return 0;\n}\n"
                "void log_line(const char *msg) {\n    fputs(msg, stderr);\n}\n";
    fp.rust_path = "table.rs";
    fp.rust_text = "impl Table {\n    pub fn insert(&mut self, key: &str, value: i32) {\n"
                   "        let hash = hash_key(key);\n        let bucket = hash as usize % self.size;\n"
                   "        self.slots[bucket] = value;\n    }\n}\n"
                   "fn write_msg(msg: &str) {\n    eprint!(\"{}\", msg);\n}\n";
    OverlapReranker rr;
    auto pairs = align_functions(fp, rr);
    REQUIRE_FALSE(pairs.empty());
    CHECK(pairs[0].c_name == "ht_set");
    CHECK(pairs[0].rust_name == "insert");
    for (size_t i = 1; i < pairs.size(); ++i) CHECK(pairs[i - 1].score >= pairs[i].score);
    CHECK(pairs.size() <= 5);
    auto lit = rr.score({{"x", "f(\"shared message\")", "g(\"shared message\")"}, {"y", "f()", "g()"}});
    CHECK(lit[0] > lit[1]);
}

TEST_CASE("function splitting") {
    auto c = split_c_functions("#include <x.h>\n#define M(a) { a }\nstruct s { int a; };\nstatic int t[2] = {1, 2};\n"
                               "int f(int a) { if (a) { return 1; } return 0; }\n"
                               "void (*g(void))(int) { return 0; }\nint decl(int);\n"
                               "static inline void h(void)\n{\n}\n");
    REQUIRE(c.size() == 3);
    CHECK(c[0].name == "f");
    CHECK(c[0].line == 5);
    CHECK(c[1].name == "g");
    CHECK(c[2].name == "h");
    CHECK(c[2].text == "static inline void h(void)\n{\n}");
    auto r = split_rust_functions("#[no_mangle]\npub unsafe extern \"C\" fn a(x: i32) -> i32 { x }\n"
                                  "impl T { pub(crate) fn b(&self) { let c = |x| { x }; } }\n"
                                  "extern \"C\" { fn decl(x: i32); }\ntrait Q { fn q(&self); }\n");
    REQUIRE(r.size() == 2);
    CHECK(r[0].name == "a");
    CHECK(r[0].text.rfind("#[no_mangle]\npub unsafe extern \"C\" fn a", 0) == 0);
    CHECK(r[1].name == "b");
}

TEST_CASE("every heuristic recovers its planted pair and the decoy stays out") {
    testing::TempDir d("mining");
    auto repo = testing::build_mining_repo(d.path());
    auto report = get_file_candidates(d.path(), Regime::CoEvolution);
    CHECK(report.history_available);
    REQUIRE(repo.planted.size() == 10);
    std::set<std::string> tags;
    for (const auto& p : repo.planted) {
        INFO(p.heuristic);
        CHECK(has_candidate(report, p.c_path, p.rust_path, p.heuristic));
        tags.insert(p.heuristic);
    }
    CHECK(tags.size() == all_tags().size());
    CHECK_FALSE(has_candidate(report, repo.decoy.c_path, repo.decoy.rust_path, ""));
    for (const auto& t : all_tags()) CHECK(report.per_heuristic.at(t) >= 1);

    SUBCASE("disabled heuristics add no evidence") {
        MiningConfig cfg;
        cfg.disabled = {tag::kKeyword, tag::kChurn};
        auto r = get_file_candidates(d.path(), Regime::CoEvolution, cfg);
        CHECK(r.per_heuristic.at(tag::kKeyword) == 0);
        for (const auto& c : r.candidates) CHECK_FALSE(c.evidence.count(tag::kChurn));
    }
    SUBCASE("wider window lets the decoy in") {
        MiningConfig cfg;
        cfg.delete_create_window_days = 450;
        auto r = get_file_candidates(d.path(), Regime::CoEvolution, cfg);
        CHECK(has_candidate(r, repo.decoy.c_path, repo.decoy.rust_path, tag::kDeleteCreate));
    }
    SUBCASE("deleted files point at the last revision") {
        for (const auto& c : report.candidates)
            if (c.c_path == "src/dc.c") CHECK(c.c_commit.size() == 41);
    }
}

TEST_CASE("general regime and missing history") {
    testing::TempDir d("snap");
    write_file(d / "a.c", "int fa(void) { puts(\"shared literal\"); return ERR_ONE + ERR_TWO + ERR_THREE; }\n");
    write_file(d / "b.c", "int fb(void) { return 0; }\n");
    write_file(d / "a.rs", "fn fa() -> i32 { println!(\"shared literal\"); ERR_ONE + ERR_TWO + ERR_THREE }\n");
    auto gen = get_file_candidates(d.path(), Regime::General);
    CHECK(gen.candidates.size() == 2);
    auto co = get_file_candidates(d.path(), Regime::CoEvolution);
    CHECK_FALSE(co.history_available);
    REQUIRE(co.notes.size() == 1);
    REQUIRE(co.candidates.size() == 1);
    CHECK(co.candidates[0].evidence == std::set<std::string>{tag::kTokenOverlap, tag::kLiterals});
    CHECK(co.candidates[0].scores.at(tag::kTokenOverlap) == 3);
    CHECK_THROWS_AS(read_history(d.path()), KnowledgeError);
}

TEST_CASE("rule mining") {
    DeterministicExtractor ex;
    auto off = mine_rules(make_pair(kOffsetC, kOffsetRust), ex);
    REQUIRE(off.fragments.size() == 1);
    CHECK(off.fragments[0].rust_idiom == "core::mem::offset_of!(T, field)");
    CHECK(off.fragments[0].provenance == std::vector<std::string>{pair_id(kOffsetC, kOffsetRust)});

    auto copy = make_pair("void put(char *dst, const char *src, size_t n) {\n    memcpy(dst, src, n);\n}\n",
                          "fn put(dst: &mut [u8], src: &[u8], n: usize) {\n    dst[..n].copy_from_slice(&src[..n]);\n}\n");
    auto rules = mine_rules(copy, ex);
    REQUIRE(rules.api.size() == 1);
    CHECK(rules.api[0].c_interface == "memcpy");
    CHECK(rules.api[0].rust_interface == "copy_from_slice");
    CHECK(copy.rust_source.find(rules.api[0].rust_interface) != std::string::npos);

    auto none = mine_rules(make_pair("int add(int a, int b) {\n    return a + b;\n}\n",
                                     "fn add(a: i32, b: i32) -> i32 {\n    a + b\n}\n"),
                           ex);
    CHECK(none.empty());

    DeterministicExtractor tiny(1);
    CHECK(mine_rules(make_pair(kOffsetC, kOffsetRust), tiny).fragments.empty());

    for (const auto& f : off.fragments) {
        CHECK(approx_tokens(f.c_idiom) <= 24);
        CHECK(approx_tokens(f.rust_idiom) <= 24);
    }
}

TEST_CASE("callee scanning") {
    auto c = c_callees("int f(int a) { if (a) g(a); return h(k(a)) + g(1); }");
    REQUIRE(c.size() == 3);
    CHECK(c[0].first == "g");
    CHECK(c[2].first == "k");
    auto r = rust_callees("fn f(x: &[u8]) -> usize { let v = Vec::new(); let n = core::mem::size_of::<u32>(); "
                          "println!(\"{}\", x.len()); Some(n).unwrap() }");
    std::vector<std::string> names;
    for (auto& [n, _] : r) names.push_back(n);
    CHECK(names == std::vector<std::string>{"Vec::new", "core::mem::size_of", "println!", "len", "unwrap"});
}

TEST_CASE("knowledge base persistence, journal and dedup") {
    testing::TempDir d("kb");
    DeterministicExtractor ex;
    {
        KnowledgeBase kb(d.path());
        CHECK(kb.snapshot()->pairs.empty());
        kb.accumulate("field_pos", kOffsetC, "field_pos", kOffsetRust, ex, "run-a");
    }
    const std::string before = read_file(d / "pairs.jsonl");
    CHECK(before.rfind("{\"format\":\"rsmig-kb\"", 0) == 0);
    {
        KnowledgeBase kb(d.path());
        kb.accumulate("field_pos", kOffsetC, "field_pos", kOffsetRust, ex, "run-b");
        auto s = kb.snapshot();
        CHECK(s->journal_entries == 2);
        CHECK(s->pairs.size() == 1);
        REQUIRE(s->fragment_rules.size() == 1);
        CHECK(s->fragment_rules[0].support == 1);

        const std::string other_c = "size_t head_pos(void) {\n    return offsetof(struct node, head);\n}\n";
        const std::string other_r = "pub fn head_pos() -> usize {\n    core::mem::offset_of!(node, head)\n}\n";
        kb.accumulate("head_pos", other_c, "head_pos", other_r, ex);
        s = kb.snapshot();
        CHECK(s->pairs.size() == 2);
        REQUIRE(s->fragment_rules.size() == 1);
        CHECK(s->fragment_rules[0].support == 2);
        for (const auto& r : s->fragment_rules)
            for (const auto& id : r.provenance) CHECK(s->pair(id) != nullptr);

        OverlapReranker rr;
        auto got = retrieve(*s, kOffsetC, "fn field_pos() -> usize", 5, rr);
        REQUIRE_FALSE(got.examples.empty());
        CHECK(got.examples[0].c_source == kOffsetC);
        std::set<std::string> ids;
        for (const auto& e : got.examples) CHECK(ids.insert(e.id).second);
        CHECK(got.fragment_rules.size() == 1);
    }
    const std::string after = read_file(d / "pairs.jsonl");
    CHECK(after.compare(0, before.size(), before) == 0);
    CHECK(KnowledgeBase(d.path()).snapshot()->journal_entries == 3);

    write_file(d / "api_rules.jsonl", "{\"format\":\"rsmig-kb\",\"kind\":\"api_rules\",\"version\":9}\n");
    CHECK_THROWS_AS(KnowledgeBase(d.path()), KnowledgeError);
}

TEST_CASE("retrieval on an empty base and rank of identical sources") {
    KnowledgeBase kb;
    OverlapReranker rr;
    CHECK(retrieve(*kb.snapshot(), "int f(void);", "", 5, rr).examples.empty());
    DeterministicExtractor ex;
    std::mt19937 rng(3);
    std::vector<std::string> sources;
    for (int i = 0; i < 12; ++i) {
        std::string c = "int fn_" + std::to_string(i) + "(int v) {\n";
        for (int k = 0; k < 4; ++k) c += "    v = v * " + std::to_string(rng() % 9) + " + item_" + std::to_string(rng() % 20) + ";\n";
        c += "    return v;\n}\n";
        sources.push_back(c);
        kb.accumulate("fn_" + std::to_string(i), c, "fn_" + std::to_string(i), "fn x() {}", ex);
    }
    auto s = kb.snapshot();
    for (const auto& c : sources) {
        auto got = retrieve(*s, c, "", 3, rr);
        REQUIRE_FALSE(got.examples.empty());
        CHECK(got.examples[0].c_source == c);
        CHECK(got.examples.size() <= 3);
    }
}

TEST_CASE("readers see whole snapshots while a writer accumulates") {
    KnowledgeBase kb;
    DeterministicExtractor ex;
    std::atomic<bool> done{false};
    std::atomic<int> torn{0};
    std::thread reader([&] {
        while (!done) {
            auto s = kb.snapshot();
            if (s->pairs.size() != s->journal_entries) ++torn;
        }
    });
    for (int i = 0; i < 50; ++i)
        kb.accumulate("f", "int f" + std::to_string(i) + "(void) { return 0; }", "f", "fn f() {}", ex);
    done = true;
    reader.join();
    CHECK(torn == 0);
    CHECK(kb.snapshot()->pairs.size() == 50);
}

TEST_CASE("offline construction over the synthetic repository") {
    testing::TempDir d("mine");
    testing::TempDir k("minekb");
    testing::build_mining_repo(d.path());
    KnowledgeBase kb(k.path());
    OverlapReranker rr;
    DeterministicExtractor ex;
    auto summary = mine_repository(d.path(), kb, rr, ex);
    CHECK(summary.candidates >= 10);
    CHECK(summary.pairs >= 8);
    auto s = kb.snapshot();
    bool kw = false;
    for (const auto& p : s->pairs) kw = kw || (p.c_name == "kw_parse" && p.rust_name == "kw_parse");
    CHECK(kw);
    for (const auto& r : s->api_rules)
        for (const auto& id : r.provenance) CHECK(s->pair(id) != nullptr);
    CHECK(fs::exists(k / "fragment_rules.jsonl"));
}
