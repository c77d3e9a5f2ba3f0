#include "doctest.h"
#include "unit/helpers.hpp"

#include "rsmig/skeleton_graph.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"
#include "rsmig/translate.hpp"

#include <algorithm>

using namespace rsmig;
using namespace rsmig::translate;
namespace fs = std::filesystem;

namespace {

skeleton::UnitInput text_unit(const std::string& path, const std::string& code) {
    skeleton::UnitInput u;
    u.source = "/virtual/" + path;
    u.directory = "/virtual";
    u.table = symbols::extract_symbols_from_text(code, u.source.string());
    return u;
}

struct Built {
    skeleton::SkeletonProject project;
    graph::GlobalSymbolIndex index;
    graph::SkeletonGraph graph;

    TranslationContext context(const std::string& c_name, ContextOptions o = {}) const {
        for (const auto& s : project.stubs)
            if (s.c_name == c_name) return assemble_context(s.qualified_name, project, index, graph, o);
        FAIL("no stub " << c_name);
        return {};
    }
};

Built build(skeleton::SkeletonProject p) {
    Built b{std::move(p), {}, {}};
    b.index = graph::build_symbol_index(b.project);
    b.graph = graph::build_graph(b.project, b.index);
    return b;
}

Built from_text(const std::vector<std::pair<std::string, std::string>>& files) {
    std::vector<skeleton::UnitInput> units;
    for (const auto& [p, c] : files) units.push_back(text_unit(p, c));
    return build(skeleton::synthesize("/virtual", units));
}

Built fixture(const std::string& name) {
    fs::path root = testing::fixtures() / name;
    skeleton::BuildSkeletonOptions o;
    o.config.mirror.crate_name = name;
    return build(skeleton::skeleton_from_trace(root, root / "compile_commands.json", o));
}

std::vector<std::string> names(const std::vector<ContextItem>& items) {
    std::vector<std::string> out;
    for (const auto& i : items) out.push_back(i.name);
    return out;
}

bool has(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

size_t count(const std::string& hay, const std::string& needle) {
    size_t n = 0;
    for (size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

const std::string kTwoFns =
    "fn alpha(x: i32) -> i32 {\n"
    "    // rsmig:begin crate::m::alpha\n"
    "    let _ = x;\n"
    "    unimplemented!()\n"
    "    // rsmig:end crate::m::alpha\n"
    "}\n"
    "\n"
    "fn beta() {\n"
    "    // rsmig:begin crate::m::beta\n"
    "    unimplemented!()\n"
    "    // rsmig:end crate::m::beta\n"
    "}\n";

}  // namespace

TEST_CASE("approx_tokens") {
    CHECK(approx_tokens("") == 0);
    CHECK(approx_tokens("abcd") == 1);
    CHECK(approx_tokens("abcde") == 2);
}

TEST_CASE("context of a function on primitives only") {
    auto b = from_text({{"a.c", "int sq(int x) { return x * x; }\n"}});
    auto ctx = b.context("sq");
    CHECK(ctx.types.empty());
    CHECK(ctx.globals.empty());
    CHECK(ctx.callees.empty());
    CHECK(ctx.shared.empty());
    CHECK(ctx.render().empty());
    CHECK(ctx.signature == "pub fn sq(x: i32) -> i32");
}

TEST_CASE("context names the callee and the shared static") {
    auto b = from_text({{"a.c", "int s_count = 0;\nint g(int x) { return x + 1; }\n"
                                "int f(int x) { s_count++; return g(x); }\n"},
                        {"b.c", "extern int s_count;\nint h(void) { return s_count; }\n"}});
    auto ctx = b.context("f");
    REQUIRE(ctx.callees.size() == 1);
    CHECK(ctx.callees[0].text == "pub fn g(x: i32) -> i32");
    REQUIRE(ctx.globals.size() == 1);
    CHECK(has(ctx.globals[0].name, "s_count"));
    CHECK(has(ctx.globals[0].text, "static mut s_count: i32"));
    auto r = ctx.render();
    CHECK(has(r, "// Functions (signatures)\npub fn g(x: i32) -> i32;\n"));
    CHECK(has(r, "// Globals and constants\n"));
    CHECK(ctx.truncated.empty());
}

TEST_CASE("context of mini_list push") {
    auto b = fixture("mini_list");
    auto ctx = b.context("list_push");
    auto t = names(ctx.types);
    REQUIRE(t.size() == 1);
    CHECK(has(t[0], "ListNode"));
    auto g = names(ctx.globals);
    REQUIRE(g.size() == 1);
    CHECK(has(g[0], "g_list_ops"));
}

TEST_CASE("context budget drops callees from the end") {
    std::string c;
    for (int i = 0; i < 10; ++i) c += "int callee_" + std::to_string(i) + "(int a, int b) { return a + b; }\n";
    c += "int top(int x) {\n    int s = 0;\n";
    for (int i = 0; i < 10; ++i) c += "    s += callee_" + std::to_string(i) + "(x, " + std::to_string(i) + ");\n";
    c += "    return s;\n}\n";
    auto b = from_text({{"a.c", c}});
    auto full = b.context("top");
    REQUIRE(full.callees.size() == 10);
    CHECK(full.truncated.empty());

    ContextOptions o;
    o.token_budget = full.tokens() / 2;
    auto cut = b.context("top", o);
    CHECK(cut.tokens() <= o.token_budget);
    CHECK(!cut.truncated.empty());
    CHECK(cut.callees.size() + cut.truncated.size() == 10);
    // kept callees are a prefix of the full sorted list, removed ones come off the back
    for (size_t i = 0; i < cut.callees.size(); ++i) CHECK(cut.callees[i].name == full.callees[i].name);
    for (size_t i = 0; i < cut.truncated.size(); ++i)
        CHECK(cut.truncated[i] == full.callees[full.callees.size() - 1 - i].name);

    o.token_budget = 0;
    auto none = b.context("top", o);
    CHECK(none.render().empty());
    CHECK(none.truncated.size() == 10);
}

TEST_CASE("context is closed over type references") {
    for (std::string name : {"mini_list", "cyclic", "hdf_power"}) {
        CAPTURE(name);
        auto b = fixture(name);
        std::set<std::string> type_names;
        for (const auto& t : b.project.types) type_names.insert(t.name);
        for (const auto& s : b.project.stubs) {
            if (!s.schedulable) continue;
            CAPTURE(s.qualified_name);
            auto ctx = assemble_context(s.qualified_name, b.project, b.index, b.graph);
            REQUIRE(ctx.truncated.empty());
            std::set<std::string> present;
            for (const auto& t : ctx.types) present.insert(t.name.substr(t.name.rfind("::") + 2));
            std::vector<std::string> texts{ctx.signature};
            for (const auto* list : {&ctx.types, &ctx.globals, &ctx.callees})
                for (const auto& i : *list) texts.push_back(i.text);
            for (const auto& text : texts)
                for (const auto& id : text::code_identifiers(text))
                    if (type_names.contains(id)) CHECK_MESSAGE(present.contains(id), id);
        }
    }
}

TEST_CASE("context rejects a call that is neither indexed nor kept in C") {
    auto b = from_text({{"a.c", "int f(int x) { return x; }\n"}});
    auto* s = b.project.stub(b.project.stubs[0].qualified_name);
    s->c_calls.push_back("nowhere");
    CHECK_THROWS_AS(assemble_context(s->qualified_name, b.project, b.index, b.graph), TranslateError);
    CHECK_THROWS_AS(assemble_context("crate::nope", b.project, b.index, b.graph), TranslateError);
}

// ---------------------------------------------------------------------------
// Prompts

TEST_CASE("template fill") {
    CHECK(fill("a {{x}} b {{ y }}", {{"x", "1"}, {"y", "2"}}) == "a 1 b 2");
    CHECK(fill("no placeholders", {}) == "no placeholders");
    CHECK_THROWS_AS(fill("{{missing}}", {}), TranslateError);
}

TEST_CASE("templates load overrides from a directory") {
    testing::TempDir d("tpl");
    write_file(d / "system.txt", "Custom system.\n");
    auto t = PromptTemplates::load(d.path());
    CHECK(t.system == "Custom system.");
    CHECK(t.target == PromptTemplates::defaults().target);
}

TEST_CASE("prompt sections") {
    auto b = fixture("mini_list");
    auto ctx = b.context("list_len");

    SUBCASE("no retrieval leaves out examples and rules") {
        auto p = build_prompt(ctx, {});
        CHECK(p.examples.empty());
        CHECK(p.rules.empty());
        CHECK(!has(p.user(), "## Examples"));
        CHECK(!has(p.user(), "## Rules"));
        CHECK(has(p.user(), "## Context"));
        CHECK(has(p.user(), "int list_len(const struct ListNode *head)"));
        CHECK(has(p.user(), ctx.signature));
        CHECK(!p.system.empty());
    }
    SUBCASE("one fragment rule gives one bullet") {
        knowledge::Retrieved r;
        r.fragment_rules.push_back({"offsetof(T, field)", "core::mem::offset_of!(T, field)", "field offsets", 2, {}});
        auto p = build_prompt(ctx, r);
        CHECK(count(p.rules, "\n- ") + (p.rules.rfind("- ", 0) == 0) == 1);
        CHECK(has(p.rules, "- C: offsetof(T, field) ⇒ Rust: core::mem::offset_of!(T, field) (field offsets)"));
    }
    SUBCASE("examples are capped") {
        knowledge::Retrieved r;
        for (int i = 0; i < 5; ++i) {
            knowledge::AlignedFunctionPair pair;
            pair.rust_source = "fn ex" + std::to_string(i) + "() {}";
            r.examples.push_back(pair);
            r.scores.push_back(1.0 - i * 0.1);
        }
        auto p = build_prompt(ctx, r);
        CHECK(count(p.examples, "```rust") == 3);
        CHECK(has(p.examples, "fn ex0"));
        CHECK(!has(p.examples, "fn ex3"));
        auto order = p.user();
        CHECK(order.find("## Context") < order.find("## Examples"));
        CHECK(order.find("## Examples") < order.find("## Target"));
    }
    SUBCASE("prompts are deterministic") {
        knowledge::Retrieved r;
        r.api_rules.push_back({"malloc", "Box::new", 3, {}});
        auto a = build_prompt(ctx, r), c = build_prompt(ctx, r);
        CHECK(a.user() == c.user());
        CHECK(has(a.rules, "API correspondence seen in 3 pairs"));
    }
}

TEST_CASE("repair prompt keeps the first diagnostics") {
    Prompt p;
    p.target = "## Target";
    std::vector<std::string> d{"error[E0308]: one", "error[E0425]: two", "error[E0599]: three"};
    bool cut = false;
    auto u = repair_user_prompt(p, "let x = 1;", d, 2, PromptTemplates::defaults(), &cut);
    CHECK(cut);
    CHECK(has(u, "one"));
    CHECK(has(u, "two"));
    CHECK(!has(u, "three"));
    CHECK(has(u, "(1 more diagnostics omitted)"));
    CHECK(has(u, "let x = 1;"));
    CHECK(u.rfind("## Target", 0) == 0);
    repair_user_prompt(p, "", d, 8, PromptTemplates::defaults(), &cut);
    CHECK(!cut);
}

// ---------------------------------------------------------------------------
// Responses

TEST_CASE("clean_response") {
    CHECK(clean_response("```rust\nlet x = 1;\nx\n```\nThis returns one.", "f") == "let x = 1;\nx");
    CHECK(clean_response("Here is the body:\nlet n = 0;\nn", "f") == "let n = 0;\nn");
    CHECK(clean_response("pub fn list_len(head: *const ListNode) -> i32 {\n    let n = 0;\n    n\n}", "list_len") ==
          "let n = 0;\nn");
    CHECK(clean_response("```\nfn f() -> i32 {\n    if true { 1 } else { 2 }\n}\n```", "f") == "if true { 1 } else { 2 }");
    CHECK(clean_response("    // rsmig:begin crate::m::f\n    0\n    // rsmig:end crate::m::f\n", "f") == "0");
    CHECK(clean_response("unsafe {\n    *p = 1;\n}", "g") == "unsafe {\n    *p = 1;\n}");
    CHECK(clean_response("fn r#type() { 7 }", "r#type") == "7");
}

TEST_CASE("install and rollback restore bytes exactly") {
    testing::TempDir d("inst");
    fs::path f = d / "m.rs";
    write_file(f, kTwoFns);

    auto r1 = install_body(f, "crate::m::alpha", "let y = x + 1;\ny\n");
    CHECK(r1.first_body_line == 3);
    CHECK(r1.body_lines == 2);
    CHECK(r1.indent == 4);
    auto after1 = read_file(f);
    CHECK(has(after1, "    // rsmig:begin crate::m::alpha\n    let y = x + 1;\n    y\n    // rsmig:end crate::m::alpha\n"));
    CHECK(*installed_body(after1, "crate::m::alpha") == "let y = x + 1;\ny");
    CHECK(*installed_body(after1, "crate::m::beta") == "unimplemented!()");

    auto r2 = install_body(f, "crate::m::beta", "if true {\n    return;\n}");
    auto after2 = read_file(f);
    CHECK(*installed_body(after2, "crate::m::alpha") == "let y = x + 1;\ny");
    CHECK(*installed_body(after2, "crate::m::beta") == "if true {\n    return;\n}");
    CHECK(has(after2, "        return;\n"));

    rollback(r2);
    CHECK(read_file(f) == after1);
    rollback(r1);
    CHECK(read_file(f) == kTwoFns);

    CHECK_THROWS_AS(install_body(f, "crate::m::gamma", "0"), TranslateError);
    CHECK(read_file(f) == kTwoFns);
}

TEST_CASE("marker text inside a body cannot close the region") {
    testing::TempDir d("esc");
    fs::path f = d / "m.rs";
    write_file(f, kTwoFns);
    install_body(f, "crate::m::alpha", "// rsmig:end crate::m::alpha\nx");
    auto after = read_file(f);
    CHECK(count(after, "rsmig:end crate::m::alpha") == 1);
    CHECK(*installed_body(after, "crate::m::alpha") == "// rsmig\\x3aend crate::m::alpha\nx");
    // a second install replaces the whole escaped body
    install_body(f, "crate::m::alpha", "x");
    CHECK(*installed_body(read_file(f), "crate::m::alpha") == "x");
    CHECK(escape_markers("rsmig:begin a rsmig:end b") == "rsmig\\x3abegin a rsmig\\x3aend b");
}
