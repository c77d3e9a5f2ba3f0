#include "doctest.h"
#include "unit/helpers.hpp"

#include "rsmig/skeleton.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/process.hpp"
#include "rsmig/support/text.hpp"

#include <algorithm>
#include <random>
#include <sstream>

using namespace rsmig;
using namespace rsmig::skeleton;
namespace fs = std::filesystem;

namespace {

SkeletonProject fixture_skeleton(const std::string& name, SkeletonConfig config = {}) {
    fs::path root = testing::fixtures() / name;
    BuildSkeletonOptions opts;
    config.mirror.crate_name = name;
    opts.config = config;
    return skeleton_from_trace(root, root / "compile_commands.json", opts);
}

const FunctionStub* stub_named(const SkeletonProject& p, const std::string& c_name) {
    for (const auto& s : p.stubs)
        if (s.c_name == c_name) return &s;
    return nullptr;
}

const StaticDecl* static_named(const SkeletonProject& p, const std::string& c_name) {
    for (const auto& s : p.statics)
        if (s.c_name == c_name) return &s;
    return nullptr;
}

const RustTypeDecl* type_named(const SkeletonProject& p, const std::string& c_name) {
    for (const auto& t : p.types)
        if (t.c_name == c_name) return &t;
    return nullptr;
}

const ConstantDecl* constant_named(const SkeletonProject& p, const std::string& name) {
    for (const auto& c : p.constants)
        if (c.name == name) return &c;
    return nullptr;
}

bool has(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

/// A unit parsed from bare C text; `path` is relative to /virtual.
UnitInput text_unit(const std::string& path, const std::string& code) {
    UnitInput u;
    u.source = "/virtual/" + path;
    u.directory = "/virtual";
    u.table = symbols::extract_symbols_from_text(code, u.source.string());
    return u;
}

std::vector<std::string> names(const ModuleTree& t) {
    std::vector<std::string> out;
    for (const auto& m : t.modules) out.push_back(m.path());
    return out;
}

size_t count_placeholders(const std::string& s, const std::string& macro = "unimplemented!()") {
    size_t n = 0;
    for (size_t pos = s.find(macro); pos != std::string::npos; pos = s.find(macro, pos + 1)) ++n;
    return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Module tree

TEST_CASE("module tree mirrors directories") {
    auto t = mirror_module_tree("/p", {"src/a.c"});
    CHECK(names(t) == std::vector<std::string>{"crate::src::a"});
    CHECK(t.modules[0].rust_file == "src/src/a.rs");

    MirrorOptions flat;
    flat.flatten_root = true;
    CHECK(names(mirror_module_tree("/p", {"src/a.c"}, flat)) == std::vector<std::string>{"crate::a"});
    CHECK(names(mirror_module_tree("/p", {"/p/src/x/a.c", "/p/src/y/b.c"}, flat)) ==
          std::vector<std::string>{"crate::x::a", "crate::y::b"});

    auto t2 = mirror_module_tree("/p", {"util/z.c", "core/y.c", "core/x.c"});
    CHECK(names(t2) == std::vector<std::string>{"crate::core::x", "crate::core::y", "crate::util::z"});
    auto kids = t2.children();
    CHECK(kids[{}] == std::vector<std::string>{"core", "util"});
    CHECK(kids[{"core"}] == std::vector<std::string>{"x", "y"});
    CHECK(kids[{"util"}] == std::vector<std::string>{"z"});
    CHECK(t2.collisions.empty());
}

TEST_CASE("sanitized module name collisions get suffixes") {
    auto t = mirror_module_tree("/p", {"a_b.c", "a-b.c"});
    CHECK(t.by_c_path("a-b.c")->path() == "crate::a_b");
    CHECK(t.by_c_path("a_b.c")->path() == "crate::a_b_1");
    REQUIRE(t.collisions.size() == 1);
    CHECK(has(t.collisions[0], "a_b.c"));

    auto r = mirror_module_tree("/p", {"lib.c", "shared.c", "match.c", "1st.c", "Mixed.Case.c"});
    CHECK(r.by_c_path("lib.c")->path() == "crate::lib_1");
    CHECK(r.by_c_path("shared.c")->path() == "crate::shared_1");
    CHECK(r.by_c_path("match.c")->path() == "crate::match_");
    CHECK(r.by_c_path("1st.c")->path() == "crate::_1st");
    CHECK(r.by_c_path("Mixed.Case.c")->path() == "crate::mixed_case");

    // A file and a directory with the same stem share one namespace.
    auto d = mirror_module_tree("/p", {"util.c", "util/x.c"});
    CHECK(d.by_c_path("util.c")->path() == "crate::util_1");
    CHECK(d.by_c_path("util/x.c")->path() == "crate::util::x");
}

TEST_CASE("module tree errors") {
    CHECK_THROWS_AS(mirror_module_tree("/p", {}), SkeletonError);
    CHECK_THROWS_AS(mirror_module_tree("/p", {"/elsewhere/a.c"}), SkeletonError);
}

TEST_CASE("module mapping is a bijection on random trees") {
    std::mt19937 rng(7);
    const std::string alphabet = "ab_-.1X";
    for (int round = 0; round < 60; ++round) {
        std::set<std::string> files;
        int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            std::string path;
            int depth = static_cast<int>(rng() % 3);
            for (int d = 0; d <= depth; ++d) {
                std::string seg;
                int len = 1 + static_cast<int>(rng() % 3);
                for (int k = 0; k < len; ++k) seg += alphabet[rng() % alphabet.size()];
                if (seg == "." || seg == ".." || seg.find("..") != std::string::npos) seg = "d" + seg;
                path += (d ? "/" : "") + seg;
            }
            files.insert(path + ".c");
        }
        std::vector<fs::path> srcs(files.begin(), files.end());
        ModuleTree t;
        try {
            t = mirror_module_tree("/p", srcs);
        } catch (const SkeletonError&) {
            continue;  // a segment normalized away, e.g. "a/./b.c"
        }
        std::set<std::string> mods, cpaths, rfiles;
        for (const auto& m : t.modules) {
            CHECK(mods.insert(m.path()).second);
            CHECK(cpaths.insert(m.c_path).second);
            CHECK(rfiles.insert(m.rust_file).second);
            CHECK(t.by_module(m.path())->c_path == m.c_path);
            CHECK(t.by_c_path(m.c_path)->path() == m.path());
            for (const auto& seg : m.segments) CHECK(text::is_identifier(seg));
        }
        CHECK(t.modules.size() == srcs.size());
        // Deterministic.
        CHECK(names(mirror_module_tree("/p", srcs)) == names(t));
    }
}

TEST_CASE("identifiers") {
    CHECK(rust_ident("match") == "r#match");
    CHECK(rust_ident("type") == "r#type");
    CHECK(rust_ident("self") == "self_");
    CHECK(rust_ident("crate") == "crate_");
    CHECK(rust_ident("union") == "union");
    CHECK(rust_ident("counter") == "counter");
}

// ---------------------------------------------------------------------------
// Lowering

TEST_CASE("lower_type examples") {
    auto t = symbols::extract_symbols_from_text(R"(
        struct point { int x; int y; };
        typedef unsigned int u32_t;
        union num { int i; float f; };
        enum color { RED, GREEN = 5, BLUE };
        enum sign { NEG = -2, POS = 2 };
        typedef struct point point_t;
    )",
                                                "t.c");
    TypeEnv env(t.types);
    auto lookup = env.lookup();

    auto point = lower_type(*lookup.tag("point"), env);
    CHECK(point.repr_c);
    CHECK(point.size == 8u);
    CHECK(point.align == 4u);
    CHECK(has(point.emitted_text, "#[repr(C)]"));
    CHECK(has(point.emitted_text, "pub struct point {\n    pub x: i32,\n    pub y: i32,\n}"));
    CHECK(has(point.emitted_text, "size_of::<point>() == 8"));

    auto alias = lower_type(*lookup.alias("u32_t"), env);
    CHECK_FALSE(alias.repr_c);
    CHECK(alias.emitted_text == "pub type u32_t = u32;\n");

    auto un = lower_type(*lookup.tag("num"), env);
    CHECK(un.repr_c);
    CHECK(has(un.emitted_text, "pub union num {"));
    CHECK(un.size == 4u);

    auto color = lower_type(*lookup.tag("color"), env);
    CHECK(has(color.emitted_text, "pub type color = u32;"));
    CHECK(has(color.emitted_text, "pub const GREEN: color = 5;"));
    CHECK(has(color.emitted_text, "pub const BLUE: color = 6;"));
    CHECK(lower_type(*lookup.tag("sign"), env).emitted_text.starts_with("pub type sign = i32;"));

    CHECK(lower_type(*lookup.alias("point_t"), env).emitted_text == "pub type point_t = point;\n");
}

TEST_CASE("type lowering of C declarators") {
    auto t = symbols::extract_symbols_from_text(R"(
        typedef unsigned long size_t;
        typedef int handler(int);
        typedef int vec3[3];
        typedef unsigned char u8;
        struct s;
        void f(const char *a, void *b, int (*cb)(int, ...), vec3 v, handler h, struct s *o, long double ld,
               const int *const *pp, size_t n, char buf[8], u8 byte, _Bool flag);
    )",
                                                "t.c");
    TypeEnv env(t.types);
    const auto* f = t.find_function("f");
    REQUIRE(f);
    std::vector<std::string> got;
    for (const auto& p : f->params) got.push_back(env.lower_param(p.type, {}, "test"));
    CHECK(got == std::vector<std::string>{"*const c_char", "*mut c_void",
                                          "::core::option::Option<unsafe extern \"C\" fn(i32, ...) -> i32>", "*mut i32",
                                          "::core::option::Option<unsafe extern \"C\" fn(i32) -> i32>", "*mut s",
                                          "c_longdouble", "*const *const i32", "size_t", "*mut c_char", "u8", "bool"});
    CHECK(env.long_double_used());
    CHECK(env.lower(t.find_function("f")->params[3].type, {}, "test") == "vec3");
    CHECK(env.is_inlined_alias(*env.lookup().alias("u8")));
    CHECK(env.is_inlined_alias(*env.lookup().alias("handler")));
}

TEST_CASE("strict policy names the hole, lenient policy records it") {
    auto t = symbols::extract_symbols_from_text("struct holder { mystery_t m; int x; };", "t.c");
    TypeEnv env(t.types);
    const auto* holder = env.lookup().tag("holder");
    REQUIRE(holder);
    try {
        lower_type(*holder, env);
        FAIL("expected a hole error");
    } catch (const SkeletonError& e) {
        CHECK(has(e.what(), "mystery_t"));
        CHECK(has(e.what(), "holder"));
    }
    auto d = lower_type(*holder, env, TypePolicy{HolePolicy::Lenient});
    CHECK(has(d.emitted_text, "pub m: mystery_t"));
    CHECK_FALSE(has(d.emitted_text, "size_of"));
    CHECK(env.holes().contains("mystery_t"));
}

TEST_CASE("emit_stub examples") {
    auto t = symbols::extract_symbols_from_text(R"(
        static int counter;
        int add(int a, int b) { return a + b; }
        int log_msg(const char *fmt, ...) { return 0; }
        static void helper(void) { }
        int take(int counter, int, int p1) { return counter; }
        void cb(int x) { }
        void reg(void) { void (*f)(int) = cb; f(1); }
    )",
                                                "/m/a.c");
    TypeEnv env(t.types);
    ModuleInfo m{"a.c", {"a"}, "src/a.rs"};
    std::set<std::string> cross{"add"}, taken{"cb"}, reserved{"counter"};
    StubContext ctx;
    ctx.module = &m;
    ctx.cross_module_refs = &cross;
    ctx.address_taken = &taken;
    ctx.reserved_values = &reserved;

    auto add = emit_stub(*t.find_function("add"), env, ctx);
    CHECK(add.qualified_name == "crate::a::add");
    CHECK(add.signature_text == "pub(crate) fn add(a: i32, b: i32) -> i32");
    CHECK(add.visibility == Visibility::Crate);
    CHECK_FALSE(add.abi_sensitive);
    CHECK(add.placeholder_body() == "let _ = (a, b);\nunimplemented!()\n");
    CHECK(has(add.item_text(), "// rsmig:begin crate::a::add\n"));
    CHECK(has(add.item_text(), "// rsmig:end crate::a::add\n"));

    auto log = emit_stub(*t.find_function("log_msg"), env, ctx);
    CHECK(log.abi_sensitive);
    CHECK_FALSE(log.schedulable);
    CHECK(log.signature_text == "pub fn log_msg(fmt: *const c_char, ...) -> i32;");

    auto helper = emit_stub(*t.find_function("helper"), env, ctx);
    CHECK(helper.visibility == Visibility::Private);
    CHECK(helper.signature_text == "fn helper()");
    CHECK(helper.placeholder_body() == "unimplemented!()\n");

    auto take = emit_stub(*t.find_function("take"), env, ctx);
    CHECK(take.signature_text == "pub fn take(counter_: i32, p1: i32, p1_: i32) -> i32");
    CHECK(take.renamed_params == std::map<std::string, std::string>{{"counter", "counter_"}, {"p1", "p1_"}});

    auto cb = emit_stub(*t.find_function("cb"), env, ctx);
    CHECK(cb.abi_sensitive);
    CHECK(cb.signature_text == "pub unsafe extern \"C\" fn cb(x: i32)");

    ctx.placeholder = "todo";
    CHECK(emit_stub(*t.find_function("helper"), env, ctx).placeholder_body() == "todo!()\n");
}

TEST_CASE("lift_global examples") {
    auto t = symbols::extract_symbols_from_text(R"(
        static int counter = 0;
        int g_state;
        const char *NAME = "hdf";
        char *mut_name = "x\n";
        static const int LIMIT = 5;
        static const int *LIMIT_PTR = 0;
        double ratio = .5;
        unsigned short shorts[4] = {1, 0x2, -1};
        long big = 3000000000;
        struct pt { int x, y; } origin = {1, 2};
        _Bool on = 1;
    )",
                                                "/m/a.c");
    TypeEnv env(t.types);
    GlobalUsage local{{"crate::a"}, "crate::a"};

    auto counter = lift_global(*t.find_global("counter"), local, env);
    CHECK(counter.module == "crate::a");
    CHECK(counter.is_mutable);
    CHECK(counter.accessor == "counter_ptr");
    CHECK(has(counter.emitted_text, "static mut counter: i32 = 0;\n"));
    CHECK_FALSE(has(counter.emitted_text, "pub static"));

    auto state = lift_global(*t.find_global("g_state"), GlobalUsage{{"crate::a", "crate::b"}, "crate::a"}, env);
    CHECK(state.module == "crate::shared");
    CHECK(has(state.emitted_text, "pub static mut g_state: i32 = 0;"));
    CHECK(has(state.emitted_text, "pub fn g_state_ptr() -> *mut i32"));

    auto name = lift_global(*t.find_global("NAME"), local, env);
    CHECK_FALSE(name.is_mutable);
    CHECK(name.emitted_text == "pub static NAME: &CStr = c\"hdf\";\n");

    CHECK(has(lift_global(*t.find_global("mut_name"), local, env).emitted_text,
              "= c\"x\\n\".as_ptr() as *mut c_char;"));
    auto limit = lift_global(*t.find_global("LIMIT"), local, env);
    CHECK_FALSE(limit.is_mutable);
    CHECK(limit.emitted_text == "static LIMIT: i32 = 5;\n");
    // Raw pointers are not Sync.
    CHECK(lift_global(*t.find_global("LIMIT_PTR"), local, env).is_mutable);
    CHECK(has(lift_global(*t.find_global("ratio"), local, env).emitted_text, "f64 = 0.5;"));
    auto shorts = lift_global(*t.find_global("shorts"), local, env).emitted_text;
    CHECK(has(shorts, "a[1] = 2;"));
    CHECK(has(shorts, "a[2] = -1_i128 as u16;"));
    CHECK(has(lift_global(*t.find_global("big"), local, env).emitted_text, "i64 = 3000000000;"));
    auto origin = lift_global(*t.find_global("origin"), local, env);
    CHECK(origin.todo_initializer);
    CHECK(has(origin.emitted_text, "// TODO(rsmig): initializer not translated: {1, 2}"));
    CHECK(has(lift_global(*t.find_global("on"), local, env).emitted_text, "bool = true;"));
}

TEST_CASE("macro constants") {
    auto lit = [](const std::string& s) {
        auto m = symbols::parse_literal(s);
        REQUIRE(m);
        m->name = "K";
        m->literal = s;
        return lower_constant(*m).emitted_text;
    };
    CHECK(lit("8") == "pub const K: i32 = 8;\n");
    CHECK(lit("0xFFu") == "pub const K: u32 = 0xff;\n");
    CHECK(lit("0xFFFFFFFF") == "pub const K: u32 = 0xffffffff;\n");
    CHECK(lit("10L") == "pub const K: i64 = 10;\n");
    CHECK(lit("4000000000") == "pub const K: i64 = 4000000000;\n");
    CHECK(lit("'w'") == "pub const K: c_char = b'w' as c_char;\n");
    CHECK(lit("'\\n'") == "pub const K: c_char = 10_i64 as c_char;\n");
    symbols::MacroConstant s;
    s.name = "NAME";
    s.kind = symbols::MacroConstant::Kind::String;
    s.string_value = "a\"b";
    CHECK(lower_constant(s).emitted_text == "pub const NAME: &CStr = c\"a\\\"b\";\n");
}

// ---------------------------------------------------------------------------
// Whole projects

TEST_CASE("cross-module references become explicit paths") {
    std::vector<UnitInput> units;
    units.push_back(text_unit("a.c", "int g_state; static int counter = 0; int bump(void) { counter++; return g_state++; }"));
    units.push_back(text_unit("b/c.c", "extern int g_state; int bump(void); int read(int counter) { bump(); return g_state; }"));
    auto p = synthesize("/virtual", units);
    CHECK(static_named(p, "g_state")->module == "crate::shared");
    CHECK(static_named(p, "counter")->module == "crate::a");
    CHECK(stub_named(p, "bump")->visibility == Visibility::Crate);
    CHECK(p.imports["crate::b::c"] == std::vector<std::string>{"crate::a::bump"});
    // g_state is reached through the shared layer.
    CHECK(stub_named(p, "read")->signature_text == "pub fn read(counter: i32) -> i32");
    auto files = render_files(p);
    CHECK(has(files["src/b/c.rs"], "use crate::shared::*;\nuse crate::a::bump;\n"));
    CHECK(has(files["src/b/mod.rs"], "pub mod c;"));
    CHECK(has(files["src/lib.rs"], "pub mod a;\npub mod b;\n"));
    CHECK(has(files["src/shared.rs"], "pub static mut g_state: i32 = 0;"));
}

TEST_CASE("hdf_power skeleton") {
    auto p = fixture_skeleton("hdf_power");
    REQUIRE(stub_named(p, "PowerNotify"));
    CHECK(stub_named(p, "PowerNotify")->visibility == Visibility::Private);
    CHECK(stub_named(p, "PowerNotify")->qualified_name == "crate::src::power::power_token::PowerNotify");
    CHECK(stub_named(p, "HdfPowerSetState")->signature_text ==
          "pub fn HdfPowerSetState(token: *mut PowerToken, state: PowerState) -> i32");
    CHECK(stub_named(p, "HdfPowerGetRaw")->signature_text == "pub fn HdfPowerGetRaw(token: *const PowerToken) -> u32");
    CHECK(has(stub_named(p, "HdfPowerSetState")->c_source, "return PowerNotify(token, state);"));
    CHECK(p.stubs.size() == 6);

    CHECK(static_named(p, "g_powerRefCount")->module == "crate::shared");
    CHECK(static_named(p, "g_listeners")->module == "crate::src::power::power_token");
    CHECK(static_named(p, "g_listeners")->rust_type == "[PowerListener; 8]");
    CHECK(static_named(p, "g_listenerCount")->rust_type == "usize");

    CHECK(type_named(p, "PowerToken")->module == "crate::shared");
    CHECK(type_named(p, "PowerToken")->size == 24u);
    CHECK(type_named(p, "PowerValue")->c_kind == "union");
    CHECK(type_named(p, "PowerListener")->emitted_text ==
          "pub type PowerListener = ::core::option::Option<unsafe extern \"C\" fn(*mut PowerToken, PowerState) -> i32>;\n");

    REQUIRE(constant_named(p, "HDF_POWER_MASK"));
    CHECK(constant_named(p, "HDF_POWER_MASK")->emitted_text == "pub const HDF_POWER_MASK: u32 = 0xff;\n");
    CHECK(constant_named(p, "HDF_POWER_NAME")->rust_type == "&CStr");
    CHECK(constant_named(p, "HDF_POWER_MAX_LISTENERS")->module == "crate::shared");
    CHECK_FALSE(constant_named(p, "HDF_POWER_DEBUG"));  // not defined under the traced flags

    testing::TempDir ws("skel");
    auto built = assemble_and_verify(p, ws.path());
    CHECK(built.success);
    CHECK(built.warnings().empty());
    CHECK(fs::exists(ws / "mapping.json"));
    CHECK(fs::exists(ws / ".rsmig/project.json"));
}

TEST_CASE("bundled fixtures compile with placeholder bodies") {
    for (std::string name : {"mini_list", "cyclic", "hdf_power"}) {
        CAPTURE(name);
        auto p = fixture_skeleton(name);
        testing::TempDir ws("skel");
        auto built = assemble_and_verify(p, ws.path());
        CHECK(built.success);
        CHECK(built.errors().empty());
        for (const auto& w : built.warnings()) MESSAGE(w.rendered);
        CHECK(built.warnings().empty());
        size_t bodies = 0;
        for (const auto& [f, text] : render_files(p)) bodies += count_placeholders(text);
        size_t schedulable = std::count_if(p.stubs.begin(), p.stubs.end(), [](const FunctionStub& s) { return s.schedulable; });
        CHECK(bodies == schedulable);
    }
}

TEST_CASE("mini_list skeleton shape") {
    auto p = fixture_skeleton("mini_list");
    CHECK(p.stubs.size() == 3);
    CHECK(p.statics.size() == 1);
    CHECK(static_named(p, "g_list_ops")->module == "crate::src::list");
    CHECK(type_named(p, "ListNode")->emitted_text ==
          "#[repr(C)]\n#[derive(Clone, Copy)]\npub struct ListNode {\n    pub value: i32,\n    pub next: *mut ListNode,\n}\n"
          "const _: () = assert!(::core::mem::size_of::<ListNode>() == 16 && ::core::mem::align_of::<ListNode>() == 8);\n");
    CHECK(stub_named(p, "list_len")->signature_text == "pub fn list_len(head: *const ListNode) -> i32");
}

TEST_CASE("cyclic fixture: cycle, bit-fields, variadics, conditional compilation") {
    auto p = fixture_skeleton("cyclic");
    // -DCYC_WIDE in the trace selects the 64-bit word.
    CHECK(type_named(p, "cyc_word")->emitted_text == "pub type cyc_word = u64;\n");
    CHECK(constant_named(p, "CYC_WORD_BITS")->emitted_text == "pub const CYC_WORD_BITS: i32 = 64;\n");
    CHECK(stub_named(p, "cyc_mask")->return_type == "cyc_word");

    CHECK(p.imports["crate::src::core::even"] == std::vector<std::string>{"crate::src::core::odd::is_odd"});
    CHECK(p.imports["crate::src::core::odd"] == std::vector<std::string>{"crate::src::core::even::is_even"});
    CHECK(static_named(p, "g_depth")->module == "crate::shared");

    const auto* log = stub_named(p, "cyc_log");
    REQUIRE(log);
    CHECK_FALSE(log->schedulable);
    CHECK(log->abi_sensitive);
    auto shared = render_files(p)["src/shared.rs"];
    CHECK(has(shared, "    pub fn cyc_log(fmt: *const c_char, ...) -> i32;\n"));
    CHECK(has(shared, "pub fn vfprintf("));
    CHECK(has(shared, "pub static mut stderr: *mut _IO_FILE;"));

    CHECK(stub_named(p, "count_visit")->abi_sensitive);
    CHECK(has(stub_named(p, "count_visit")->signature_text, "unsafe extern \"C\" fn count_visit"));
    CHECK(stub_named(p, "cyc_match")->signature_text == "pub fn cyc_match(r#match: i32, self_: i32) -> i32");

    const auto* flags = type_named(p, "cyc_flags");
    CHECK(flags->layout_sensitive);
    CHECK(has(flags->emitted_text, "pub _bits: [u8; 8]"));
    CHECK(has(flags->emitted_text, "pub fn set_delta(&mut self, v: i32)"));
    // Declared opaque in the header, defined in walk.c.
    CHECK(type_named(p, "cyc_state")->module == "crate::shared");
    CHECK(type_named(p, "walk_local")->module == "crate::src::util::walk");
    CHECK(has(type_named(p, "cyc_node")->emitted_text, "pub r#type: i32,"));
    CHECK(static_named(p, "CYC_NAME")->emitted_text == "pub static CYC_NAME: &CStr = c\"cyc\";\n");
}

TEST_CASE("record layouts agree with the host C compiler and rustc") {
    // Oracle: sizeof/_Alignof from a program compiled against the fixture headers.
    for (std::string name : {"cyclic", "hdf_power", "mini_list"}) {
        CAPTURE(name);
        auto p = fixture_skeleton(name);
        fs::path root = testing::fixtures() / name;
        std::string prog = "#include <stdio.h>\n";
        for (const auto& e : fs::directory_iterator(root / "include")) prog += "#include \"" + e.path().string() + "\"\n";
        // Types private to a .c file are checked by rustc's assertions only.
        prog += "int main(void) {\n";
        std::vector<const RustTypeDecl*> checked;
        for (const auto& t : p.types) {
            if (t.module != "crate::shared" || !t.size || t.c_kind == "opaque" || t.c_kind == "alias" ||
                t.c_kind == "enumeration" || t.c_name == "cyc_state")
                continue;
            std::string ct = (t.c_kind == "union" ? "union " : "struct ") + t.c_name;
            prog += "    printf(\"%zu %zu\\n\", sizeof(" + ct + "), _Alignof(" + ct + "));\n";
            checked.push_back(&t);
        }
        prog += "    return 0;\n}\n";
        testing::TempDir d("layout");
        write_file(d / "oracle.c", prog);
        std::vector<std::string> cc{"cc", "-std=gnu11", "-DCYC_WIDE", "-o", (d / "oracle").string(), (d / "oracle.c").string()};
        REQUIRE(run_process(cc).ok());
        std::vector<std::string> run{(d / "oracle").string()};
        auto out = run_process(run);
        REQUIRE(out.ok());
        std::istringstream in(out.out);
        for (const auto* t : checked) {
            std::uint64_t size = 0, align = 0;
            in >> size >> align;
            CAPTURE(t->c_name);
            CHECK(*t->size == size);
            CHECK(*t->align == align);
            CHECK(has(t->emitted_text, "size_of::<" + t->name + ">() == " + std::to_string(size)));
        }
        CHECK_FALSE(checked.empty());
    }
}

TEST_CASE("bit-field accessors match the C compiler") {
    // Oracle: the bytes gcc produces for a set of bit-field assignments.
    fs::path root = testing::fixtures() / "cyclic";
    testing::TempDir d("bits");
    write_file(d / "oracle.c", "#include <stdio.h>\n#include <string.h>\n#include \"" + (root / "include/cyc.h").string() +
                                   "\"\nint main(void) {\n"
                                   "    struct cyc_flags f;\n    memset(&f, 0, sizeof f);\n"
                                   "    f.ready = 1; f.mode = 5; f.delta = -3; f.tag = 0xAB; f.level = CYC_LOW;\n"
                                   "    const unsigned char *b = (const unsigned char *)&f;\n"
                                   "    for (size_t i = 0; i < sizeof f; i++) printf(\"%u \", b[i]);\n"
                                   "    return 0;\n}\n");
    std::vector<std::string> cc{"cc", "-std=gnu11", "-o", (d / "oracle").string(), (d / "oracle.c").string()};
    REQUIRE(run_process(cc).ok());
    std::vector<std::string> run{(d / "oracle").string()};
    auto bytes = text::trim_copy(run_process(run).out);
    std::string rust_bytes = text::replace_all(bytes, " ", ", ");

    auto p = fixture_skeleton("cyclic");
    testing::TempDir ws("skel");
    assemble_and_verify(p, ws.path());
    write_file(ws / "tests/bits.rs",
               "use cyclic::shared::*;\n"
               "#[test]\nfn setters_match_c() {\n"
               "    let mut f = cyc_flags { _bits: [0; 8] };\n"
               "    f.set_ready(1); f.set_mode(5); f.set_delta(-3); f.set_tag(0xAB); f.set_level(CYC_LOW);\n"
               "    assert_eq!(f._bits, [" + rust_bytes + "]);\n}\n"
               "#[test]\nfn getters_match_c() {\n"
               "    let f = cyc_flags { _bits: [" + rust_bytes + "] };\n"
               "    assert_eq!(f.ready(), 1);\n    assert_eq!(f.mode(), 5);\n    assert_eq!(f.delta(), -3);\n"
               "    assert_eq!(f.tag(), 0xAB);\n    assert_eq!(f.level(), CYC_LOW);\n}\n");
    auto res = cargo::test(ws.path());
    INFO(res.output);
    CHECK(res.built);
    CHECK(res.passed == 2);
    CHECK(res.failed == 0);
}

TEST_CASE("strict hole fixture fails assembly naming the hole") {
    fs::path root = testing::fixtures() / "holes";
    try {
        fixture_skeleton("holes");
        FAIL("expected a hole error");
    } catch (const SkeletonError& e) {
        CHECK(has(e.what(), "mystery_t"));
    }
    SkeletonConfig lenient;
    lenient.types.holes = HolePolicy::Lenient;
    auto p = fixture_skeleton("holes", lenient);
    CHECK(std::any_of(p.notes.begin(), p.notes.end(), [](const std::string& n) { return has(n, "mystery_t"); }));
    testing::TempDir ws("skel");
    CHECK(assemble_and_verify(p, ws.path()).success);
}

TEST_CASE("a skeleton that does not build is a hard error with diagnostics") {
    auto p = fixture_skeleton("mini_list");
    for (auto& t : p.types)
        if (t.c_name == "ListNode") t.emitted_text = "pub struct ListNode { pub value: Missing }\n";
    testing::TempDir ws("skel");
    try {
        assemble_and_verify(p, ws.path());
        FAIL("expected a build failure");
    } catch (const SkeletonBuildError& e) {
        CHECK_FALSE(e.diagnostics().empty());
        bool named = false;
        for (const auto& d : e.diagnostics())
            if (d.is_error() && has(d.message, "Missing")) named = true;
        CHECK(named);
    }
}

TEST_CASE("skeleton output is deterministic and round-trips") {
    auto a = fixture_skeleton("cyclic");
    auto b = fixture_skeleton("cyclic");
    CHECK(render_files(a) == render_files(b));
    CHECK(to_json(a) == to_json(b));

    auto j = to_json(a);
    auto back = project_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(render_files(back) == render_files(a));
}

TEST_CASE("mapping table is one-to-one") {
    auto p = fixture_skeleton("cyclic");
    auto m = mapping_json(p);
    CHECK(m["crate"] == "cyclic");
    std::map<std::string, std::string> fwd, inv;
    for (const auto& f : m["files"]) {
        CHECK(fwd.emplace(f["c_path"], f["module"]).second);
        CHECK(inv.emplace(f["module"], f["c_path"]).second);
    }
    CHECK(fwd.size() == 4);
    for (const auto& [c, mod] : fwd) CHECK(inv.at(mod) == c);
    for (const auto& [mod, c] : inv) CHECK(fwd.at(c) == mod);

    std::set<std::string> paths;
    for (const auto& f : m["files"])
        for (const auto& s : f["symbols"]) CHECK(paths.insert(s["rust_path"].get<std::string>()).second);
    CHECK(paths.contains("crate::src::core::even::is_even"));
    bool shared_log = false;
    for (const auto& s : m["shared"]["symbols"])
        if (s["c_name"] == "cyc_log") shared_log = true;
    CHECK(shared_log);
}

TEST_CASE("workspace reload") {
    auto p = fixture_skeleton("mini_list");
    testing::TempDir ws("skel");
    assemble_and_verify(p, ws.path());
    auto back = load_project(ws.path());
    CHECK(to_json(back) == to_json(p));
    CHECK_THROWS_AS(load_project(ws / "nope"), SkeletonError);
}
