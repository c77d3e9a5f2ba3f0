#include "doctest.h"
#include "unit/helpers.hpp"

#include "rsmig/build_context.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/text.hpp"

#include <algorithm>

using namespace rsmig;
using namespace rsmig::build;
namespace fs = std::filesystem;

namespace {

const fs::path kHdf = testing::fixtures() / "hdf_power";

CompileCommand token_command() {
    auto cmds = load_compile_commands(kHdf / "compile_commands.json");
    REQUIRE(cmds.size() == 2);
    return cmds[0];
}

}  // namespace

TEST_CASE("trace entries resolve relative directories against the trace file") {
    auto cmds = load_compile_commands(kHdf / "compile_commands.json");
    REQUIRE(cmds.size() == 2);
    CHECK(cmds[0].directory == fs::weakly_canonical(kHdf));
    CHECK(cmds[0].absolute_source() == fs::weakly_canonical(kHdf / "src/power/power_token.c"));
    CHECK(cmds[1].arguments.size() == 9);  // `command` form is shell-split
    CHECK_FALSE(cmds[0].output_file);
}

TEST_CASE("normalize is idempotent") {
    auto c = token_command();
    CHECK(normalize(c) == c);
    CHECK(normalize(normalize(c)) == normalize(c));
}

TEST_CASE("malformed trace entries name the record and field") {
    testing::TempDir d("trace");
    write_file(d / "a.c", "int x;\n");
    write_file(d / "cc.json", R"([{"directory": ".", "file": "a.c", "arguments": ["cc", "a.c"]}, {"directory": "."}])");
    try {
        load_compile_commands(d / "cc.json");
        FAIL("expected BuildTraceError");
    } catch (const BuildTraceError& e) {
        CHECK(std::string(e.what()).find("1") != std::string::npos);
        CHECK(std::string(e.what()).find("file") != std::string::npos);
    }
    write_file(d / "missing.json", R"([{"directory": ".", "file": "nope.c", "arguments": ["cc", "nope.c"]}])");
    CHECK_THROWS_AS(load_compile_commands(d / "missing.json"), BuildTraceError);
    LoadOptions skip;
    skip.skip_missing_sources = true;
    CHECK(load_compile_commands(d / "missing.json", skip).empty());
    write_file(d / "bad.json", "{ not json");
    CHECK_THROWS_AS(load_compile_commands(d / "bad.json"), BuildTraceError);
}

TEST_CASE("unit context keeps defines, undefines and include order") {
    CompileCommand cmd;
    cmd.directory = "/work";
    cmd.source_file = "/work/a.c";
    cmd.arguments = {"cc", "-DA=1", "-D", "B", "-UA", "-DC=x y", "-I", "inc", "-isystem", "/sys", "-Iother",
                     "-include", "cfg.h", "-std=gnu99", "-m32", "-O2", "-Wall", "-c", "a.c"};
    auto ctx = derive_unit_context(cmd);
    REQUIRE(ctx.defines.size() == 2);
    CHECK(ctx.defines[0] == Define{"B", std::nullopt});
    CHECK(ctx.defines[1] == Define{"C", "x y"});
    CHECK(ctx.undefines == std::vector<std::string>{"A"});
    CHECK_FALSE(ctx.has_define("A"));
    CHECK(ctx.has_define("B"));
    REQUIRE(ctx.include_paths.size() == 3);
    CHECK(ctx.include_paths[0] == "inc");
    CHECK(ctx.include_paths[1] == "/sys");
    CHECK(ctx.include_paths[2] == "other");
    CHECK(ctx.system_include_paths == std::vector<fs::path>{"/sys"});
    CHECK(ctx.forced_includes == std::vector<fs::path>{"cfg.h"});
    CHECK(ctx.language_standard == "gnu99");
    CHECK(std::find(ctx.preprocessor_flags.begin(), ctx.preprocessor_flags.end(), "-m32") != ctx.preprocessor_flags.end());
    CHECK(std::find(ctx.ignored_flags.begin(), ctx.ignored_flags.end(), "-Wall") != ctx.ignored_flags.end());
}

TEST_CASE("response files are expanded") {
    testing::TempDir d("rsp");
    write_file(d / "flags.rsp", "-DFROM_RSP=2 -Iinc");
    CompileCommand cmd;
    cmd.directory = d.path();
    cmd.source_file = d.path() / "a.c";
    cmd.arguments = {"cc", "@flags.rsp", "-c", "a.c"};
    auto ctx = derive_unit_context(cmd);
    CHECK(ctx.has_define("FROM_RSP"));
    CHECK(ctx.include_paths.size() == 1);
}

TEST_CASE("preprocessing follows the unit's own flags") {
    auto ctx = derive_unit_context(token_command());
    auto unit = preprocess_unit(ctx);
    CHECK(unit.text.find("HdfPowerTokenInit") != std::string::npos);
    CHECK(unit.line_map.size() == std::count(unit.text.begin(), unit.text.end(), '\n'));
    CHECK(unit.active_macros.at("HDF_BUILD") == "1");
    CHECK(unit.active_macros.at("HDF_POWER_DYNAMIC_CTRL") == "0");
    CHECK_FALSE(unit.active_macros.contains("HDF_POWER_DEBUG"));
    CHECK(unit.active_macros.contains("HDF_POWER_MIN()"));

    // Line map points back at the original header line.
    auto header = read_file(kHdf / "include/hdf_power.h");
    auto hlines = text::split_lines(header);
    auto ulines = text::split_lines(unit.text);
    bool found = false, saw_system = false;
    for (size_t i = 0; i < ulines.size(); ++i) {
        if (unit.line_map[i] && unit.line_map[i]->system) saw_system = true;
        if (ulines[i].starts_with("int HdfPowerSetState(") && ulines[i].ends_with(";")) {
            REQUIRE(unit.line_map[i]);
            CHECK(fs::path(unit.line_map[i]->file).filename() == "hdf_power.h");
            CHECK_FALSE(unit.line_map[i]->system);
            CHECK(hlines.at(unit.line_map[i]->line - 1) == ulines[i]);
            found = true;
        }
    }
    CHECK(found);
    CHECK(saw_system);
}

TEST_CASE("missing includes are reported as unresolvable") {
    testing::TempDir d("pp");
    write_file(d / "a.c", "#include \"nope.h\"\nint x;\n");
    CompileCommand cmd;
    cmd.directory = d.path();
    cmd.source_file = d.path() / "a.c";
    cmd.arguments = {"cc", "-c", "a.c"};
    try {
        preprocess_unit(derive_unit_context(cmd));
        FAIL("expected PreprocessError");
    } catch (const PreprocessError& e) {
        CHECK(e.kind() == PreprocessError::Kind::UnresolvedInclude);
        CHECK(e.diagnostics().find("nope.h") != std::string::npos);
    }
}

TEST_CASE("line markers, pseudo files and pragmas") {
    TranslationUnitContext ctx;
    ctx.command.directory = "/w";
    ctx.command.source_file = "/w/a.c";
    std::string raw = "# 1 \"/w/a.c\"\n# 1 \"<built-in>\"\nbuiltin junk\n# 1 \"/w/a.c\"\n#pragma once\nint a;\n"
                      "# 5 \"/usr/include/x.h\" 1 3 4\nint b;\n# 3 \"/w/a.c\" 2\nint c;\n";
    auto u = parse_preprocessed_output(ctx, raw);
    auto lines = text::split_lines(u.text);
    REQUIRE(lines.size() == u.line_map.size());
    CHECK(u.text.find("builtin junk") == std::string::npos);
    CHECK(u.text.find("#pragma") == std::string::npos);
    CHECK(u.notes.size() == 1);
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i] == "int a;") CHECK(*u.line_map[i] == LineOrigin{"/w/a.c", 2, false});
        if (lines[i] == "int b;") CHECK(*u.line_map[i] == LineOrigin{"/usr/include/x.h", 5, true});
        if (lines[i] == "int c;") CHECK(*u.line_map[i] == LineOrigin{"/w/a.c", 3, false});
    }
}
