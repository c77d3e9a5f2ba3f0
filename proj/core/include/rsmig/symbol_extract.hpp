#pragma once

#include "rsmig/build_context.hpp"
#include "rsmig/c_types.hpp"

#include <functional>
#include <set>
#include <string>
#include <vector>

namespace rsmig::symbols {

using c::CTypeDef;
using c::CTypePtr;
using c::SourceLoc;

enum class Storage { External, Internal };

struct CParamDecl {
    std::optional<std::string> name;
    std::string c_type_text;
    CTypePtr type;
};

struct CFunctionDecl {
    std::string name;
    std::string return_type;
    CTypePtr return_ctype;
    std::vector<CParamDecl> params;
    bool variadic = false;
    Storage storage = Storage::External;
    bool defined_here = false;
    SourceLoc source_loc;

    // Harvested from the body when defined_here.
    std::vector<std::string> calls;       // direct callees, first-use order
    std::vector<std::string> value_refs;  // file-scope globals/functions/enumerators read or written
    std::vector<std::string> type_refs;   // typedef names and tags used in the body
    /// The definition as written in the original source (falls back to the
    /// preprocessed text when the span does not map back to one file).
    std::string source_text;
    std::string preprocessed_text;
};

struct CGlobalDecl {
    std::string name;
    std::string c_type_text;
    CTypePtr type;
    std::optional<std::string> initializer_text;
    Storage storage = Storage::External;
    bool is_mutable = true;
    bool defined_here = false;
    SourceLoc source_loc;
    std::vector<std::string> initializer_refs;
};

struct ExtractIssue {
    std::string construct;
    SourceLoc loc;
    std::string message;
};

struct SymbolTable {
    std::string unit;
    std::vector<CTypeDef> types;
    std::vector<CFunctionDecl> functions;
    std::vector<CGlobalDecl> globals;
    std::set<std::string> external_refs;
    /// Functions whose address is taken (used as values, not called).
    std::set<std::string> address_taken;
    bool partial = false;
    std::vector<ExtractIssue> issues;
    /// Unsupported declarations inside system headers; skipped silently.
    size_t skipped_system = 0;
    std::vector<std::string> notes;

    const CFunctionDecl* find_function(std::string_view name) const;
    const CGlobalDecl* find_global(std::string_view name) const;
    c::TypeLookup lookup() const { return c::TypeLookup(types); }
};

/// Loads original source text for line-map back-references; may return empty.
using SourceLoader = std::function<std::optional<std::string>(const std::string& file)>;

/// Parses the supported C declaration subset out of a preprocessed unit.
SymbolTable extract_symbols(const build::PreprocessedUnit& unit, const SourceLoader& loader = {});

/// Same, over bare C text without line markers (tests, adapters).
SymbolTable extract_symbols_from_text(std::string_view c_text, std::string unit_name = "<text>");

/// Reads a structured AST dump: one tab-separated record per line,
/// `kind<TAB>name<TAB>type text<TAB>file:line`. Kinds: function, function-def,
/// variable, extern-variable, static-variable, typedef, struct, union, enum,
/// field, enumerator (value in the type column). Fields and enumerators
/// attach to the closest preceding struct/union/enum record.
SymbolTable parse_ast_dump(std::string_view dump, std::string unit_name);

struct MacroConstant {
    enum class Kind { Integer, Character, String };
    std::string name;
    Kind kind = Kind::Integer;
    /// Literal as written (outer parentheses removed).
    std::string literal;
    std::int64_t int_value = 0;
    bool is_unsigned = false;
    bool is_long = false;
    std::string string_value;
    SourceLoc source_loc;
};

struct SkippedMacro {
    std::string name;
    std::string reason;
};

struct MacroScan {
    std::vector<MacroConstant> constants;
    std::vector<SkippedMacro> skipped;
};

/// Records object-like macros of `original_source` whose replacement is a
/// single integer, character, or string literal. When the unit carries the
/// preprocessor's final macro table, only macros active under the real build
/// are kept, with the build's value.
MacroScan collect_macro_constants(const build::PreprocessedUnit& unit, std::string_view original_source,
                                  std::string source_name = {});

/// Parses a C integer or character literal ("0x10UL", "'a'", "-1").
std::optional<MacroConstant> parse_literal(std::string_view text);

}  // namespace rsmig::symbols
