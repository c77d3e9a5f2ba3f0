#pragma once

#include "rsmig/build_context.hpp"
#include "rsmig/cargo.hpp"
#include "rsmig/symbol_extract.hpp"

#include <nlohmann/json.hpp>

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rsmig::skeleton {

namespace fs = std::filesystem;

/// `crate::a::b` from {"a", "b"}.
std::string path_string(const std::vector<std::string>& segments);

/// Rust spelling of a C identifier: keywords become raw identifiers, names
/// that cannot be raw (`self`, `crate`, ...) get a trailing underscore.
std::string rust_ident(std::string_view c_name);

// ---------------------------------------------------------------------------
// Module tree

struct ModuleInfo {
    /// Source path relative to the project root, '/'-separated.
    std::string c_path;
    std::vector<std::string> segments;
    /// Relative to the workspace root, e.g. `src/power/power_token.rs`.
    std::string rust_file;

    std::string path() const { return path_string(segments); }
};

struct ModuleTree {
    std::string crate_name;
    std::vector<ModuleInfo> modules;  // sorted by c_path
    /// One line per sanitized-name collision that needed a suffix.
    std::vector<std::string> collisions;

    const ModuleInfo* by_c_path(std::string_view c_path) const;
    const ModuleInfo* by_module(std::string_view module_path) const;
    /// Directory modules (non-leaf), each with its direct children, in order.
    std::map<std::vector<std::string>, std::vector<std::string>> children() const;
};

struct MirrorOptions {
    std::string crate_name = "migrated";
    /// Drop the directory prefix shared by every source file.
    bool flatten_root = false;
};

class SkeletonError : public Error {
public:
    using Error::Error;
};

/// Mirrors the C directory hierarchy into a module tree. `sources` may be
/// absolute or relative to `root`.
ModuleTree mirror_module_tree(const fs::path& root, const std::vector<fs::path>& sources,
                              const MirrorOptions& options = {});

// ---------------------------------------------------------------------------
// Skeleton parts

enum class Visibility { Public, Crate, Private };
const char* visibility_keyword(Visibility v);

enum class HolePolicy { Strict, Lenient };

struct TypePolicy {
    HolePolicy holes = HolePolicy::Strict;
};

struct RustTypeDecl {
    std::string name;
    std::string c_name;
    /// record, union, enumeration, alias, opaque
    std::string c_kind;
    /// Module path that holds the declaration.
    std::string module;
    std::string emitted_text;
    bool repr_c = false;
    bool layout_sensitive = false;
    std::optional<std::uint64_t> size;
    std::optional<std::uint64_t> align;
    std::string origin_file;
    /// Enumerator constants emitted alongside (enumerations only).
    std::vector<std::string> enumerators;
};

struct StubParam {
    std::string name;
    std::string rust_type;
    std::string c_type;
};

struct FunctionStub {
    std::string qualified_name;
    std::string module;
    std::string name;
    std::string c_name;
    std::string signature_text;
    std::vector<StubParam> params;
    std::string return_type;  // empty for `()`
    Visibility visibility = Visibility::Public;
    bool abi_sensitive = false;
    /// Variadic C definitions stay in C and are never scheduled.
    bool schedulable = true;
    bool internal_linkage = false;
    std::string rust_file;
    std::string c_file;
    int c_line = 0;
    std::string c_source;
    std::vector<std::string> c_calls;
    std::vector<std::string> c_value_refs;
    std::vector<std::string> c_type_refs;
    /// C parameter names that had to be renamed in Rust.
    std::map<std::string, std::string> renamed_params;
    std::string placeholder = "unimplemented";

    std::string placeholder_body() const;
    /// Full item text: doc line, signature, marked placeholder body.
    std::string item_text() const;
};

struct StaticDecl {
    std::string name;
    std::string c_name;
    std::string module;
    std::string rust_type;
    std::string emitted_text;
    bool is_mutable = true;
    /// Accessor function name for mutable statics (`<name>_ptr`).
    std::string accessor;
    bool todo_initializer = false;
    bool internal_linkage = false;
};

struct ConstantDecl {
    std::string name;
    std::string module;
    std::string rust_type;
    std::string emitted_text;
    std::string c_literal;
    std::string origin;
};

/// Declarations of symbols that stay in C: boundary functions and globals
/// referenced by the project, and variadic definitions retained in C.
struct ExternDecl {
    std::string name;
    std::string kind;  // "function" or "static"
    std::string emitted_text;
    bool retained_in_c = false;
};

struct SkeletonConfig {
    MirrorOptions mirror;
    TypePolicy types;
    /// Diverging macro used in placeholder bodies: `unimplemented` or `todo`.
    std::string placeholder = "unimplemented";
    std::string edition = "2021";
};

struct SkeletonProject {
    ModuleTree tree;
    std::vector<RustTypeDecl> types;
    std::vector<FunctionStub> stubs;
    std::vector<StaticDecl> statics;
    std::vector<ConstantDecl> constants;
    std::vector<ExternDecl> externs;
    std::string shared_layer = "crate::shared";
    /// Per-module `use` lines for cross-module references.
    std::map<std::string, std::vector<std::string>> imports;
    std::vector<std::string> notes;
    SkeletonConfig config;

    const FunctionStub* stub(std::string_view qualified_name) const;
    FunctionStub* stub(std::string_view qualified_name);
};

nlohmann::json to_json(const SkeletonProject& p);
SkeletonProject project_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Type environment

/// Type definitions visible to one unit plus everything lowering them needs
/// to remember (system records reached, holes left open).
class TypeEnv {
public:
    TypeEnv() = default;
    explicit TypeEnv(const std::vector<c::CTypeDef>& types);
    TypeEnv(const TypeEnv&) = delete;
    TypeEnv& operator=(const TypeEnv&) = delete;

    /// A full definition replaces an earlier opaque one.
    void add(const c::CTypeDef& def);
    const c::TypeLookup& lookup() const { return lookup_; }
    const std::deque<c::CTypeDef>& defs() const { return defs_; }

    /// Rust spelling of a value of type `t`. Throws SkeletonError naming the
    /// hole when a type cannot be resolved and the policy is strict.
    std::string lower(const c::CTypePtr& t, const TypePolicy& policy, const std::string& where) const;
    /// Parameter position: arrays and functions decay to pointers.
    std::string lower_param(const c::CTypePtr& t, const TypePolicy& policy, const std::string& where) const;
    /// `-> T` or empty for void.
    std::string lower_return(const c::CTypePtr& t, const TypePolicy& policy, const std::string& where) const;

    /// Rust name of a tag or typedef declared here.
    std::string tag_name(std::string_view tag) const;
    std::string alias_name(const c::CTypeDef& alias) const;

    /// Typedefs that never get their own Rust alias: identity aliases, system
    /// aliases, function types, names that shadow Rust primitives.
    bool is_inlined_alias(const c::CTypeDef& def) const;

    /// True when values of `t` may live in an immutable static.
    bool is_sync(const c::CTypePtr& t) const;

    struct Opaque {
        std::optional<c::Layout> layout;
    };
    /// System records (and lenient by-value holes) reached while lowering.
    const std::map<std::string, Opaque>& opaque_used() const { return opaque_used_; }
    const std::set<std::string>& holes() const { return holes_; }
    bool long_double_used() const { return long_double_used_; }
    bool va_list_used() const { return va_list_used_; }

private:
    enum class Pos { Value, Param, Pointee, Member };
    std::string lower_impl(const c::CTypePtr& t, const TypePolicy& policy, const std::string& where, Pos pos) const;
    std::string fn_pointer(const c::CType& fn, const TypePolicy& policy, const std::string& where) const;
    std::string hole(const std::string& name, const TypePolicy& policy, const std::string& where, Pos pos) const;

    std::deque<c::CTypeDef> defs_;
    c::TypeLookup lookup_;
    mutable std::map<std::string, Opaque> opaque_used_;
    mutable std::set<std::string> holes_;
    mutable bool long_double_used_ = false;
    mutable bool va_list_used_ = false;
};

/// Integer type of an enumeration, chosen the way GCC sizes it.
std::string enum_repr(const c::CTypeDef& e);

/// Lowers one C type definition into a Rust declaration (text only; the
/// caller decides placement).
RustTypeDecl lower_type(const c::CTypeDef& t, const TypeEnv& env, const TypePolicy& policy = {});

struct StubContext {
    const ModuleInfo* module = nullptr;
    /// C names of functions referenced from modules other than the definer.
    const std::set<std::string>* cross_module_refs = nullptr;
    /// C names of functions whose address is taken anywhere.
    const std::set<std::string>* address_taken = nullptr;
    /// Value names a parameter may not shadow (statics and constants in scope).
    const std::set<std::string>* reserved_values = nullptr;
    TypePolicy policy;
    std::string placeholder = "unimplemented";
};

FunctionStub emit_stub(const symbols::CFunctionDecl& f, const TypeEnv& env, const StubContext& ctx);

struct GlobalUsage {
    /// Module paths whose functions reference the global.
    std::set<std::string> modules;
    /// Defining module path (empty for boundary globals).
    std::string defining_module;
};

StaticDecl lift_global(const symbols::CGlobalDecl& g, const GlobalUsage& usage, const TypeEnv& env,
                       const TypePolicy& policy = {});

ConstantDecl lower_constant(const symbols::MacroConstant& m);

// ---------------------------------------------------------------------------
// Whole-project synthesis

struct UnitInput {
    /// Absolute path of the unit's source file.
    fs::path source;
    /// Compile directory; relative paths in source locations resolve against
    /// it. Defaults to the source file's directory.
    fs::path directory;
    symbols::SymbolTable table;
    std::vector<symbols::MacroConstant> constants;
};

/// Lowers every unit into skeleton parts (no files are written).
SkeletonProject synthesize(const fs::path& project_root, const std::vector<UnitInput>& units,
                           const SkeletonConfig& config = {});

/// Text of one emitted Rust file (`src/lib.rs`, `src/shared.rs`, a module or
/// directory `mod.rs`), keyed by workspace-relative path.
std::map<std::string, std::string> render_files(const SkeletonProject& project);

class SkeletonBuildError : public SkeletonError {
public:
    SkeletonBuildError(std::string message, std::vector<cargo::Diagnostic> diagnostics);
    const std::vector<cargo::Diagnostic>& diagnostics() const { return diagnostics_; }

private:
    std::vector<cargo::Diagnostic> diagnostics_;
};

/// Writes the workspace (manifest, module tree, shared layer, mapping.json,
/// .rsmig/project.json) and builds it. Fails with the compiler diagnostics
/// when the skeleton does not build.
cargo::BuildResult assemble_and_verify(const SkeletonProject& project, const fs::path& workspace,
                         const cargo::Toolchain& toolchain = {});

nlohmann::json mapping_json(const SkeletonProject& project);

/// Loads the project saved by assemble_and_verify.
SkeletonProject load_project(const fs::path& workspace);

struct BuildSkeletonOptions {
    SkeletonConfig config;
    build::PreprocessorConfig preprocessor;
    build::LoadOptions trace;
};

/// Trace -> preprocessed units -> symbol tables -> skeleton parts.
SkeletonProject skeleton_from_trace(const fs::path& project_root, const fs::path& trace,
                                    const BuildSkeletonOptions& options = {});

/// Start/end marker lines that delimit a function body in a module file.
std::string begin_marker(std::string_view qualified_name);
std::string end_marker(std::string_view qualified_name);

}  // namespace rsmig::skeleton
