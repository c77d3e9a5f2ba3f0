#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rsmig::c {

struct CType;
using CTypePtr = std::shared_ptr<const CType>;

struct CParam {
    std::string name;  // may be empty
    CTypePtr type;
};

/// Structured C type as recovered from a declaration.
struct CType {
    enum class Kind { Void, Builtin, Typedef, Record, Union, Enum, Pointer, Array, Function };

    Kind kind = Kind::Void;
    /// Builtin canonical spelling ("unsigned long"), typedef name, or tag.
    std::string name;
    bool is_const = false;
    /// Pointee, element, or return type.
    CTypePtr inner;
    /// Arrays only; empty for `[]`.
    std::optional<std::uint64_t> array_size;
    std::vector<CParam> params;
    bool variadic = false;
    /// `f()` with no prototype.
    bool unspecified_params = false;

    static CTypePtr make_void(bool is_const = false);
    static CTypePtr builtin(std::string name, bool is_const = false);
    static CTypePtr named(Kind kind, std::string name, bool is_const = false);
    static CTypePtr pointer_to(CTypePtr pointee, bool is_const = false);
    static CTypePtr array_of(CTypePtr element, std::optional<std::uint64_t> size);
    static CTypePtr function(CTypePtr ret, std::vector<CParam> params, bool variadic, bool unspecified = false);
};

CTypePtr with_const(const CTypePtr& t, bool is_const);

/// C spelling of `t`, optionally wrapped around a declarator name.
std::string to_c_string(const CType& t, std::string_view declarator = {});

struct SourceLoc {
    std::string file;
    int line = 0;
    bool system = false;

    std::string str() const { return file + ":" + std::to_string(line); }
    bool operator==(const SourceLoc&) const = default;
};

struct CMember {
    std::string name;
    std::string c_type_text;
    CTypePtr type;
    std::optional<int> bit_width;
};

struct CEnumerator {
    std::string name;
    std::int64_t value = 0;
};

struct CTypeDef {
    enum class Kind { Record, Union, Enumeration, Alias };

    std::string name;
    Kind kind = Kind::Record;
    /// Forward declaration with no body anywhere in the unit.
    bool opaque = false;
    std::vector<CMember> members;
    std::vector<CEnumerator> enumerators;
    /// Alias target.
    CTypePtr aliased;
    SourceLoc source_loc;
    /// Bit-fields, packing, or explicit alignment make the layout fragile.
    bool layout_sensitive = false;
    bool packed = false;
    std::optional<std::uint64_t> aligned;
    /// Name was synthesized for an anonymous record/enum.
    bool synthesized_name = false;

    bool is_tag() const { return kind != Kind::Alias; }
};

const char* kind_name(CTypeDef::Kind k);

/// `typedef struct Foo Foo;` and friends: the alias only re-spells its tag.
bool is_identity_alias(const CTypeDef& def);

/// Tag and typedef namespaces over a set of type definitions.
class TypeLookup {
public:
    TypeLookup() = default;
    explicit TypeLookup(const std::vector<CTypeDef>& types);
    void add(const CTypeDef& def);
    const CTypeDef* tag(std::string_view name) const;
    const CTypeDef* alias(std::string_view name) const;
    /// Follows typedef chains (keeping const) to the first non-typedef type.
    CTypePtr resolve(const CTypePtr& t) const;

private:
    std::map<std::string, const CTypeDef*, std::less<>> tags_;
    std::map<std::string, const CTypeDef*, std::less<>> aliases_;
};

struct Layout {
    std::uint64_t size = 0;
    std::uint64_t align = 1;
    bool operator==(const Layout&) const = default;
};

struct FieldLayout {
    std::string name;
    /// Offset in bits from the start of the record.
    std::uint64_t bit_offset = 0;
    std::uint64_t bit_width = 0;  // 0 for ordinary members
    CTypePtr type;
};

struct RecordLayout {
    Layout layout;
    std::vector<FieldLayout> fields;
};

/// x86-64 System V sizes and alignments. Empty when the type is incomplete
/// or not understood.
std::optional<Layout> layout_of(const CType& t, const TypeLookup& types);
std::optional<RecordLayout> record_layout(const CTypeDef& def, const TypeLookup& types);

}  // namespace rsmig::c
