#pragma once

#include "rsmig/knowledge.hpp"
#include "rsmig/support/files.hpp"
#include "rsmig/support/process.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsmig::testing {

struct PlantedPair {
    std::string heuristic;
    std::string c_path;
    std::string rust_path;
};

struct MiningRepo {
    std::vector<PlantedPair> planted;
    /// Deleted C file and a same-stem Rust file created 400 days later.
    PlantedPair decoy;
};

/// Scripted commits with fixed authors and dates.
class GitScript {
public:
    explicit GitScript(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        run({"git", "init", "-q"});
    }

    void commit(int day, const std::string& author, const std::string& message,
                const std::map<std::string, std::string>& writes, const std::vector<std::string>& removes = {}) {
        for (const auto& [path, content] : writes) write_file(dir_ / path, content);
        for (const auto& path : removes) std::filesystem::remove(dir_ / path);
        run({"git", "add", "-A", "."});
        run({"git", "commit", "-q", "--no-gpg-sign", "-m", message}, day, author);
    }

private:
    void run(std::vector<std::string> argv, int day = 0, const std::string& author = "setup") {
        ProcessOptions o;
        o.cwd = dir_;
        const std::string date = "@" + std::to_string(kEpoch + static_cast<long long>(day) * 86400) + " +0000";
        const std::string email = author + "@example.org";
        o.env = {{"GIT_AUTHOR_NAME", author},     {"GIT_AUTHOR_EMAIL", email},  {"GIT_COMMITTER_NAME", author},
                 {"GIT_COMMITTER_EMAIL", email},  {"GIT_AUTHOR_DATE", date},    {"GIT_COMMITTER_DATE", date},
                 {"GIT_CONFIG_NOSYSTEM", "1"},    {"GIT_CONFIG_GLOBAL", "/dev/null"}};
        auto r = run_process(argv, o);
        if (!r.ok()) throw std::runtime_error("git failed: " + r.err);
    }

    static constexpr long long kEpoch = 1577836800;  // 2020-01-01
    std::filesystem::path dir_;
};

inline std::string c_lines(const std::string& stem, int n) {
    std::string s = "int " + stem + "_step(int v) {\n    int acc = v;\n";
    for (int i = 0; i < n; ++i) s += "    acc = acc * 3 + " + std::to_string(i) + ";\n";
    return s + "    return acc;\n}\n";
}

inline std::string rust_lines(const std::string& stem, int n) {
    std::string s = "pub fn " + stem + "_step(v: i32) -> i32 {\n    let mut acc = v;\n";
    for (int i = 0; i < n; ++i) s += "    acc = acc.wrapping_mul(3).wrapping_add(" + std::to_string(i) + ");\n";
    return s + "    acc\n}\n";
}

/// One planted pair per mining heuristic (the delete-then-create one 300 days
/// apart) plus the out-of-window decoy.
inline MiningRepo build_mining_repo(const std::filesystem::path& dir) {
    namespace tag = knowledge::tag;
    GitScript g(dir);
    MiningRepo m;

    g.commit(0, "alice", "initial import",
             {{"src/kw.c", "int kw_parse(const char *s) {\n    int n = 0;\n    while (*s++) n++;\n    return n;\n}\n"},
              {"src/bs.c", c_lines("bs", 3)},
              {"Makefile", "SRCS = src/bs.c\n\nall:\n\tcc -c $(SRCS)\n"},
              {"src/im.c", "unsigned im_checksum(const unsigned char *buf, int n) {\n    unsigned sum = 0;\n"
                           "    for (int i = 0; i < n; i++) sum += buf[i];\n    return sum;\n}\n"},
              {"src/caller.c", "unsigned im_checksum(const unsigned char *buf, int n);\n\n"
                               "unsigned caller_run(const unsigned char *buf, int n) {\n"
                               "    return im_checksum(buf, n);\n}\n"},
              {"src/ch.c", c_lines("ch", 20)},
              {"src/dc.c", c_lines("dc", 4)},
              {"src/co.c", c_lines("co", 2)},
              {"src/a.c", c_lines("decoy", 5)}});

    g.commit(10, "bob", "Rewrite the kw parser in Rust",
             {{"src/kw.c", "int kw_parse(const char *s) {\n    int n = 0;\n    while (*s++) n += 1;\n    return n;\n}\n"},
              {"src/kw.rs", "pub fn kw_parse(s: &[u8]) -> i32 {\n    s.iter().take_while(|c| **c != 0).count() as i32\n}\n"}});
    m.planted.push_back({tag::kKeyword, "src/kw.c", "src/kw.rs"});

    g.commit(20, "carol", "Switch the bs target",
             {{"Makefile", "SRCS = src/bs.rs\n\nall:\n\trustc --crate-type=lib $(SRCS)\n"},
              {"src/bs.rs", rust_lines("bs", 3)}});
    m.planted.push_back({tag::kBuildSwitch, "src/bs.c", "src/bs.rs"});

    g.commit(30, "carol", "Add checksum module",
             {{"src/im.rs", "#[no_mangle]\npub extern \"C\" fn im_checksum_rs(buf: *const u8, n: i32) -> u32 {\n"
                            "    let s = unsafe { core::slice::from_raw_parts(buf, n as usize) };\n"
                            "    s.iter().fold(0u32, |a, b| a.wrapping_add(*b as u32))\n}\n"}});
    g.commit(40, "carol", "Use the new checksum",
             {{"src/caller.c", "unsigned im_checksum_rs(const unsigned char *buf, int n);\n\n"
                               "unsigned caller_run(const unsigned char *buf, int n) {\n"
                               "    return im_checksum_rs(buf, n);\n}\n"}});
    m.planted.push_back({tag::kInterface, "src/im.c", "src/im.rs"});

    g.commit(50, "bob", "Trim step helper",
             {{"src/ch.c", c_lines("ch", 2)}, {"src/ch_impl.rs", rust_lines("ch_impl", 16)}});
    m.planted.push_back({tag::kChurn, "src/ch.c", "src/ch_impl.rs"});

    g.commit(60, "alice", "Remove dc", {}, {"src/dc.c"});

    for (int k = 0; k < 3; ++k)
        g.commit(170 + k * 5, "bob", "Tune co step " + std::to_string(k),
                 {{"src/co.c", c_lines("co", 3 + k)}, {"src/co.rs", rust_lines("co", 3 + k)}});
    m.planted.push_back({tag::kCoupling, "src/co.c", "src/co.rs"});

    g.commit(190, "frank", "Add di helper", {{"lib/di.c", c_lines("di", 6)}});
    g.commit(200, "frank", "Add di in Rust", {{"lib/di_new.rs", rust_lines("di_new", 6)}});
    m.planted.push_back({tag::kIdentity, "lib/di.c", "lib/di_new.rs"});

    g.commit(210, "gina", "Add colo target",
             {{"colo/BUILD.gn", "static_library(\"colo\") {\n  sources = [ \"mc.c\", \"mc_glue.rs\" ]\n}\n"},
              {"colo/mc.c", c_lines("mc", 2)},
              {"colo/mc_glue.rs", rust_lines("glue", 2)}});
    m.planted.push_back({tag::kColocation, "colo/mc.c", "colo/mc_glue.rs"});

    g.commit(220, "hank", "Add table code",
             {{"tbl/kt.c", "#define ERR_NO_MEM 12\n#define MAX_DEPTH 8\nstatic unsigned hash_seed = 7;\n\n"
                           "int kt_check(int depth) {\n    if (depth > MAX_DEPTH) return -ERR_NO_MEM;\n"
                           "    return (int)(hash_seed + depth);\n}\n"}});
    g.commit(230, "ivan", "Add table port",
             {{"tbl/port.rs", "const ERR_NO_MEM: i32 = 12;\nconst MAX_DEPTH: i32 = 8;\nstatic hash_seed: u32 = 7;\n\n"
                              "fn check(depth: i32) -> i32 {\n    if depth > MAX_DEPTH { return -ERR_NO_MEM; }\n"
                              "    hash_seed as i32 + depth\n}\n"}});
    m.planted.push_back({tag::kTokenOverlap, "tbl/kt.c", "tbl/port.rs"});

    g.commit(240, "judy", "Add settings loader",
             {{"cfg/sl.c", "#include <stdio.h>\nint sl_load(const char *p) {\n    if (!p) { puts(\"config file not found\"); return -1; }\n"
                           "    return 0;\n}\n"}});
    g.commit(250, "kate", "Add settings",
             {{"cfg/settings.rs", "pub fn load(p: Option<&str>) -> i32 {\n    match p {\n"
                                  "        None => { println!(\"config file not found\"); -1 }\n        Some(_) => 0,\n    }\n}\n"}});
    m.planted.push_back({tag::kLiterals, "cfg/sl.c", "cfg/settings.rs"});

    g.commit(300, "alice", "Drop a", {}, {"src/a.c"});
    g.commit(360, "erin", "Add dc", {{"src/dc.rs", rust_lines("dc", 4)}});
    m.planted.push_back({tag::kDeleteCreate, "src/dc.c", "src/dc.rs"});
    g.commit(700, "dave", "Add a", {{"src/a.rs", rust_lines("decoy", 5)}});
    m.decoy = {tag::kDeleteCreate, "src/a.c", "src/a.rs"};
    return m;
}

}  // namespace rsmig::testing
