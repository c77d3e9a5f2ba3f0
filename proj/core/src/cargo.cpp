#include "rsmig/cargo.hpp"

#include "rsmig/support/process.hpp"
#include "rsmig/support/text.hpp"

#include <nlohmann/json.hpp>

#include <regex>

namespace rsmig::cargo {

using nlohmann::json;

const Span* Diagnostic::primary_span() const {
    for (const auto& s : spans)
        if (s.primary) return &s;
    return spans.empty() ? nullptr : &spans.front();
}

std::vector<Diagnostic> BuildResult::errors() const {
    std::vector<Diagnostic> out;
    for (const auto& d : diagnostics)
        if (d.is_error()) out.push_back(d);
    return out;
}

std::vector<Diagnostic> BuildResult::warnings() const {
    std::vector<Diagnostic> out;
    for (const auto& d : diagnostics)
        if (d.level == "warning") out.push_back(d);
    return out;
}

namespace {

std::string str_or(const json& j, const char* key) {
    auto it = j.find(key);
    return it != j.end() && it->is_string() ? it->get<std::string>() : std::string();
}

void collect_children(const json& msg, std::vector<std::string>& out) {
    auto it = msg.find("children");
    if (it == msg.end() || !it->is_array()) return;
    for (const auto& c : *it) {
        std::string line = str_or(c, "level") + ": " + str_or(c, "message");
        auto spans = c.find("spans");
        if (spans != c.end() && spans->is_array()) {
            for (const auto& s : *spans) {
                auto rep = s.find("suggested_replacement");
                if (rep != s.end() && rep->is_string()) line += " [suggestion: `" + rep->get<std::string>() + "`]";
            }
        }
        out.push_back(line);
        collect_children(c, out);
    }
}

}  // namespace

BuildResult parse_build_output(const std::string& stdout_text, const std::string& stderr_text, int exit_code) {
    BuildResult r;
    r.success = exit_code == 0;
    for (const auto& line : text::split_lines(stdout_text)) {
        if (line.empty() || line[0] != '{') {
            if (!line.empty()) r.raw_output += line + "\n";
            continue;
        }
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || str_or(j, "reason") != "compiler-message") continue;
        const json& m = j["message"];
        Diagnostic d;
        d.level = str_or(m, "level");
        d.message = str_or(m, "message");
        d.rendered = str_or(m, "rendered");
        if (m.contains("code") && m["code"].is_object()) d.code = str_or(m["code"], "code");
        // Summary lines ("aborting due to ...", "N warnings emitted") carry no spans and no code.
        if (m.contains("spans") && m["spans"].is_array()) {
            for (const auto& s : m["spans"]) {
                Span sp;
                sp.file = str_or(s, "file_name");
                sp.line_start = s.value("line_start", 0);
                sp.line_end = s.value("line_end", 0);
                sp.column_start = s.value("column_start", 0);
                sp.column_end = s.value("column_end", 0);
                sp.primary = s.value("is_primary", false);
                if (s.contains("label") && s["label"].is_string()) sp.label = s["label"].get<std::string>();
                if (s.contains("suggested_replacement") && s["suggested_replacement"].is_string())
                    sp.suggested_replacement = s["suggested_replacement"].get<std::string>();
                d.spans.push_back(std::move(sp));
            }
        }
        if (d.spans.empty() && d.code.empty() &&
            (d.message.starts_with("aborting due to") || d.message.find("warning emitted") != std::string::npos ||
             d.message.find("warnings emitted") != std::string::npos))
            continue;
        collect_children(m, d.children);
        r.diagnostics.push_back(std::move(d));
    }
    r.raw_output += stderr_text;
    return r;
}

BuildResult build(const std::filesystem::path& workspace, const Toolchain& toolchain) {
    std::vector<std::string> argv{toolchain.cargo, "build", "--message-format=json"};
    if (toolchain.offline) argv.push_back("--offline");
    argv.insert(argv.end(), toolchain.extra_args.begin(), toolchain.extra_args.end());
    ProcessOptions opts;
    opts.cwd = workspace;
    auto res = run_process(argv, opts);
    return parse_build_output(res.out, res.err, res.exit_code);
}

TestResult parse_test_output(const std::string& output, bool built) {
    TestResult r;
    r.built = built;
    r.output = output;
    static const std::regex summary(R"(test result: \w+\. (\d+) passed; (\d+) failed; (\d+) ignored)");
    for (std::sregex_iterator it(output.begin(), output.end(), summary), end; it != end; ++it) {
        r.parsed = true;
        r.passed += std::stoi((*it)[1]);
        r.failed += std::stoi((*it)[2]);
        r.ignored += std::stoi((*it)[3]);
    }
    return r;
}

TestResult test(const std::filesystem::path& workspace, const Toolchain& toolchain) {
    auto argv_for = [&](bool no_run) {
        std::vector<std::string> argv{toolchain.cargo, "test"};
        if (no_run) argv.push_back("--no-run");
        if (toolchain.offline) argv.push_back("--offline");
        argv.insert(argv.end(), toolchain.extra_args.begin(), toolchain.extra_args.end());
        return argv;
    };
    ProcessOptions opts;
    opts.cwd = workspace;
    auto compiled = run_process(argv_for(true), opts);
    if (!compiled.ok()) return parse_test_output(compiled.out + compiled.err, false);
    auto res = run_process(argv_for(false), opts);
    return parse_test_output(res.out + res.err, true);
}

}  // namespace rsmig::cargo
