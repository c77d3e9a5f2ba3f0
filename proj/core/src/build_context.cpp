#include "rsmig/build_context.hpp"

#include "rsmig/support/files.hpp"
#include "rsmig/support/process.hpp"
#include "rsmig/support/text.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace rsmig::build {

using nlohmann::json;

fs::path CompileCommand::absolute_source() const {
    if (source_file.is_absolute()) return source_file.lexically_normal();
    return (directory / source_file).lexically_normal();
}

BuildTraceError::BuildTraceError(std::string message, std::optional<size_t> index, std::string field)
    : Error(index ? "build trace entry " + std::to_string(*index) + (field.empty() ? "" : " field '" + field + "'") +
                        ": " + message
                  : message),
      index_(index),
      field_(std::move(field)) {}

std::vector<CompileCommand> load_compile_commands(const fs::path& path, const LoadOptions& options) {
    if (!fs::exists(path)) throw BuildTraceError("build trace not found: " + path.string());
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw BuildTraceError(std::string("malformed build trace: ") + e.what());
    }
    if (!doc.is_array()) throw BuildTraceError("build trace must be a JSON array");

    const fs::path base = fs::absolute(path).parent_path();
    std::vector<CompileCommand> out;
    for (size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        if (!e.is_object()) throw BuildTraceError("entry is not an object", i);
        if (!e.contains("directory") || !e["directory"].is_string()) throw BuildTraceError("missing or not a string", i, "directory");
        if (!e.contains("file") || !e["file"].is_string()) throw BuildTraceError("missing or not a string", i, "file");

        CompileCommand cmd;
        cmd.directory = e["directory"].get<std::string>();
        if (cmd.directory.is_relative()) cmd.directory = base / cmd.directory;
        cmd.source_file = e["file"].get<std::string>();
        if (e.contains("arguments")) {
            if (!e["arguments"].is_array()) throw BuildTraceError("must be an array of strings", i, "arguments");
            for (const auto& a : e["arguments"]) {
                if (!a.is_string()) throw BuildTraceError("must be an array of strings", i, "arguments");
                cmd.arguments.push_back(a.get<std::string>());
            }
        } else if (e.contains("command")) {
            if (!e["command"].is_string()) throw BuildTraceError("must be a string", i, "command");
            cmd.arguments = text::shell_split(e["command"].get<std::string>());
        } else {
            throw BuildTraceError("neither 'command' nor 'arguments' present", i, "command");
        }
        if (cmd.arguments.empty()) throw BuildTraceError("empty compiler invocation", i, "arguments");
        if (e.contains("output")) {
            if (!e["output"].is_string()) throw BuildTraceError("must be a string", i, "output");
            cmd.output_file = e["output"].get<std::string>();
        }
        cmd = normalize(std::move(cmd));
        if (!fs::exists(cmd.absolute_source())) {
            if (!options.skip_missing_sources)
                throw BuildTraceError("source file does not exist: " + cmd.absolute_source().string(), i, "file");
            spdlog::warn("build trace entry {}: skipping missing source {}", i, cmd.absolute_source().string());
            continue;
        }
        out.push_back(std::move(cmd));
    }
    return out;
}

CompileCommand normalize(CompileCommand cmd) {
    cmd.directory = fs::absolute(cmd.directory).lexically_normal();
    if (cmd.directory.has_relative_path() && cmd.directory.filename().empty()) cmd.directory = cmd.directory.parent_path();
    cmd.source_file = cmd.absolute_source();
    if (cmd.output_file && cmd.output_file->is_relative())
        cmd.output_file = (cmd.directory / *cmd.output_file).lexically_normal();
    return cmd;
}

bool TranslationUnitContext::has_define(std::string_view name) const {
    return std::any_of(defines.begin(), defines.end(), [&](const Define& d) { return d.name == name; });
}

namespace {

constexpr int kMaxResponseDepth = 8;

void expand_response_files(const fs::path& dir, const std::vector<std::string>& in, std::vector<std::string>& out,
                           int depth) {
    for (const auto& arg : in) {
        if (arg.size() > 1 && arg[0] == '@' && depth < kMaxResponseDepth) {
            fs::path rsp = arg.substr(1);
            if (rsp.is_relative()) rsp = dir / rsp;
            if (fs::exists(rsp)) {
                expand_response_files(dir, text::shell_split(read_file(rsp)), out, depth + 1);
                continue;
            }
        }
        out.push_back(arg);
    }
}

Define parse_define(std::string_view body) {
    auto eq = body.find('=');
    if (eq == std::string_view::npos) return {std::string(body), std::nullopt};
    return {std::string(body.substr(0, eq)), std::string(body.substr(eq + 1))};
}

// Flags whose value is the following argv element when not attached.
bool takes_separate_value(std::string_view flag) {
    static constexpr std::string_view kFlags[] = {"-o", "-MF", "-MT", "-MQ", "-x", "-imacros", "-idirafter",
                                                  "-target", "--sysroot", "-isysroot", "-arch", "-Xclang"};
    return std::find(std::begin(kFlags), std::end(kFlags), flag) != std::end(kFlags);
}

bool affects_preprocessing(std::string_view flag) {
    if (flag.starts_with("-M")) return false;
    return flag.starts_with("-m") || flag.starts_with("-f") || flag.starts_with("-O") || flag == "-ansi" ||
           flag == "-pthread" || flag.starts_with("--sysroot=") || flag.starts_with("-funsigned-char");
}

}  // namespace

TranslationUnitContext derive_unit_context(const CompileCommand& cmd) {
    TranslationUnitContext ctx;
    ctx.command = cmd;
    std::vector<std::string> args;
    expand_response_files(cmd.directory, cmd.arguments, args, 0);

    auto value_of = [&](size_t& i, std::string_view flag) -> std::optional<std::string> {
        const std::string& a = args[i];
        if (a.size() > flag.size()) return a.substr(flag.size());
        if (i + 1 < args.size()) return args[++i];
        return std::nullopt;
    };
    auto remove_define = [&](const std::string& name) {
        std::erase_if(ctx.defines, [&](const Define& d) { return d.name == name; });
    };

    const fs::path source = cmd.absolute_source();
    for (size_t i = 1; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.starts_with("-D")) {
            if (auto v = value_of(i, "-D")) {
                Define d = parse_define(*v);
                remove_define(d.name);
                std::erase(ctx.undefines, d.name);
                ctx.defines.push_back(std::move(d));
            }
        } else if (a.starts_with("-U")) {
            if (auto v = value_of(i, "-U")) {
                remove_define(*v);
                if (std::find(ctx.undefines.begin(), ctx.undefines.end(), *v) == ctx.undefines.end())
                    ctx.undefines.push_back(*v);
            }
        } else if (a.starts_with("-isystem")) {
            if (auto v = value_of(i, "-isystem")) {
                ctx.include_paths.emplace_back(*v);
                ctx.system_include_paths.emplace_back(*v);
            }
        } else if (a.starts_with("-iquote")) {
            if (auto v = value_of(i, "-iquote")) ctx.quote_include_paths.emplace_back(*v);
        } else if (a.starts_with("-I")) {
            if (auto v = value_of(i, "-I")) ctx.include_paths.emplace_back(*v);
        } else if (a == "-include" || a.starts_with("-include=")) {
            if (a == "-include" && i + 1 < args.size()) ctx.forced_includes.emplace_back(args[++i]);
            else if (a.size() > 9) ctx.forced_includes.emplace_back(a.substr(9));
        } else if (a.starts_with("-std=")) {
            ctx.language_standard = a.substr(5);
        } else if (takes_separate_value(a)) {
            ctx.ignored_flags.push_back(a);
            if (i + 1 < args.size()) ctx.ignored_flags.push_back(args[++i]);
        } else if (affects_preprocessing(a)) {
            ctx.preprocessor_flags.push_back(a);
        } else if (!a.starts_with("-")) {
            fs::path p = a;
            if (p.is_relative()) p = cmd.directory / p;
            if (p.lexically_normal() != source) ctx.ignored_flags.push_back(a);
        } else {
            ctx.ignored_flags.push_back(a);
        }
    }
    return ctx;
}

PreprocessError::PreprocessError(Kind kind, std::string diagnostics)
    : Error(std::string(kind == Kind::UnresolvedInclude ? "unresolvable include" : "preprocessor failed") + ":\n" +
            diagnostics),
      kind_(kind),
      diagnostics_(std::move(diagnostics)) {}

namespace {

std::vector<std::string> preprocessor_argv(const TranslationUnitContext& ctx, const PreprocessorConfig& tc) {
    std::vector<std::string> argv{tc.executable, "-E"};
    argv.insert(argv.end(), tc.base_flags.begin(), tc.base_flags.end());
    argv.insert(argv.end(), ctx.preprocessor_flags.begin(), ctx.preprocessor_flags.end());
    if (ctx.language_standard) argv.push_back("-std=" + *ctx.language_standard);
    for (const auto& u : ctx.undefines) argv.push_back("-U" + u);
    for (const auto& d : ctx.defines) argv.push_back("-D" + d.name + (d.value ? "=" + *d.value : ""));
    std::vector<fs::path> system(ctx.system_include_paths);
    for (const auto& p : ctx.quote_include_paths) argv.push_back("-iquote" + p.string());
    for (const auto& p : ctx.include_paths) {
        bool is_system = std::find(system.begin(), system.end(), p) != system.end();
        argv.push_back(is_system ? "-isystem" : "-I");
        argv.push_back(p.string());
    }
    for (const auto& f : ctx.forced_includes) {
        argv.push_back("-include");
        argv.push_back(f.string());
    }
    argv.push_back(ctx.command.absolute_source().string());
    return argv;
}

bool is_line_marker(std::string_view line, int& number, std::string& file, std::vector<int>& flags) {
    if (line.empty() || line[0] != '#') return false;
    size_t i = 1;
    while (i < line.size() && line[i] == ' ') ++i;
    if (line.substr(i).starts_with("line")) i += 4;
    while (i < line.size() && line[i] == ' ') ++i;
    if (i >= line.size() || !std::isdigit(static_cast<unsigned char>(line[i]))) return false;
    number = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) number = number * 10 + (line[i++] - '0');
    while (i < line.size() && line[i] == ' ') ++i;
    file.clear();
    if (i < line.size() && line[i] == '"') {
        for (++i; i < line.size() && line[i] != '"'; ++i) {
            if (line[i] == '\\' && i + 1 < line.size()) ++i;
            file.push_back(line[i]);
        }
        ++i;
    }
    flags.clear();
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        int f = 0;
        bool any = false;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
            f = f * 10 + (line[i++] - '0');
            any = true;
        }
        if (!any) break;
        flags.push_back(f);
    }
    return true;
}

}  // namespace

PreprocessedUnit parse_preprocessed_output(const TranslationUnitContext& ctx, std::string_view raw) {
    PreprocessedUnit unit;
    unit.origin = ctx;
    std::string file = ctx.command.absolute_source().string();
    int line = 1;
    bool system = false;
    int number = 0;
    std::string marker_file;
    std::vector<int> flags;
    size_t dropped_directives = 0;
    for (const auto& l : text::split_lines(raw)) {
        if (is_line_marker(l, number, marker_file, flags)) {
            if (!marker_file.empty()) file = marker_file;
            line = number;
            system = std::find(flags.begin(), flags.end(), 3) != flags.end();
            unit.text += l;
            unit.text += '\n';
            unit.line_map.emplace_back(std::nullopt);
            continue;
        }
        const bool pseudo = file.starts_with("<");
        const bool directive = !text::trim(l).empty() && text::trim(l)[0] == '#';
        if (directive) ++dropped_directives;
        if (!pseudo && !directive) {
            unit.text += l;
            unit.text += '\n';
            unit.line_map.emplace_back(LineOrigin{file, line, system});
        }
        ++line;
    }
    if (dropped_directives)
        unit.notes.push_back("dropped " + std::to_string(dropped_directives) + " residual directive line(s) (#pragma/#ident)");
    return unit;
}

PreprocessedUnit preprocess_unit(const TranslationUnitContext& ctx, const PreprocessorConfig& toolchain) {
    auto argv = preprocessor_argv(ctx, toolchain);
    ProcessOptions opts;
    opts.cwd = ctx.command.directory;
    auto res = run_process(argv, opts);
    if (!res.ok()) {
        bool missing_include = res.err.find("No such file or directory") != std::string::npos &&
                               res.err.find("#include") != std::string::npos;
        if (res.err.find("fatal error:") != std::string::npos && res.err.find("No such file") != std::string::npos)
            missing_include = true;
        throw PreprocessError(missing_include ? PreprocessError::Kind::UnresolvedInclude
                                              : PreprocessError::Kind::ExitFailure,
                              res.err);
    }
    PreprocessedUnit unit = parse_preprocessed_output(ctx, res.out);

    // Second pass: the macro table exactly as the real build leaves it.
    argv.insert(argv.begin() + 2, "-dM");
    auto macros = run_process(argv, opts);
    if (macros.ok()) {
        for (const auto& l : text::split_lines(macros.out)) {
            if (!l.starts_with("#define ")) continue;
            std::string_view rest = std::string_view(l).substr(8);
            size_t n = 0;
            while (n < rest.size() && text::is_identifier_char(rest[n])) ++n;
            std::string name(rest.substr(0, n));
            std::string_view after = rest.substr(n);
            if (!after.empty() && after[0] == '(') {
                auto close = after.find(')');
                unit.active_macros[name + "()"] = text::trim_copy(after.substr(close == std::string_view::npos ? after.size() : close + 1));
                continue;
            }
            unit.active_macros[name] = text::trim_copy(after);
        }
    }
    return unit;
}

}  // namespace rsmig::build
