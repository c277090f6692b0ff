#pragma once

// Compile/syntax checks of generated snippets through external toolchain
// commands. Snippets are written to a private temp directory and checked,
// never executed.

#include "capecgen/concurrency.hpp"
#include "capecgen/errors.hpp"
#include "capecgen/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace capecgen {

struct ToolchainCheck {
    std::string language;
    std::string command_template;  // "{file}" exactly once; "{dir}" optional
    double timeout_s = 30.0;
    std::string file_extension;    // with leading dot
    std::optional<std::string> wrapper;  // "{code}" template, off unless set

    void validate() const {
        auto first = command_template.find("{file}");
        if (first == std::string::npos || command_template.find("{file}", first + 1) != std::string::npos) {
            throw InputError("check command for " + language + " must contain {file} exactly once");
        }
        if (wrapper && wrapper->find("{code}") == std::string::npos) {
            throw InputError("wrapper template for " + language + " lacks {code}");
        }
        if (!(timeout_s > 0)) throw InputError("check timeout must be positive");
    }
};

inline std::vector<ToolchainCheck> default_checks() {
    return {{"Python", "python3 -m py_compile {file}", 30.0, ".py", std::nullopt},
            {"JavaScript", "node --check {file}", 30.0, ".js", std::nullopt},
            {"Java", "javac -d {dir} {file}", 60.0, ".java", std::nullopt}};
}

struct CheckResult {
    bool passed = false;
    bool timed_out = false;
    int exit_code = -1;
    std::string diagnostics;  // excerpt of stdout+stderr
    std::string command;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    out += "'";
    return out;
}

inline void replace_all(std::string& s, std::string_view from, const std::string& to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

inline bool on_path(const std::string& program) {
    if (program.find('/') != std::string::npos) return ::access(program.c_str(), X_OK) == 0;
    const char* path = std::getenv("PATH");
    if (!path) return false;
    std::string_view p = path;
    while (!p.empty()) {
        auto colon = p.find(':');
        auto dir = p.substr(0, colon);
        std::string candidate = std::string(dir.empty() ? "." : dir) + "/" + program;
        if (::access(candidate.c_str(), X_OK) == 0) return true;
        if (colon == std::string_view::npos) break;
        p.remove_prefix(colon + 1);
    }
    return false;
}

inline std::string first_word(const std::string& cmd) {
    auto b = cmd.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    auto e = cmd.find_first_of(" \t", b);
    return cmd.substr(b, e == std::string::npos ? std::string::npos : e - b);
}

class TempDir {
public:
    TempDir() {
        auto tmpl = (std::filesystem::temp_directory_path() / "capecgen-check-XXXXXX").string();
        if (!::mkdtemp(tmpl.data())) throw Error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

// javac insists that a public top-level type lives in <Name>.java.
inline std::string snippet_stem(const std::string& code, const std::string& extension) {
    if (extension == ".java") {
        static const std::regex public_type(
            R"(public\s+(?:(?:final|abstract|sealed|static)\s+)*(?:class|interface|enum|record)\s+([A-Za-z_$][A-Za-z0-9_$]*))");
        std::smatch m;
        if (std::regex_search(code, m, public_type)) return m[1].str();
    }
    return "snippet";
}

struct ProcessOutcome {
    bool timed_out = false;
    int exit_code = -1;
};

inline ProcessOutcome run_shell(const std::string& command, const std::filesystem::path& cwd,
                                const std::filesystem::path& log, double timeout_s) {
    pid_t pid = ::fork();
    if (pid < 0) throw Error("fork failed");
    if (pid == 0) {
        ::setpgid(0, 0);
        int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
        if (fd >= 0) {
            ::dup2(fd, STDOUT_FILENO);
            ::dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) ::dup2(devnull, STDIN_FILENO);
        if (::chdir(cwd.c_str()) != 0) ::_exit(126);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    int status = 0;
    while (true) {
        pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw Error("waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(-pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            return {true, -1};
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (WIFEXITED(status)) return {false, WEXITSTATUS(status)};
    return {false, 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0)};
}

inline std::string excerpt(std::string s, std::size_t limit = 2000) {
    if (s.size() > limit) {
        s.resize(limit);
        s += "...";
    }
    return s;
}

}  // namespace detail

// Pass iff the command exits 0 within the timeout. A missing toolchain
// raises EnvironmentError instead of failing the snippet.
inline CheckResult check_snippet(const GenerationRecord& record, const ToolchainCheck& check) {
    check.validate();
    auto program = detail::first_word(check.command_template);
    if (program.empty() || !detail::on_path(program)) {
        throw EnvironmentError("toolchain command '" + program + "' for " + check.language + " not found");
    }
    detail::TempDir tmp;
    std::string code = record.code_snippet;
    if (check.wrapper) {
        std::string wrapped = *check.wrapper;
        detail::replace_all(wrapped, "{code}", code);
        code = std::move(wrapped);
    }
    auto file = tmp.path() / (detail::snippet_stem(code, check.file_extension) + check.file_extension);
    write_file(file, code);
    std::string cmd = check.command_template;
    detail::replace_all(cmd, "{file}", detail::shell_quote(file.string()));
    detail::replace_all(cmd, "{dir}", detail::shell_quote(tmp.path().string()));

    auto log = tmp.path() / ".check.log";
    auto outcome = detail::run_shell(cmd, tmp.path(), log, check.timeout_s);
    CheckResult res;
    res.command = cmd;
    res.timed_out = outcome.timed_out;
    res.exit_code = outcome.exit_code;
    std::error_code ec;
    if (std::filesystem::exists(log, ec)) res.diagnostics = detail::excerpt(read_file(log));
    if (outcome.exit_code == 127 || outcome.exit_code == 126) {
        throw EnvironmentError("toolchain for " + check.language + " could not run (exit " +
                               std::to_string(outcome.exit_code) + "): " + res.diagnostics);
    }
    res.passed = !outcome.timed_out && outcome.exit_code == 0;
    if (res.timed_out) res.diagnostics = "timeout after " + std::to_string(check.timeout_s) + "s\n" + res.diagnostics;
    return res;
}

// Seeded uniform sample of `n` ids without replacement. Uses mt19937_64
// output directly (rejection sampling) so the draw does not depend on the
// standard library's distribution implementations.
inline std::vector<CapecId> sample_ids(std::vector<CapecId> ids, std::size_t n, std::uint64_t seed) {
    std::sort(ids.begin(), ids.end());
    if (n > ids.size()) {
        throw InputError("sample size " + std::to_string(n) + " exceeds " + std::to_string(ids.size()) + " records");
    }
    std::mt19937_64 rng(seed);
    auto bounded = [&](std::uint64_t bound) {
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = rng();
        } while (x >= limit);
        return x % bound;
    };
    for (std::size_t i = 0; i < n; ++i) {
        auto j = i + static_cast<std::size_t>(bounded(ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(n);
    std::sort(ids.begin(), ids.end());
    return ids;
}

struct CompileFailure {
    CapecId capec_id = 0;
    bool timed_out = false;
    std::string diagnostics;
};

struct CompileCell {
    std::size_t checked = 0;
    std::size_t passed = 0;
    std::size_t timeouts = 0;
    std::vector<CapecId> sample;
    std::vector<CompileFailure> failures;
    std::optional<std::string> environment_error;  // set when the toolchain is unusable
    std::string command_template;
    bool wrapped = false;
};

struct CompileReport {
    std::vector<std::string> languages;                                   // rows
    std::vector<std::string> datasets;                                    // columns
    std::map<std::pair<std::string, std::string>, CompileCell> cells;     // (language, dataset)
    std::uint64_t seed = 0;
    std::optional<std::size_t> sample_size;
};

struct SampleSpec {
    std::optional<std::size_t> size;  // nullopt = every record
};

// Checks a seeded sample of each (dataset, language) present in both the
// datasets and `checks`.
inline CompileReport compile_report(const std::vector<Dataset>& datasets, SampleSpec sample,
                                    const std::vector<ToolchainCheck>& checks, std::uint64_t seed,
                                    std::size_t workers = 4) {
    CompileReport rep;
    rep.seed = seed;
    rep.sample_size = sample.size;
    for (const auto& c : checks) c.validate();
    for (const auto& d : datasets) {
        if (d.records.empty()) throw InputError("dataset " + d.dataset_id + " has no records");
        rep.datasets.push_back(d.dataset_id);
    }
    for (const auto& c : checks) {
        bool any = std::any_of(datasets.begin(), datasets.end(), [&](const Dataset& d) { return d.languages().count(c.language); });
        if (any) rep.languages.push_back(c.language);
    }

    struct Job {
        const GenerationRecord* record;
        const ToolchainCheck* check;
        CompileCell* cell;
    };
    std::vector<Job> jobs;
    for (const auto& d : datasets) {
        for (const auto& c : checks) {
            auto by = d.by_capec(c.language);
            if (by.empty()) continue;
            auto& cell = rep.cells[{c.language, d.dataset_id}];
            cell.command_template = c.command_template;
            cell.wrapped = c.wrapper.has_value();
            std::vector<CapecId> ids;
            for (const auto& [id, r] : by) ids.push_back(id);
            cell.sample = sample_ids(ids, sample.size.value_or(ids.size()), seed);
            for (auto id : cell.sample) jobs.push_back({by.at(id), &c, &cell});
        }
    }

    std::mutex mu;
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const auto& job = jobs[i];
        {
            std::lock_guard lock(mu);
            if (job.cell->environment_error) return;
        }
        try {
            auto r = check_snippet(*job.record, *job.check);
            std::lock_guard lock(mu);
            ++job.cell->checked;
            if (r.passed) {
                ++job.cell->passed;
            } else {
                if (r.timed_out) ++job.cell->timeouts;
                job.cell->failures.push_back({job.record->capec_id, r.timed_out, r.diagnostics});
            }
        } catch (const EnvironmentError& e) {
            std::lock_guard lock(mu);
            job.cell->environment_error = e.what();
        }
    });
    for (auto& [key, cell] : rep.cells) {
        if (cell.environment_error) {
            cell.checked = cell.passed = cell.timeouts = 0;
            cell.failures.clear();
        }
        std::sort(cell.failures.begin(), cell.failures.end(),
                  [](const auto& a, const auto& b) { return a.capec_id < b.capec_id; });
    }
    return rep;
}

inline std::string compile_table(const CompileReport& rep) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "Language";
    for (const auto& d : rep.datasets) os << " | " << std::setw(14) << d;
    os << '\n';
    for (const auto& lang : rep.languages) {
        os << std::left << std::setw(12) << lang;
        for (const auto& d : rep.datasets) {
            auto it = rep.cells.find({lang, d});
            std::string cell = "-";
            if (it != rep.cells.end()) {
                cell = it->second.environment_error ? std::string("env-error")
                                                    : std::to_string(it->second.passed) + "/" +
                                                          std::to_string(it->second.checked);
            }
            os << " | " << std::setw(14) << cell;
        }
        os << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const CompileReport& rep) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [key, c] : rep.cells) {
        nlohmann::json failures = nlohmann::json::array();
        for (const auto& f : c.failures) {
            failures.push_back({{"capec_id", f.capec_id}, {"timed_out", f.timed_out}, {"diagnostics", f.diagnostics}});
        }
        nlohmann::json cell{{"language", key.first},
                            {"dataset_id", key.second},
                            {"checked", c.checked},
                            {"passed", c.passed},
                            {"timeouts", c.timeouts},
                            {"sample", c.sample},
                            {"failures", std::move(failures)},
                            {"command_template", c.command_template},
                            {"wrapped", c.wrapped}};
        cell["environment_error"] = c.environment_error ? nlohmann::json(*c.environment_error) : nlohmann::json();
        cells.push_back(std::move(cell));
    }
    nlohmann::json j{{"seed", rep.seed}, {"languages", rep.languages}, {"datasets", rep.datasets}, {"cells", cells}};
    j["sample_size"] = rep.sample_size ? nlohmann::json(*rep.sample_size) : nlohmann::json("all");
    return j;
}

}  // namespace capecgen
