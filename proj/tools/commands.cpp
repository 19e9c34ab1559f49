#include "commands.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <pthread.h>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dlot/analytics.hpp"
#include "dlot/config.hpp"
#include "dlot/error.hpp"
#include "dlot/export.hpp"
#include "dlot/journal.hpp"
#include "dlot/merge.hpp"
#include "dlot/service/server.hpp"
#include "dlot/service/session_host.hpp"

namespace dlot::cli {

namespace {

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_output(const std::string& path, const std::string& bytes, std::ostream& out) {
    if (path.empty() || path == "-") {
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        return;
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw DomainError("cannot open " + path + " for writing");
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw DomainError("cannot write " + path);
}

std::string export_bytes(const SessionState& state, const std::string& format) {
    const auto rows = to_rows(state);
    if (format == "xlsx") return write_xlsx(state.config().scheme, rows);
    return write_csv(state.config().scheme, rows);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fixed(double v, int digits = 6) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

Json report_json(const JournalReport& r) {
    Json doc;
    doc["entries_read"] = r.entries_read;
    doc["truncated_tail"] = r.truncated_tail;
    doc["first_bad_line"] = r.first_bad_line ? Json(*r.first_bad_line) : Json(nullptr);
    if (!r.error.empty()) doc["error"] = r.error;
    return doc;
}

Json init_document() {
    Json doc;
    doc["_comment"] =
        "Example session config. Keys starting with '_' are ignored. scheduling_mode is one of "
        "single_subject, round_robin, free_select; selection is single (radio) or multiple (checklist).";
    const Json body = config_to_json(example_config());
    for (const auto& [key, value] : body.items()) doc[key] = value;
    doc["timer"]["_comment"] = "Prompt interval in milliseconds (minimum 500, default 10000).";
    return doc;
}

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
    const auto result = validate_config_text(read_file(path), system_now());
    if (!result.ok()) {
        for (const auto& v : result.violations) err << path << ": " << v.path << ": " << v.message << "\n";
        err << result.violations.size() << " violation(s)\n";
        return kExitDomainError;
    }
    out << "ok: session '" << result.config->session_id << "' (" << result.config->roster.size() << " subjects, "
        << result.config->scheme.groups.size() << " groups, " << result.config->timer.interval.count()
        << " ms interval)\n";
    return kExitOk;
}

int cmd_verify(const std::string& path, std::ostream& out, std::ostream& err) {
    const JournalReport report = verify(read_file(path));
    out << report_json(report).dump(2) << "\n";
    if (report.first_bad_line) {
        err << path << ": " << report.error << "\n";
        return kExitDomainError;
    }
    if (report.truncated_tail) err << path << ": torn final record dropped\n";
    return kExitOk;
}

int cmd_replay(const std::string& path, const std::string& output, std::ostream& out) {
    const ReplayResult r = replay(read_file(path));
    Json doc;
    doc["report"] = report_json(r.report);
    if (r.state) {
        const SessionState& s = *r.state;
        Json observations = Json::array();
        for (const auto& obs : s.observations()) observations.push_back(observation_to_json(obs, s.config().scheme));
        doc["session"] = {{"session_id", s.config().session_id},
                          {"phase", to_string(s.phase())},
                          {"prompts_issued", s.prompts_issued()},
                          {"started_at", s.started_at() ? Json(format_iso8601(*s.started_at())) : Json(nullptr)},
                          {"ended_at", s.ended_at() ? Json(format_iso8601(*s.ended_at())) : Json(nullptr)},
                          {"observations", std::move(observations)}};
    } else {
        doc["session"] = nullptr;
    }
    write_output(output, doc.dump(2) + "\n", out);
    return kExitOk;
}

int cmd_export(const std::string& path, const std::string& format, const std::string& output, std::ostream& out) {
    const ReplayResult r = replay(read_file(path));
    if (!r.state) throw DomainError(path + " holds no config snapshot");
    write_output(output, export_bytes(*r.state, format), out);
    return kExitOk;
}

int cmd_merge(const std::vector<std::string>& paths, const std::string& format, const std::string& output,
              const std::string& report_path, std::ostream& out, std::ostream& err) {
    std::vector<std::filesystem::path> files(paths.begin(), paths.end());
    const MergeResult merged = merge_journal_files(files);
    const std::string bytes = format == "journal" ? merged_journal_bytes(merged.state) : export_bytes(merged.state, format);
    write_output(output, bytes, out);
    const Json report = merge_report_json(merged.report);
    if (!report_path.empty()) write_output(report_path, report.dump(2) + "\n", out);
    err << "merged " << merged.report.rows_merged << " observation(s) from " << paths.size() << " journal(s), "
        << merged.report.conflicts.size() << " conflict(s)\n";
    for (const auto& c : merged.report.conflicts) {
        err << "conflict: observer=" << c.key.observer_id << " prompt=" << c.key.prompt_index
            << " subject=" << c.key.subject_id << " in " << c.first_source << " and " << c.second_source << "\n";
    }
    return merged.report.conflicts.empty() ? kExitOk : kExitDomainError;
}

int cmd_irr(const std::string& path, const std::string& group, const std::string& raters_arg,
            const std::string& method, std::ostream& out, std::ostream& err) {
    const auto csv = parse_csv(read_file(path));
    std::vector<std::string> raters = split_list(raters_arg);
    if (raters.empty() && !csv.empty()) {
        const auto& header = csv.front();
        const auto col = std::find(header.begin(), header.end(), "observer_id");
        if (col != header.end()) {
            std::set<std::string> seen;
            for (std::size_t r = 1; r < csv.size(); ++r) {
                const auto i = static_cast<std::size_t>(col - header.begin());
                if (i < csv[r].size()) seen.insert(csv[r][i]);
            }
            raters.assign(seen.begin(), seen.end());
        }
    }
    const RatingsTable table = align_csv(csv, group, raters);
    AgreementResult result;
    if (method == "percent") {
        result = percent_agreement(table);
    } else if (method == "cohen") {
        result = cohen_kappa(table);
    } else {
        result = fleiss_kappa(table);
    }
    out << "method: " << to_string(result.statistic) << "\n";
    out << "group: " << group << "\n";
    out << "raters: ";
    for (std::size_t i = 0; i < raters.size(); ++i) out << (i ? "," : "") << raters[i];
    out << "\n";
    out << "items: " << result.n_items << "\n";
    out << "dropped: " << table.dropped << "\n";
    out << "observed: " << fixed(result.observed) << "\n";
    out << "chance: " << fixed(result.chance) << "\n";
    out << (method == "percent" ? "agreement: " : "kappa: ") << fixed(result.value) << "\n";
    if (!result.confusion.empty()) {
        out << "confusion (rows " << raters[0] << ", columns " << raters[1] << "):\n";
        for (std::size_t r = 0; r < result.categories.size(); ++r) {
            out << "  " << result.categories[r] << ":";
            for (auto count : result.confusion[r]) out << " " << count;
            out << "\n";
        }
    }
    if (table.dropped) err << table.dropped << " item(s) dropped for missing ratings\n";
    return kExitOk;
}

int cmd_sus(const std::string& path, std::ostream& out) {
    const auto csv = parse_csv(read_file(path));
    std::vector<SusResponse> responses;
    for (std::size_t r = 0; r < csv.size(); ++r) {
        const auto& row = csv[r];
        if (row.size() == 1 && row[0].empty()) continue;
        std::vector<int> answers;
        bool numeric = true;
        for (const auto& cell : row) {
            try {
                std::size_t used = 0;
                answers.push_back(std::stoi(cell, &used));
                if (used != cell.size()) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (r == 0) continue;  // header row
            throw DomainError(path + ": row " + std::to_string(r + 1) + " is not numeric");
        }
        try {
            responses.push_back(make_sus_response(answers));
        } catch (const Error& e) {
            throw DomainError(path + ": row " + std::to_string(r + 1) + ": " + e.what());
        }
    }
    for (std::size_t i = 0; i < responses.size(); ++i) {
        out << "respondent " << (i + 1) << ": " << fixed(sus_score(responses[i]), 1) << "\n";
    }
    out << "mean: " << fixed(sus_mean(responses), 2) << " (n=" << responses.size() << ")\n";
    return kExitOk;
}

int cmd_serve(const std::string& addr_flag, const std::string& data_dir, const std::string& ui_dir,
              std::size_t threads, std::ostream& out, std::ostream& err) {
    std::string addr = addr_flag;
    if (addr.empty()) {
        const char* env = std::getenv("DLOT_ADDR");
        addr = env && *env ? env : "127.0.0.1:8080";
    }
    const auto [host, port] = service::parse_address(addr);

    // Block termination signals before any thread starts so only sigwait sees them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::SessionRegistry registry(data_dir, system_now);
    std::vector<std::string> errors;
    const std::size_t loaded = registry.recover_all(&errors);
    for (const auto& e : errors) err << "recovery failed: " << e << "\n";

    service::ServerOptions options;
    options.address = host;
    options.port = port;
    options.ui_dir = ui_dir;
    options.threads = threads;
    service::Server server(registry, options);
    server.start();
    out << "dlot serving on " << host << ":" << server.port() << " (data " << data_dir << ", " << loaded
        << " session(s) recovered)" << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    err << "signal " << sig << ", shutting down\n";
    server.stop();
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"dlot: interval-prompted observation logging, journaling, export and agreement statistics", "dlot"};
    app.require_subcommand(1);

    std::string output;
    std::string format = "csv";
    std::string path;

    auto* init = app.add_subcommand("init", "Write an example session config");
    init->add_option("-o,--output", output, "Output file (default stdout)");

    auto* validate = app.add_subcommand("validate", "Check a session config and list every violation");
    validate->add_option("config", path, "Config JSON file")->required();

    std::string addr;
    std::string data_dir = "dlot-data";
    std::string ui_dir;
    std::size_t threads = 4;
    auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket observation server");
    serve->add_option("--addr", addr, "host:port to bind (default $DLOT_ADDR or 127.0.0.1:8080)");
    serve->add_option("--data-dir", data_dir, "Directory holding session journals")->capture_default_str();
    serve->add_option("--ui-dir", ui_dir, "Directory of observer UI assets served at /");
    serve->add_option("--threads", threads, "I/O threads")->capture_default_str()->check(CLI::Range(1, 64));

    auto* verify_cmd = app.add_subcommand("verify", "Check a journal's framing, checksums and sequence");
    verify_cmd->add_option("journal", path, "Journal file (.dlotj)")->required();

    auto* replay_cmd = app.add_subcommand("replay", "Rebuild a session from its journal and print it as JSON");
    replay_cmd->add_option("journal", path, "Journal file (.dlotj)")->required();
    replay_cmd->add_option("-o,--output", output, "Output file (default stdout)");

    auto* export_cmd = app.add_subcommand("export", "Export a journal as CSV or XLSX");
    export_cmd->add_option("journal", path, "Journal file (.dlotj)")->required();
    export_cmd->add_option("--format", format, "csv or xlsx")->check(CLI::IsMember({"csv", "xlsx"}))->capture_default_str();
    export_cmd->add_option("-o,--output", output, "Output file (default stdout)");

    std::vector<std::string> journals;
    std::string merge_format = "journal";
    std::string report_path;
    auto* merge = app.add_subcommand("merge", "Merge journals of the same session recorded separately");
    merge->add_option("journals", journals, "Journal files")->required()->expected(1, -1);
    merge->add_option("--format", merge_format, "journal, csv or xlsx")
        ->check(CLI::IsMember({"journal", "csv", "xlsx"}))
        ->capture_default_str();
    merge->add_option("-o,--output", output, "Output file (default stdout)");
    merge->add_option("--report", report_path, "Write the merge report as JSON to this file");

    std::string group;
    std::string raters;
    std::string method = "cohen";
    auto* irr = app.add_subcommand("irr", "Inter-rater agreement from an exported CSV");
    irr->add_option("csv", path, "CSV export")->required();
    irr->add_option("--group", group, "Single-selection category group")->required();
    irr->add_option("--raters", raters, "Comma-separated observer ids (default: all)");
    irr->add_option("--method", method, "percent, cohen or fleiss")
        ->check(CLI::IsMember({"percent", "cohen", "fleiss"}))
        ->capture_default_str();

    auto* sus = app.add_subcommand("sus", "Score System Usability Scale responses (10 Likert columns per row)");
    sus->add_option("csv", path, "Responses CSV")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "dlot: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (*init) {
            write_output(output, init_document().dump(2) + "\n", out);
            return kExitOk;
        }
        if (*validate) return cmd_validate(path, out, err);
        if (*serve) return cmd_serve(addr, data_dir, ui_dir, threads, out, err);
        if (*verify_cmd) return cmd_verify(path, out, err);
        if (*replay_cmd) return cmd_replay(path, output, out);
        if (*export_cmd) return cmd_export(path, format, output, out);
        if (*merge) return cmd_merge(journals, merge_format, output, report_path, out, err);
        if (*irr) return cmd_irr(path, group, raters, method, out, err);
        if (*sus) return cmd_sus(path, out);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kInvalidArgument && *serve) {
            err << "dlot: " << e.what() << "\n";
            return kExitUsage;
        }
        err << "dlot: " << e.what() << "\n";
        return kExitDomainError;
    } catch (const DomainError& e) {
        err << "dlot: " << e.what() << "\n";
        return kExitDomainError;
    } catch (const std::exception& e) {
        err << "dlot: " << e.what() << "\n";
        return kExitDomainError;
    }
    return kExitUsage;
}

}  // namespace dlot::cli
