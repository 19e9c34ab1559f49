#include "dlot/export.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <tuple>

#include "dlot/error.hpp"
#include "dlot/zip.hpp"

namespace dlot {

std::vector<std::string> export_header(const LabelScheme& scheme) {
    std::vector<std::string> header = {"session_id", "subject_id", "subject_name", "observer_id",
                                       "prompt_index", "timestamp", "status"};
    for (const auto& g : scheme.groups) header.push_back(g.name);
    return header;
}

std::vector<std::string> row_cells(const ExportRow& row) {
    std::vector<std::string> cells = {row.session_id, row.subject_id, row.subject_name, row.observer_id,
                                      std::to_string(row.prompt_index), row.timestamp, row.status};
    cells.insert(cells.end(), row.cells.begin(), row.cells.end());
    return cells;
}

std::vector<ExportRow> to_rows(const SessionState& state) {
    const SessionConfig& config = state.config();
    const auto& observations = state.observations();

    std::vector<std::size_t> order(observations.size());
    std::vector<std::size_t> subject_pos(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i) {
        order[i] = i;
        subject_pos[i] = config.roster.position(observations[i].subject_id).value_or(config.roster.size());
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& oa = observations[a];
        const auto& ob = observations[b];
        return std::tie(subject_pos[a], oa.logged_at, oa.observer_id, oa.prompt_index) <
               std::tie(subject_pos[b], ob.logged_at, ob.observer_id, ob.prompt_index);
    });

    std::vector<ExportRow> rows;
    rows.reserve(order.size());
    for (std::size_t i : order) {
        const Observation& obs = observations[i];
        ExportRow row;
        row.session_id = config.session_id;
        row.subject_id = obs.subject_id;
        if (subject_pos[i] < config.roster.size()) row.subject_name = config.roster.subjects[subject_pos[i]].display_name;
        row.observer_id = obs.observer_id;
        row.prompt_index = obs.prompt_index;
        row.timestamp = format_iso8601(obs.logged_at);
        row.status = to_string(obs.status);
        for (const auto& group : config.scheme.groups) {
            std::string cell;
            if (const auto it = obs.selections.find(group.name); it != obs.selections.end()) {
                for (const auto& label : group.labels) {
                    if (!it->second.count(label)) continue;
                    if (!cell.empty()) cell += kMultiSelectJoiner;
                    cell += label;
                }
            }
            row.cells.push_back(std::move(cell));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

void append_csv_field(std::string& out, std::string_view field) {
    const bool quote = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!quote) {
        out += field;
        return;
    }
    out += '"';
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

void append_csv_record(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        append_csv_field(out, fields[i]);
    }
    out += "\r\n";
}

}  // namespace

std::string write_csv_matrix(const std::vector<std::vector<std::string>>& matrix) {
    std::string out;
    for (const auto& record : matrix) append_csv_record(out, record);
    return out;
}

std::string write_csv(const LabelScheme& scheme, std::span<const ExportRow> rows) {
    std::string out;
    append_csv_record(out, export_header(scheme));
    for (const auto& row : rows) append_csv_record(out, row_cells(row));
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        records.push_back(std::move(record));
        record.clear();
        field_started = false;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    i += 2;
                    continue;
                }
                in_quotes = false;
            } else {
                field += c;
            }
            ++i;
            continue;
        }
        if (c == '"' && field.empty()) {
            in_quotes = true;
            field_started = true;
        } else if (c == ',') {
            record.push_back(std::move(field));
            field.clear();
            field_started = true;
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            end_record();
            ++i;
        } else if (c == '\n') {
            end_record();
        } else {
            field += c;
            field_started = true;
        }
        ++i;
    }
    if (in_quotes) throw Error(ErrorCode::kInvalidArgument, "unterminated quoted field in CSV");
    if (field_started || !record.empty()) end_record();
    return records;
}

namespace {

std::string column_name(std::size_t index) {
    std::string name;
    ++index;
    while (index > 0) {
        const std::size_t rem = (index - 1) % 26;
        name.insert(name.begin(), static_cast<char>('A' + rem));
        index = (index - 1) / 26;
    }
    return name;
}

bool literal_escape_at(std::string_view text, std::size_t i) {
    if (i + 7 > text.size() || text[i] != '_' || text[i + 1] != 'x' || text[i + 6] != '_') return false;
    for (std::size_t k = i + 2; k < i + 6; ++k) {
        if (!std::isxdigit(static_cast<unsigned char>(text[k]))) return false;
    }
    return true;
}

// XML text escaping plus the OOXML _xHHHH_ form for characters XML 1.0 cannot carry.
void append_xml_text(std::string& out, std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const auto u = static_cast<unsigned char>(c);
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\r': out += "&#13;"; break;
            case '\n':
            case '\t': out += c; break;
            default:
                if (u < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "_x%04X_", u);
                    out += buf;
                } else if (c == '_' && literal_escape_at(text, i)) {
                    out += "_x005F_";
                } else {
                    out += c;
                }
        }
    }
}

constexpr std::string_view kXmlDecl = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n";
constexpr std::size_t kPromptIndexColumn = 4;

std::string sheet_xml(const std::vector<std::vector<std::string>>& matrix) {
    std::string xml(kXmlDecl);
    xml += "<worksheet xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\"><sheetData>";
    for (std::size_t r = 0; r < matrix.size(); ++r) {
        const std::string row_ref = std::to_string(r + 1);
        xml += "<row r=\"" + row_ref + "\">";
        for (std::size_t c = 0; c < matrix[r].size(); ++c) {
            const std::string& value = matrix[r][c];
            if (value.empty()) continue;
            const std::string ref = column_name(c) + row_ref;
            if (r > 0 && c == kPromptIndexColumn) {
                xml += "<c r=\"" + ref + "\"><v>" + value + "</v></c>";
                continue;
            }
            xml += "<c r=\"" + ref + "\" t=\"inlineStr\"><is><t xml:space=\"preserve\">";
            append_xml_text(xml, value);
            xml += "</t></is></c>";
        }
        xml += "</row>";
    }
    xml += "</sheetData></worksheet>";
    return xml;
}

}  // namespace

std::string write_xlsx(const LabelScheme& scheme, std::span<const ExportRow> rows) {
    std::vector<std::vector<std::string>> matrix;
    matrix.reserve(rows.size() + 1);
    matrix.push_back(export_header(scheme));
    for (const auto& row : rows) matrix.push_back(row_cells(row));

    std::string content_types(kXmlDecl);
    content_types +=
        "<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">"
        "<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>"
        "<Default Extension=\"xml\" ContentType=\"application/xml\"/>"
        "<Override PartName=\"/xl/workbook.xml\" "
        "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>"
        "<Override PartName=\"/xl/worksheets/sheet1.xml\" "
        "ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>"
        "</Types>";

    std::string root_rels(kXmlDecl);
    root_rels +=
        "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
        "<Relationship Id=\"rId1\" "
        "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument\" "
        "Target=\"xl/workbook.xml\"/>"
        "</Relationships>";

    std::string workbook(kXmlDecl);
    workbook +=
        "<workbook xmlns=\"http://schemas.openxmlformats.org/spreadsheetml/2006/main\" "
        "xmlns:r=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships\">"
        "<sheets><sheet name=\"";
    workbook += kSheetName;
    workbook += "\" sheetId=\"1\" r:id=\"rId1\"/></sheets></workbook>";

    std::string workbook_rels(kXmlDecl);
    workbook_rels +=
        "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">"
        "<Relationship Id=\"rId1\" "
        "Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet\" "
        "Target=\"worksheets/sheet1.xml\"/>"
        "</Relationships>";

    return zip_store({
        {"[Content_Types].xml", std::move(content_types)},
        {"_rels/.rels", std::move(root_rels)},
        {"xl/workbook.xml", std::move(workbook)},
        {"xl/_rels/workbook.xml.rels", std::move(workbook_rels)},
        {"xl/worksheets/sheet1.xml", sheet_xml(matrix)},
    });
}

}  // namespace dlot
