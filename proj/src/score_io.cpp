#include "miaforge/score_io.hpp"

#include <charconv>
#include <cmath>
#include <json.hpp>
#include <unordered_set>

#include "io_util.hpp"
#include "miaforge/error.hpp"

namespace miaforge {

namespace {

std::string quote_field(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_row(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw ValidationError("unterminated quote on CSV line " + std::to_string(line_no));
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return {buf, res.ptr};
}

std::string scores_to_csv(const ScoreVector& scores) {
  std::string out = "doc_id,score,method\n";
  const auto method = quote_field(scores.method);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out += quote_field(scores.ids[i]);
    out += ',';
    out += format_double(scores.scores[i]);
    out += ',';
    out += method;
    out += '\n';
  }
  return out;
}

ScoreVector scores_from_csv(const std::string& text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || split_csv_row(lines[0], 1) !=
                           std::vector<std::string>{"doc_id", "score", "method"}) {
    throw ValidationError("score CSV must start with header doc_id,score,method");
  }
  ScoreVector out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto fields = split_csv_row(lines[i], i + 1);
    if (fields.size() != 3) {
      throw ValidationError("score CSV line " + std::to_string(i + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected 3");
    }
    double v = 0.0;
    const auto& s = fields[1];
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ValidationError("invalid score '" + s + "' on CSV line " + std::to_string(i + 1));
    }
    if (!seen.insert(fields[0]).second) {
      throw ValidationError("duplicate doc_id '" + fields[0] + "' in score CSV");
    }
    out.ids.push_back(std::move(fields[0]));
    out.scores.push_back(v);
    if (out.method.empty()) out.method = fields[2];
  }
  return out;
}

void write_scores_csv(const ScoreVector& scores, const std::filesystem::path& path) {
  detail::write_file(path, scores_to_csv(scores));
}

ScoreVector read_scores_csv(const std::filesystem::path& path) {
  return scores_from_csv(detail::read_file(path));
}

Labels read_labels_jsonl(const std::filesystem::path& path) {
  Labels out;
  std::unordered_set<std::string> seen;
  const auto lines = detail::split_lines(detail::read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("malformed JSON on line " + std::to_string(i + 1) + " of " +
                            path.string());
    }
    if (!j.contains("id") || !j["id"].is_string()) {
      throw ValidationError("line " + std::to_string(i + 1) + " of " + path.string() +
                            " lacks a string id");
    }
    const auto id = j["id"].get<std::string>();
    if (!j.contains("label") || !j["label"].is_number_integer() ||
        (j["label"].get<int>() != 0 && j["label"].get<int>() != 1)) {
      throw ValidationError("document '" + id + "' has no 0/1 label in " + path.string());
    }
    if (!seen.insert(id).second) throw ValidationError("duplicate id '" + id + "' in labels");
    out.ids.push_back(id);
    out.values.push_back(j["label"].get<int>());
  }
  return out;
}

}  // namespace miaforge
