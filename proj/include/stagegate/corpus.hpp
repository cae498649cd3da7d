#pragma once

// Labeled message datasets: loading (JSONL/CSV), saving, splitting and
// descriptive statistics.

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "stagegate/error.hpp"
#include "stagegate/util.hpp"

namespace stagegate {

enum class StageLabel : std::uint8_t { Preparedness = 0, Response = 1, PostEmergency = 2, Engagement = 3 };

inline constexpr std::size_t kNumClasses = 4;

/// Fixed class order; also the argmax tie-breaking order everywhere.
inline constexpr std::array<StageLabel, kNumClasses> kAllLabels = {
    StageLabel::Preparedness, StageLabel::Response, StageLabel::PostEmergency,
    StageLabel::Engagement};

inline std::size_t label_index(StageLabel l) { return static_cast<std::size_t>(l); }

inline StageLabel label_from_index(std::size_t i) {
  if (i >= kNumClasses) throw Error(ErrorCode::InvalidClassIndex, std::to_string(i));
  return static_cast<StageLabel>(i);
}

/// Wire name used in JSONL/CSV files.
inline std::string_view label_name(StageLabel l) {
  switch (l) {
    case StageLabel::Preparedness: return "preparedness";
    case StageLabel::Response: return "response";
    case StageLabel::PostEmergency: return "post_emergency";
    case StageLabel::Engagement: return "engagement";
  }
  return "";
}

/// Short column suffix used by reports (F_prep, F_resp, ...).
inline std::string_view label_short(StageLabel l) {
  switch (l) {
    case StageLabel::Preparedness: return "prep";
    case StageLabel::Response: return "resp";
    case StageLabel::PostEmergency: return "post";
    case StageLabel::Engagement: return "eng";
  }
  return "";
}

inline std::optional<StageLabel> parse_label(std::string_view s) {
  for (auto l : kAllLabels) {
    if (s == label_name(l)) return l;
  }
  return std::nullopt;
}

struct Message {
  std::string id;
  std::string text;
  std::int64_t likes = 0;
  std::optional<StageLabel> label;
  std::optional<std::string> created_at;

  bool operator==(const Message&) const = default;
};

struct Provenance {
  std::string source;
  std::string loaded_at;
};

/// Ordered messages with unique ids.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Message> messages, Provenance provenance = {})
      : provenance_(std::move(provenance)) {
    messages_.reserve(messages.size());
    for (auto& m : messages) add(std::move(m));
  }

  void add(Message m) {
    if (m.id.empty()) throw Error(ErrorCode::RecordInvalid, "empty id");
    if (m.likes < 0) throw Error(ErrorCode::RecordInvalid, "negative likes for id " + m.id);
    if (!ids_.insert(m.id).second) throw Error(ErrorCode::DuplicateId, m.id);
    messages_.push_back(std::move(m));
  }

  const std::vector<Message>& messages() const { return messages_; }
  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  const Message& operator[](std::size_t i) const { return messages_[i]; }
  auto begin() const { return messages_.begin(); }
  auto end() const { return messages_.end(); }

  const Provenance& provenance() const { return provenance_; }
  void set_provenance(Provenance p) { provenance_ = std::move(p); }

  bool all_labeled() const {
    return std::all_of(messages_.begin(), messages_.end(),
                       [](const Message& m) { return m.label.has_value(); });
  }

  std::array<std::size_t, kNumClasses> class_counts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& m : messages_) {
      if (m.label) ++counts[label_index(*m.label)];
    }
    return counts;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.provenance_ = provenance_;
    for (auto i : indices) out.add(messages_.at(i));
    return out;
  }

 private:
  std::vector<Message> messages_;
  std::unordered_set<std::string> ids_;
  Provenance provenance_;
};

/// Classifier training needs every message labeled.
inline void require_labeled(const Dataset& d) {
  for (const auto& m : d) {
    if (!m.label) throw Error(ErrorCode::UnlabeledMessage, "message " + m.id + " has no label");
  }
}

enum class CorpusFormat { Jsonl, Csv };

inline CorpusFormat format_from_path(const std::filesystem::path& p) {
  return p.extension() == ".csv" ? CorpusFormat::Csv : CorpusFormat::Jsonl;
}

namespace detail {

inline std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Message message_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw Error(ErrorCode::RecordInvalid, "line is not a JSON object", line);
  Message m;
  auto id = j.find("id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty())
    throw Error(ErrorCode::RecordInvalid, "missing or non-string id", line);
  m.id = id->get<std::string>();
  auto text = j.find("text");
  if (text == j.end() || !text->is_string())
    throw Error(ErrorCode::RecordInvalid, "missing text", line);
  m.text = text->get<std::string>();
  if (auto likes = j.find("likes"); likes != j.end() && !likes->is_null()) {
    if (!likes->is_number_integer() || likes->get<std::int64_t>() < 0)
      throw Error(ErrorCode::RecordInvalid, "likes must be a non-negative integer", line);
    m.likes = likes->get<std::int64_t>();
  }
  if (auto label = j.find("label"); label != j.end() && !label->is_null()) {
    if (!label->is_string()) throw Error(ErrorCode::RecordInvalid, "label must be a string", line);
    auto parsed = parse_label(label->get<std::string>());
    if (!parsed)
      throw Error(ErrorCode::RecordInvalid, "unknown label '" + label->get<std::string>() + "'", line);
    m.label = parsed;
  }
  if (auto ts = j.find("created_at"); ts != j.end() && !ts->is_null()) {
    if (!ts->is_string()) throw Error(ErrorCode::RecordInvalid, "created_at must be a string", line);
    m.created_at = ts->get<std::string>();
  }
  return m;
}

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and
/// newlines. Returns rows together with the 1-based line each row starts on.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(std::string_view s) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;
  auto end_row = [&] {
    if (field_started || !row.empty()) {
      row.push_back(std::move(field));
      rows.emplace_back(row_line, std::move(row));
    }
    row.clear();
    field.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        row_line = line;
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (quoted) throw Error(ErrorCode::RecordInvalid, "unterminated quoted field", row_line);
  end_row();
  return rows;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

/// Parses corpus content already in memory. `source` only labels provenance.
inline Dataset parse_corpus(std::string_view content, CorpusFormat format, std::string source = "") {
  Dataset d;
  d.set_provenance({std::move(source), detail::now_iso8601()});
  if (format == CorpusFormat::Jsonl) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= content.size()) {
      auto nl = content.find('\n', pos);
      if (nl == std::string_view::npos) nl = content.size();
      auto line = content.substr(pos, nl - pos);
      ++line_no;
      pos = nl + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
        if (nl == content.size()) break;
        continue;
      }
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::RecordInvalid, std::string("malformed JSON: ") + e.what(), line_no);
      }
      auto m = detail::message_from_json(j, line_no);
      try {
        d.add(std::move(m));
      } catch (const Error& e) {
        throw Error(e.code(), e.what(), line_no);
      }
    }
    return d;
  }

  auto rows = detail::parse_csv(content);
  if (rows.empty()) return d;
  const auto& header = rows.front().second;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  if (!col.count("id") || !col.count("text"))
    throw Error(ErrorCode::RecordInvalid, "CSV header must contain id and text", 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [line_no, fields] = rows[r];
    auto get = [&](const std::string& name) -> std::optional<std::string> {
      auto it = col.find(name);
      if (it == col.end() || it->second >= fields.size()) return std::nullopt;
      return fields[it->second];
    };
    nlohmann::json j = nlohmann::json::object();
    if (auto v = get("id")) j["id"] = *v;
    if (auto v = get("text")) j["text"] = *v;
    if (auto v = get("likes"); v && !v->empty()) {
      try {
        std::size_t used = 0;
        const long long likes = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        j["likes"] = likes;
      } catch (const std::exception&) {
        throw Error(ErrorCode::RecordInvalid, "likes is not an integer", line_no);
      }
    }
    if (auto v = get("label"); v && !v->empty()) j["label"] = *v;
    if (auto v = get("created_at"); v && !v->empty()) j["created_at"] = *v;
    auto m = detail::message_from_json(j, line_no);
    try {
      d.add(std::move(m));
    } catch (const Error& e) {
      throw Error(e.code(), e.what(), line_no);
    }
  }
  return d;
}

inline Dataset load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::FileNotFound, path.string());
  return parse_corpus(read_file(path), format, path.string());
}

inline Dataset load_corpus(const std::filesystem::path& path) {
  return load_corpus(path, format_from_path(path));
}

inline nlohmann::json message_to_json(const Message& m) {
  nlohmann::json j;
  j["id"] = m.id;
  j["text"] = m.text;
  j["likes"] = m.likes;
  if (m.label) j["label"] = std::string(label_name(*m.label));
  if (m.created_at) j["created_at"] = *m.created_at;
  return j;
}

/// Native JSONL serialization; `parse_corpus` of the result restores the
/// same messages.
inline std::string to_jsonl(const Dataset& d) {
  std::string out;
  for (const auto& m : d) {
    out += message_to_json(m).dump();
    out += '\n';
  }
  return out;
}

inline std::string to_csv(const Dataset& d) {
  std::string out = "id,text,likes,label,created_at\n";
  for (const auto& m : d) {
    out += detail::csv_escape(m.id) + ',' + detail::csv_escape(m.text) + ',' +
           std::to_string(m.likes) + ',' +
           (m.label ? std::string(label_name(*m.label)) : std::string()) + ',' +
           detail::csv_escape(m.created_at.value_or("")) + '\n';
  }
  return out;
}

inline void save_corpus(const Dataset& d, const std::filesystem::path& path) {
  atomic_write(path, format_from_path(path) == CorpusFormat::Csv ? to_csv(d) : to_jsonl(d));
}

// ---------------------------------------------------------------------------
// Splitting

/// Partitions `d` into (train, test). The train side gets
/// llround(train_fraction * |d|) messages. Stratified mode allocates that
/// total across classes (unlabeled messages form their own stratum) by
/// largest remainder, so each class is within one message of its exact
/// proportional share. Both sides keep the original message order.
inline std::pair<Dataset, Dataset> split(const Dataset& d, double train_fraction, std::uint64_t seed,
                                         bool stratified) {
  if (d.empty()) throw Error(ErrorCode::EmptyDataset, "cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorCode::DegenerateSplit, "train fraction must be in (0,1)");
  const std::size_t n = d.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n)
    throw Error(ErrorCode::DegenerateSplit, "one side of the split would be empty");

  Rng rng(seed);
  std::vector<char> in_train(n, 0);
  if (!stratified) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = 1;
  } else {
    // stratum kNumClasses holds unlabeled messages
    std::array<std::vector<std::size_t>, kNumClasses + 1> strata;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = d[i];
      strata[m.label ? label_index(*m.label) : kNumClasses].push_back(i);
    }
    std::array<std::size_t, kNumClasses + 1> take{};
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < strata.size(); ++s) {
      const double exact = train_fraction * static_cast<double>(strata[s].size());
      take[s] = static_cast<std::size_t>(std::floor(exact));
      assigned += take[s];
      if (!strata[s].empty()) remainders.emplace_back(exact - std::floor(exact), s);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n_train && r < remainders.size(); ++r, ++assigned) {
      ++take[remainders[r].second];
    }
    for (std::size_t s = 0; s < strata.size(); ++s) {
      auto& members = strata[s];
      rng.shuffle(members);
      for (std::size_t i = 0; i < take[s]; ++i) in_train[members[i]] = 1;
    }
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train_idx : test_idx).push_back(i);
  return {d.subset(train_idx), d.subset(test_idx)};
}

// ---------------------------------------------------------------------------
// Descriptive statistics

struct SeriesStats {
  double min = 0, median = 0, mean = 0, max = 0, sd = 0;
};

struct CorpusStats {
  std::size_t messages = 0;
  SeriesStats words;
  SeriesStats likes;
  std::array<std::size_t, kNumClasses> class_counts{};
  std::size_t unlabeled = 0;
};

/// Order statistics of a series. Median of an even-length series is the mean
/// of the two middle values; sd is the population standard deviation.
inline SeriesStats series_stats(std::vector<double> v) {
  SeriesStats s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.min = v.front();
  s.max = v.back();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  double sum = 0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(n);
  double ss = 0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(n));
  return s;
}

/// Word count here is the raw whitespace-token count (before normalization).
inline CorpusStats stats(const Dataset& d) {
  if (d.empty()) throw Error(ErrorCode::EmptyDataset, "stats of an empty dataset");
  CorpusStats cs;
  cs.messages = d.size();
  std::vector<double> words, likes;
  words.reserve(d.size());
  likes.reserve(d.size());
  for (const auto& m : d) {
    words.push_back(static_cast<double>(split_whitespace(m.text).size()));
    likes.push_back(static_cast<double>(m.likes));
    if (!m.label) ++cs.unlabeled;
  }
  cs.words = series_stats(std::move(words));
  cs.likes = series_stats(std::move(likes));
  cs.class_counts = d.class_counts();
  return cs;
}

/// Two-row table in the min/median/mean/max/sd layout.
inline std::string format_stats(const CorpusStats& cs) {
  auto row = [](std::string_view name, const SeriesStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-18s %10.1f %10.1f %10.1f %10.1f %10.1f\n",
                  std::string(name).c_str(), s.min, s.median, s.mean, s.max, s.sd);
    return std::string(buf);
  };
  std::string out;
  char head[256];
  std::snprintf(head, sizeof head, "%-18s %10s %10s %10s %10s %10s\n", "Measure", "Min", "Median",
                "Mean", "Max", "SD");
  out += head;
  out += row("Words in message", cs.words);
  out += row("Message likes", cs.likes);
  out += "\nMessages: " + std::to_string(cs.messages) + "\n";
  for (auto l : kAllLabels) {
    out += "  " + std::string(label_name(l)) + ": " + std::to_string(cs.class_counts[label_index(l)]) + "\n";
  }
  if (cs.unlabeled) out += "  (unlabeled): " + std::to_string(cs.unlabeled) + "\n";
  return out;
}

}  // namespace stagegate
