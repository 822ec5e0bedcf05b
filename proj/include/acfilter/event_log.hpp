#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "acfilter/schema.hpp"

namespace acfilter {

// Line-delimited event log: a header record followed by one JSON object per
// event, UTF-8, newline-terminated, no trailing whitespace. Event fields:
//   event_id, segment, user, ad, clicked, dwell_s (omitted when unlogged),
//   dwell_logged
// Single-value features serialize as a string, multi-value ones as a list.
inline constexpr const char* kEventLogFormat = "acfilter-event-log";
inline constexpr int kEventLogVersion = 1;

inline std::string event_log_header() {
    nlohmann::ordered_json h;
    h["format"] = kEventLogFormat;
    h["version"] = kEventLogVersion;
    return h.dump();
}

inline std::string serialize_event(const Event& e) {
    nlohmann::ordered_json j;
    j["event_id"] = e.event_id;
    j["segment"] = e.segment;
    auto side = [](const FeatureMap& m) {
        nlohmann::ordered_json obj = nlohmann::ordered_json::object();
        for (const auto& [name, values] : m) {
            if (values.size() == 1) {
                obj[name] = values.front();
            } else {
                obj[name] = values;
            }
        }
        return obj;
    };
    j["user"] = side(e.user);
    j["ad"] = side(e.ad);
    j["clicked"] = e.clicked;
    if (e.dwell_s) j["dwell_s"] = *e.dwell_s;
    j["dwell_logged"] = e.dwell_logged;
    return j.dump();
}

namespace detail_log {

inline FeatureMap parse_side(const nlohmann::ordered_json& obj, std::uint64_t event_id,
                             const char* which) {
    if (!obj.is_object()) {
        throw std::runtime_error("event " + std::to_string(event_id) + ": '" + which +
                                 "' must be an object");
    }
    FeatureMap out;
    for (const auto& [name, value] : obj.items()) {
        if (name == kSegmentFeature) {
            throw std::runtime_error("event " + std::to_string(event_id) +
                                     ": reserved feature name 'segment' inside '" + std::string(which) + "'");
        }
        std::vector<std::string> values;
        if (value.is_string()) {
            values.push_back(value.get<std::string>());
        } else if (value.is_array()) {
            for (const auto& v : value) {
                if (!v.is_string()) {
                    throw std::runtime_error("event " + std::to_string(event_id) + ": feature '" + name +
                                             "' has a non-string value");
                }
                values.push_back(v.get<std::string>());
            }
        } else {
            throw std::runtime_error("event " + std::to_string(event_id) + ": feature '" + name +
                                     "' must be a string or list of strings");
        }
        out.emplace_back(name, std::move(values));
    }
    return out;
}

}  // namespace detail_log

inline Event parse_event(std::string_view line) {
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(line);
    if (!j.is_object()) throw std::runtime_error("event record is not a JSON object");

    static const std::vector<std::string> known = {"event_id", "segment",  "user",
                                                   "ad",       "clicked",  "dwell_s",
                                                   "dwell_logged"};
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == key;
        if (!ok) throw std::runtime_error("event record has unknown field '" + key + "'");
    }

    Event e;
    e.event_id = j.at("event_id").get<std::uint64_t>();
    e.segment = j.at("segment").get<std::string>();
    e.user = detail_log::parse_side(j.at("user"), e.event_id, "user");
    e.ad = detail_log::parse_side(j.at("ad"), e.event_id, "ad");
    e.clicked = j.at("clicked").get<bool>();
    e.dwell_logged = j.at("dwell_logged").get<bool>();
    if (j.contains("dwell_s")) e.dwell_s = j.at("dwell_s").get<double>();

    for (const auto& [name, _] : e.user) {
        if (find_values(e.ad, name) != nullptr) {
            throw std::runtime_error("event " + std::to_string(e.event_id) + ": feature '" + name +
                                     "' appears in both user and ad");
        }
    }
    validate_event(e);
    return e;
}

class EventLogWriter {
public:
    explicit EventLogWriter(const std::filesystem::path& path) : path_(path), os_(path, std::ios::binary | std::ios::trunc) {
        if (!os_) throw std::runtime_error("cannot open event log for writing: " + path.string());
        os_ << event_log_header() << '\n';
    }

    void write(const Event& e) {
        os_ << serialize_event(e) << '\n';
        ++count_;
    }

    std::uint64_t count() const { return count_; }

    void close() {
        os_.close();
        if (!os_) throw std::runtime_error("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream os_;
    std::uint64_t count_ = 0;
};

class EventLogReader {
public:
    explicit EventLogReader(const std::filesystem::path& path) : path_(path), is_(path) {
        if (!is_) throw std::runtime_error("cannot open event log: " + path.string());
        // header is optional on read; a bare event stream is accepted
        std::streampos start = is_.tellg();
        std::string first;
        if (std::getline(is_, first)) {
            ++line_;
            nlohmann::ordered_json j = parse_line(first);
            if (j.contains("format")) {
                if (j.at("format").get<std::string>() != kEventLogFormat) {
                    throw std::runtime_error(path.string() + ": unknown log format '" +
                                             j.at("format").get<std::string>() + "'");
                }
                if (j.at("version").get<int>() != kEventLogVersion) {
                    throw std::runtime_error(path.string() + ": unsupported log version");
                }
            } else {
                is_.seekg(start);
                line_ = 0;
            }
        }
    }

    std::optional<Event> next() {
        std::string buf;
        if (!std::getline(is_, buf)) return std::nullopt;
        ++line_;
        try {
            return parse_event(buf);
        } catch (const std::exception& ex) {
            throw std::runtime_error(path_.string() + ":" + std::to_string(line_) + ": " + ex.what());
        }
    }

private:
    nlohmann::ordered_json parse_line(const std::string& s) {
        try {
            return nlohmann::ordered_json::parse(s);
        } catch (const std::exception& ex) {
            throw std::runtime_error(path_.string() + ":" + std::to_string(line_) + ": " + ex.what());
        }
    }

    std::filesystem::path path_;
    std::ifstream is_;
    std::uint64_t line_ = 0;
};

// A replayable stream of events: invoking the source runs the visitor over
// every event, and a source may be invoked any number of times. File logs
// reopen, simulators regenerate, in-memory vectors re-iterate.
using EventVisitor = std::function<void(const Event&)>;
using EventSource = std::function<void(const EventVisitor&)>;

inline EventSource file_event_source(std::filesystem::path path) {
    return [path = std::move(path)](const EventVisitor& visit) {
        EventLogReader reader(path);
        while (auto e = reader.next()) visit(*e);
    };
}

inline EventSource vector_event_source(std::vector<Event> events) {
    auto shared = std::make_shared<std::vector<Event>>(std::move(events));
    return [shared](const EventVisitor& visit) {
        for (const auto& e : *shared) visit(e);
    };
}

}  // namespace acfilter
