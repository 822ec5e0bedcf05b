#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfilter/ac_trainer.hpp"
#include "acfilter/click_trainer.hpp"
#include "acfilter/event_log.hpp"
#include "acfilter/math.hpp"
#include "acfilter/model.hpp"

namespace acfilter {

using EventFilter = std::function<bool(const Event&)>;

struct EvalStats {
    std::uint64_t n_events = 0;
    double logloss_sum = 0.0;
    double sum_pred = 0.0;
    double sum_label = 0.0;

    double logloss_mean() const { return n_events ? logloss_sum / static_cast<double>(n_events) : 0.0; }
    std::optional<double> calibration_ratio() const {
        if (sum_label <= 0.0) return std::nullopt;
        return sum_pred / sum_label;
    }
};

struct EvalReport {
    EvalStats total;
    std::map<std::string, EvalStats> per_segment;
    std::optional<double> auc;  // advisory

    std::uint64_t n_events() const { return total.n_events; }
    double logloss_mean() const { return total.logloss_mean(); }
    double calibration_ratio() const {
        const auto r = total.calibration_ratio();
        if (!r) throw std::runtime_error("calibration ratio undefined: no positive labels");
        return *r;
    }
};

namespace detail_eval {

// Mann-Whitney AUC with average ranks for ties.
inline std::optional<double> rank_auc(std::vector<std::pair<double, bool>>& scored) {
    std::uint64_t n_pos = 0;
    for (const auto& [_, y] : scored) n_pos += y ? 1 : 0;
    const std::uint64_t n_neg = scored.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (scored[t].second) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace detail_eval

/// Replays a holdout stream through a scoring snapshot. Labels are the raw
/// click indicator; soft training labels never enter evaluation. LogLoss is
/// reported as a per-event mean.
inline EvalReport evaluate(const Scorer& snapshot, const EventSource& events,
                           const EventFilter& filter = nullptr, bool compute_auc = true) {
    EvalReport report;
    std::vector<std::pair<double, bool>> scored;
    events([&](const Event& e) {
        if (filter && !filter(e)) return;
        const double p = snapshot.predict_event(e);
        const double y = e.clicked ? 1.0 : 0.0;
        const double ll = logloss(p, y);
        for (EvalStats* s : {&report.total, &report.per_segment[e.segment]}) {
            s->n_events += 1;
            s->logloss_sum += ll;
            s->sum_pred += p;
            s->sum_label += y;
        }
        if (compute_auc) scored.emplace_back(p, e.clicked);
    });
    if (report.total.n_events == 0) throw std::runtime_error("no events to evaluate");
    if (compute_auc) report.auc = detail_eval::rank_auc(scored);
    return report;
}

/// (1 - LL_model / LL_baseline) * 100; positive when the model improves on
/// the baseline. Reports must cover identical event sets to mean anything.
inline double logloss_lift(const EvalReport& model, const EvalReport& baseline) {
    const double base = baseline.logloss_mean();
    if (base == 0.0) throw std::invalid_argument("logloss_lift: baseline LogLoss is zero");
    return (1.0 - model.logloss_mean() / base) * 100.0;
}

// ---------------------------------------------------------------------------
// dwell-time analysis

/// Histogram over click dwell-times. Finite bins from the edge list, then an
/// overflow bin [last_edge, inf) for recorded dwells past the edges, then a
/// terminal bin holding every click whose dwell-time was never recorded
/// (treated as infinite).
struct DwellReport {
    std::vector<double> bin_edges;
    std::vector<std::uint64_t> counts;  // finite bins + overflow + terminal
    std::vector<double> pmf;
    std::uint64_t n_clicks = 0;
    std::map<double, double> ac_share_at;  // threshold -> percentage of all clicks
    std::map<std::string, DwellReport> slices;
};

inline std::vector<double> default_dwell_bin_edges(double width = 0.5, double max_finite = 30.0) {
    std::vector<double> edges;
    for (double e = 0.0; e < max_finite + width / 2; e += width) edges.push_back(e);
    return edges;
}

// slice dimensions: segment, involvement, demo, device (from the tech values)
inline std::optional<std::string> slice_value(const Event& e, const std::string& dimension) {
    if (dimension == "segment") return e.segment;
    if (dimension == "involvement") {
        const auto* v = find_values(e.user, "user_involvement");
        if (v && !v->empty()) return v->front();
        return std::nullopt;
    }
    if (dimension == "demo") {
        const auto* v = find_values(e.user, "demo");
        if (v && !v->empty()) return v->front();
        return std::nullopt;
    }
    if (dimension == "device") {
        const auto* v = find_values(e.user, "tech");
        if (v) {
            for (const auto& t : *v) {
                if (t.rfind("dev:", 0) == 0) return t.substr(4);
            }
        }
        return std::nullopt;
    }
    throw std::invalid_argument("unknown slice dimension '" + dimension + "'");
}

namespace detail_eval {

struct DwellAccum {
    std::vector<std::uint64_t> counts;
    std::uint64_t n_clicks = 0;
    std::map<double, std::uint64_t> below_threshold;

    explicit DwellAccum(const std::vector<double>& edges, const std::vector<double>& thresholds) {
        counts.assign(edges.size() + 1, 0);  // finite bins + overflow + terminal
        for (double t : thresholds) below_threshold[t] = 0;
    }

    void add(const std::vector<double>& edges, const Event& e) {
        ++n_clicks;
        if (!e.dwell_s.has_value()) {
            ++counts.back();
            return;
        }
        const double d = *e.dwell_s;
        const auto it = std::upper_bound(edges.begin(), edges.end(), d);
        const std::size_t idx = static_cast<std::size_t>(it - edges.begin());
        if (idx >= edges.size()) {
            ++counts[edges.size() - 1];  // overflow [last_edge, inf)
        } else {
            ++counts[idx - 1];
        }
        for (auto& [tau, n] : below_threshold) {
            if (d < tau) ++n;
        }
    }

    DwellReport report(const std::vector<double>& edges) const {
        DwellReport r;
        r.bin_edges = edges;
        r.counts = counts;
        r.n_clicks = n_clicks;
        r.pmf.resize(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            r.pmf[i] = n_clicks ? static_cast<double>(counts[i]) / static_cast<double>(n_clicks) : 0.0;
        }
        for (const auto& [tau, n] : below_threshold) {
            r.ac_share_at[tau] = n_clicks ? 100.0 * static_cast<double>(n) / static_cast<double>(n_clicks) : 0.0;
        }
        return r;
    }
};

}  // namespace detail_eval

/// Click dwell-time PMFs and accidental-click shares, overall and sliced.
/// Only clicks participate; unrecorded dwell-times land in the terminal bin.
inline DwellReport dwell_analysis(const EventSource& events, const std::vector<double>& bin_edges,
                                  const std::vector<double>& thresholds,
                                  const std::vector<std::string>& slice_dimensions = {}) {
    if (bin_edges.size() < 2) throw std::invalid_argument("dwell_analysis: need at least two bin edges");
    if (bin_edges.front() != 0.0) throw std::invalid_argument("dwell_analysis: first bin edge must be 0");
    for (std::size_t i = 1; i < bin_edges.size(); ++i) {
        if (bin_edges[i] <= bin_edges[i - 1]) {
            throw std::invalid_argument("dwell_analysis: bin edges must be increasing");
        }
    }
    detail_eval::DwellAccum total(bin_edges, thresholds);
    std::map<std::string, detail_eval::DwellAccum> sliced;
    events([&](const Event& e) {
        if (!e.clicked) return;
        total.add(bin_edges, e);
        for (const auto& dim : slice_dimensions) {
            const auto value = slice_value(e, dim);
            if (!value) continue;
            const std::string key = dim + "=" + *value;
            auto it = sliced.find(key);
            if (it == sliced.end()) {
                it = sliced.emplace(key, detail_eval::DwellAccum(bin_edges, thresholds)).first;
            }
            it->second.add(bin_edges, e);
        }
    });
    if (total.n_clicks == 0) throw std::runtime_error("no clicks to analyse");
    DwellReport r = total.report(bin_edges);
    for (const auto& [key, accum] : sliced) {
        r.slices.emplace(key, accum.report(bin_edges));
    }
    return r;
}

// ---------------------------------------------------------------------------
// threshold sweep

struct SweepConfig {
    std::vector<double> tau_grid;
    AcTrainingConfig ac;
    ClickTrainingConfig click;        // trained per tau in unbiased mode
    ClickTrainingConfig baseline;     // trained once in agnostic mode
    EventFilter eval_filter;          // defaults to non-dwell-logged traffic
    bool compute_auc = false;
};

struct SweepRow {
    double tau = 0.0;
    double lift_pct = 0.0;           // unbiased vs agnostic LogLoss lift
    double calibration_ratio = 0.0;  // unbiased snapshot on the holdout
    bool best = false;
};

/// Grid search over the AC dwell-time threshold: trains the auxiliary and
/// unbiased models at each tau and evaluates against a shared agnostic
/// baseline on the holdout. The best-lift row is flagged.
inline std::vector<SweepRow> threshold_sweep(const EventSource& train, const EventSource& holdout,
                                             const SweepConfig& cfg) {
    if (cfg.tau_grid.empty()) throw std::invalid_argument("threshold_sweep: empty tau grid");
    for (double t : cfg.tau_grid) {
        if (t <= 0.0) throw std::invalid_argument("threshold_sweep: thresholds must be > 0");
    }
    const EventFilter filter =
        cfg.eval_filter ? cfg.eval_filter : [](const Event& e) { return !e.dwell_logged; };

    ClickTrainingConfig agnostic_cfg = cfg.baseline;
    agnostic_cfg.mode = ClickMode::kAgnostic;
    ClickTrainer agnostic(agnostic_cfg);
    train_click(agnostic, train);
    const ModelSnapshot base_snap = serve_snapshot(agnostic);
    const EvalReport base_report = evaluate(base_snap, holdout, filter, cfg.compute_auc);

    std::vector<SweepRow> rows;
    for (double tau : cfg.tau_grid) {
        AcTrainingConfig ac_cfg = cfg.ac;
        ac_cfg.tau_ac_s = tau;
        AcTrainer ac(ac_cfg);
        train_ac(ac, train);

        ClickTrainingConfig click_cfg = cfg.click;
        click_cfg.mode = ClickMode::kUnbiased;
        click_cfg.tau_ac_s = tau;
        AcModelLabelSource labels(ac.model());
        ClickTrainer unbiased(click_cfg, &labels);
        train_click(unbiased, train);

        const ModelSnapshot snap = serve_snapshot(unbiased);
        const EvalReport report = evaluate(snap, holdout, filter, cfg.compute_auc);
        SweepRow row;
        row.tau = tau;
        row.lift_pct = logloss_lift(report, base_report);
        const auto ratio = report.total.calibration_ratio();
        row.calibration_ratio = ratio ? *ratio : 0.0;
        rows.push_back(row);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].lift_pct > rows[best].lift_pct) best = i;
    }
    rows[best].best = true;
    return rows;
}

// ---------------------------------------------------------------------------
// filters and report serialization

/// Tiny filter language for CLI use: `key=value` terms joined by '&'.
/// Supported keys: dwell_logged, clicked (true/false) and segment (exact).
inline EventFilter parse_filter(const std::string& expr) {
    if (expr.empty()) return nullptr;
    struct Term {
        std::string key;
        std::string value;
    };
    std::vector<Term> terms;
    std::size_t pos = 0;
    while (pos < expr.size()) {
        std::size_t amp = expr.find('&', pos);
        if (amp == std::string::npos) amp = expr.size();
        const std::string part = expr.substr(pos, amp - pos);
        const std::size_t eq = part.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("filter term '" + part + "' is not key=value");
        }
        Term t{part.substr(0, eq), part.substr(eq + 1)};
        if (t.key != "dwell_logged" && t.key != "clicked" && t.key != "segment") {
            throw std::invalid_argument("unknown filter key '" + t.key + "'");
        }
        if ((t.key == "dwell_logged" || t.key == "clicked") && t.value != "true" && t.value != "false") {
            throw std::invalid_argument("filter value for " + t.key + " must be true or false");
        }
        terms.push_back(std::move(t));
        pos = amp + 1;
    }
    return [terms](const Event& e) {
        for (const auto& t : terms) {
            if (t.key == "dwell_logged" && e.dwell_logged != (t.value == "true")) return false;
            if (t.key == "clicked" && e.clicked != (t.value == "true")) return false;
            if (t.key == "segment" && e.segment != t.value) return false;
        }
        return true;
    };
}

inline nlohmann::json eval_stats_to_json(const EvalStats& s) {
    nlohmann::json j;
    j["n_events"] = s.n_events;
    j["logloss_mean"] = s.logloss_mean();
    j["sum_pred"] = s.sum_pred;
    j["sum_label"] = s.sum_label;
    const auto ratio = s.calibration_ratio();
    j["calibration_ratio"] = ratio ? nlohmann::json(*ratio) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
    nlohmann::json j = eval_stats_to_json(r.total);
    j["auc"] = r.auc ? nlohmann::json(*r.auc) : nlohmann::json(nullptr);
    for (const auto& [segment, stats] : r.per_segment) {
        j["per_segment"][segment] = eval_stats_to_json(stats);
    }
    return j;
}

inline std::string eval_report_to_csv(const EvalReport& r) {
    auto row = [](const std::string& name, const EvalStats& s) {
        const auto ratio = s.calibration_ratio();
        return name + "," + std::to_string(s.n_events) + "," + std::to_string(s.logloss_mean()) + "," +
               std::to_string(s.sum_pred) + "," + std::to_string(s.sum_label) + "," +
               (ratio ? std::to_string(*ratio) : std::string("")) + "\n";
    };
    std::string csv = "segment,n_events,logloss_mean,sum_pred,sum_label,calibration_ratio\n";
    csv += row("_total", r.total);
    for (const auto& [segment, stats] : r.per_segment) csv += row(segment, stats);
    return csv;
}

inline nlohmann::json dwell_report_to_json(const DwellReport& r, bool with_slices = true) {
    nlohmann::json j;
    j["n_clicks"] = r.n_clicks;
    j["bin_edges"] = r.bin_edges;
    j["counts"] = r.counts;
    j["pmf"] = r.pmf;
    for (const auto& [tau, share] : r.ac_share_at) {
        j["ac_share_at"][std::to_string(tau)] = share;
    }
    if (with_slices) {
        j["slices"] = nlohmann::json::object();
        for (const auto& [key, sub] : r.slices) {
            j["slices"][key] = dwell_report_to_json(sub, false);
        }
    }
    return j;
}

inline std::string dwell_pmf_csv(const DwellReport& r) {
    std::string csv = "slice,bin_lo,bin_hi,count,pmf\n";
    auto rows = [&csv](const std::string& slice, const DwellReport& d) {
        for (std::size_t i = 0; i < d.counts.size(); ++i) {
            std::string lo, hi;
            if (i + 2 < d.counts.size()) {
                lo = std::to_string(d.bin_edges[i]);
                hi = std::to_string(d.bin_edges[i + 1]);
            } else if (i + 2 == d.counts.size()) {
                lo = std::to_string(d.bin_edges.back());
                hi = "inf";
            } else {
                lo = "unlogged";
                hi = "unlogged";
            }
            csv += slice + "," + lo + "," + hi + "," + std::to_string(d.counts[i]) + "," +
                   std::to_string(d.pmf[i]) + "\n";
        }
    };
    rows("_total", r);
    for (const auto& [key, sub] : r.slices) rows(key, sub);
    return csv;
}

inline std::string dwell_shares_csv(const DwellReport& r) {
    std::string csv = "slice,tau_s,ac_share_pct\n";
    auto rows = [&csv](const std::string& slice, const DwellReport& d) {
        for (const auto& [tau, share] : d.ac_share_at) {
            csv += slice + "," + std::to_string(tau) + "," + std::to_string(share) + "\n";
        }
    };
    rows("_total", r);
    for (const auto& [key, sub] : r.slices) rows(key, sub);
    return csv;
}

inline nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
        j.push_back({{"tau_s", r.tau},
                     {"logloss_lift_pct", r.lift_pct},
                     {"calibration_ratio", r.calibration_ratio},
                     {"best", r.best}});
    }
    return j;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string csv = "tau_s,logloss_lift_pct,calibration_ratio,best\n";
    for (const auto& r : rows) {
        csv += std::to_string(r.tau) + "," + std::to_string(r.lift_pct) + "," +
               std::to_string(r.calibration_ratio) + "," + (r.best ? "1" : "0") + "\n";
    }
    return csv;
}

}  // namespace acfilter
