#include "tracedr/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "tracedr/errors.hpp"

namespace tracedr {

using nlohmann::json;

namespace {

std::vector<std::string> unique_in_order(std::span<const std::string> items) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& s : items)
        if (seen.insert(s).second) out.push_back(s);
    return out;
}

}  // namespace

SetMetrics set_metrics(std::span<const std::string> predicted, std::span<const std::string> truth) {
    auto pred = unique_in_order(predicted);
    auto gold = unique_in_order(truth);
    if (gold.empty()) throw InvalidArgument("set metrics need a non-empty truth set");
    std::unordered_set<std::string> gold_set(gold.begin(), gold.end());
    std::size_t inter = 0;
    for (const auto& p : pred) inter += gold_set.count(p);
    const double i = static_cast<double>(inter);
    const double uni = static_cast<double>(pred.size() + gold.size() - inter);
    SetMetrics m;
    m.jaccard = i / uni;
    m.precision = pred.empty() ? 0.0 : i / static_cast<double>(pred.size());
    m.recall = i / static_cast<double>(gold.size());
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

double ddi_rate(std::span<const std::string> predicted, std::span<const std::string> concomitant,
                const KGStore& store) {
    std::vector<std::string> all(predicted.begin(), predicted.end());
    all.insert(all.end(), concomitant.begin(), concomitant.end());
    auto u = unique_in_order(all);
    for (const auto& id : u) store.drug(id);
    if (u.size() < 2) return 0.0;
    std::size_t pairs = 0, bad = 0;
    for (std::size_t a = 0; a < u.size(); ++a)
        for (std::size_t b = a + 1; b < u.size(); ++b) {
            ++pairs;
            if (store.has_ddi(u[a], u[b])) ++bad;
        }
    return static_cast<double>(bad) / static_cast<double>(pairs);
}

double hit_at_1(std::span<const std::string> ranking, std::span<const std::string> truth) {
    if (ranking.empty()) return 0.0;
    for (const auto& t : truth)
        if (t == ranking.front()) return 1.0;
    return 0.0;
}

double average_precision(std::span<const std::string> ranking, std::span<const std::string> truth) {
    auto gold = unique_in_order(truth);
    if (gold.empty()) return 0.0;
    std::unordered_set<std::string> gold_set(gold.begin(), gold.end());
    std::unordered_set<std::string> seen;
    double hits = 0.0, sum = 0.0, rank = 0.0;
    for (const auto& r : ranking) {
        if (!seen.insert(r).second) continue;
        rank += 1.0;
        if (gold_set.contains(r)) {
            hits += 1.0;
            sum += hits / rank;
        }
    }
    return sum / static_cast<double>(gold.size());
}

MetricMeans mean_of(std::span<const PatientMetrics> rows) {
    MetricMeans m;
    if (rows.empty()) return m;
    for (const auto& r : rows) {
        m.jaccard += r.jaccard;
        m.precision += r.precision;
        m.recall += r.recall;
        m.f1 += r.f1;
        m.ddi += r.ddi;
        m.hit1 += r.hit1;
        m.prauc += r.prauc;
    }
    const double n = static_cast<double>(rows.size());
    m.jaccard /= n;
    m.precision /= n;
    m.recall /= n;
    m.f1 /= n;
    m.ddi /= n;
    m.hit1 /= n;
    m.prauc /= n;
    return m;
}

EvalResult evaluate(std::span<const PatientEHR> patients, const RankingFn& rank, const KGStore& store,
                    std::size_t k) {
    EvalResult r;
    r.k = k;
    for (const auto& p : patients) {
        auto ranking = unique_in_order(rank(p));
        std::vector<std::string> top(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(
                                                                             std::min(k, ranking.size())));
        auto sm = set_metrics(top, p.ground_truth_drugs);
        PatientMetrics pm;
        pm.patient_id = p.id;
        pm.jaccard = sm.jaccard;
        pm.precision = sm.precision;
        pm.recall = sm.recall;
        pm.f1 = sm.f1;
        pm.ddi = ddi_rate(top, p.concomitant_drugs, store);
        pm.hit1 = hit_at_1(ranking, p.ground_truth_drugs);
        pm.prauc = average_precision(ranking, p.ground_truth_drugs);
        pm.predicted = std::move(top);
        r.per_patient.push_back(std::move(pm));
    }
    r.means = mean_of(r.per_patient);
    return r;
}

json to_json(const EvalResult& r) {
    json rows = json::array();
    for (const auto& p : r.per_patient)
        rows.push_back({{"patient_id", p.patient_id},
                        {"jaccard", p.jaccard},
                        {"precision", p.precision},
                        {"recall", p.recall},
                        {"f1", p.f1},
                        {"ddi", p.ddi},
                        {"hit1", p.hit1},
                        {"prauc", p.prauc},
                        {"predicted", p.predicted}});
    return {{"k", r.k},
            {"count", r.count()},
            {"means",
             {{"jaccard", r.means.jaccard},
              {"precision", r.means.precision},
              {"recall", r.means.recall},
              {"f1", r.means.f1},
              {"ddi", r.means.ddi},
              {"hit1", r.means.hit1},
              {"prauc", r.means.prauc}}},
            {"per_patient", rows}};
}

std::string format_table(const EvalResult& r, const std::string& title) {
    char buf[256];
    std::ostringstream out;
    if (!title.empty()) out << title << '\n';
    std::snprintf(buf, sizeof buf, "%-8s %-8s %-8s %-8s %-8s %-8s %-8s\n", "Jaccard", "P", "R", "F1", "DDI", "Hit@1",
                  "PRAUC");
    out << buf;
    std::snprintf(buf, sizeof buf, "%-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f %-8.4f\n", r.means.jaccard,
                  r.means.precision, r.means.recall, r.means.f1, r.means.ddi, r.means.hit1, r.means.prauc);
    out << buf;
    out << "patients: " << r.count() << ", top-" << r.k << '\n';
    return out.str();
}

void write_per_patient_csv(const EvalResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path.string());
    out << "patient_id,jaccard,precision,recall,f1,ddi,hit1,prauc\n";
    char buf[512];
    for (const auto& p : r.per_patient) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", p.jaccard, p.precision, p.recall,
                      p.f1, p.ddi, p.hit1, p.prauc);
        out << p.patient_id << ',' << buf << '\n';
    }
}

std::vector<PatientMetrics> read_per_patient_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<PatientMetrics> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        PatientMetrics p;
        std::string cell;
        std::getline(fields, p.patient_id, ',');
        double* targets[] = {&p.jaccard, &p.precision, &p.recall, &p.f1, &p.ddi, &p.hit1, &p.prauc};
        for (double* t : targets) {
            if (!std::getline(fields, cell, ',')) throw ParseError("missing column", line_no);
            try {
                *t = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError("bad number \"" + cell + "\"", line_no);
            }
        }
        rows.push_back(std::move(p));
    }
    return rows;
}

}  // namespace tracedr
