#include "triphase/metrics.hpp"

#include "triphase/csv.hpp"
#include "triphase/errors.hpp"

#include <cmath>
#include <map>

namespace triphase {

MetricsTable reduce_raws(const std::vector<RawEstimate>& raws, double truth1, double truth2) {
    if (raws.empty()) throw SchemaError("no raw estimates to reduce");

    std::vector<std::string> order;
    std::map<std::string, std::vector<const RawEstimate*>> by_est;
    for (const auto& r : raws) {
        auto [it, inserted] = by_est.try_emplace(r.estimator);
        if (inserted) order.push_back(r.estimator);
        it->second.push_back(&r);
    }

    MetricsTable m;
    for (const auto& est : order) {
        const auto& rows = by_est[est];
        int failures = 0;
        for (const auto* r : rows)
            if (r->status != "ok") ++failures;
        for (int c = 0; c < 2; ++c) {
            const double truth = c == 0 ? truth1 : truth2;
            double sum = 0, n = 0;
            for (const auto* r : rows) {
                if (r->status != "ok") continue;
                sum += (c == 0 ? r->beta1 : r->beta2);
                n += 1;
            }
            MetricsRow out;
            out.estimator = est;
            out.coef = c == 0 ? "beta1" : "beta2";
            out.n_failures = failures;
            if (n > 0) {
                const double mean = sum / n;
                double ss = 0, se2 = 0;
                for (const auto* r : rows) {
                    if (r->status != "ok") continue;
                    const double v = (c == 0 ? r->beta1 : r->beta2);
                    ss += (v - mean) * (v - mean);
                    se2 += (v - truth) * (v - truth);
                }
                out.bias = mean - truth;
                out.variance = ss / n;
                out.mse = se2 / n;
                out.sq_bias_share = out.mse > 0 ? (out.bias * out.bias) / out.mse : 0.0;
            }
            m.rows.push_back(std::move(out));
        }
    }
    return m;
}

std::string metrics_to_csv(const MetricsTable& m) {
    std::string out = "estimator,coef,bias,variance,mse,sq_bias_share,n_failures\n";
    for (const auto& r : m.rows) {
        out += join_csv({r.estimator, r.coef, format_double(r.bias), format_double(r.variance),
                         format_double(r.mse), format_double(r.sq_bias_share),
                         std::to_string(r.n_failures)});
        out.push_back('\n');
    }
    return out;
}

std::string raws_to_csv(const std::vector<RawEstimate>& raws, double truth1, double truth2) {
    std::string out =
        "#% truth " + format_double(truth1) + " " + format_double(truth2) + "\n";
    out += "replicate,estimator,alpha,beta1,se1,beta2,se2,status\n";
    for (const auto& r : raws) {
        out += join_csv({std::to_string(r.replicate), r.estimator, format_double(r.alpha),
                         format_double(r.beta1), format_double(r.se1), format_double(r.beta2),
                         format_double(r.se2), r.status});
        out.push_back('\n');
    }
    return out;
}

RawsFile read_raws_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    RawsFile f;
    bool have_truth = false;
    for (const auto& m : t.meta) {
        std::string head = m.substr(0, 6);
        if (head == "truth ") {
            const auto sp = m.find(' ', 6);
            if (sp == std::string::npos) throw SchemaError("malformed truth metadata");
            f.truth1 = parse_double(m.substr(6, sp - 6), "truth1");
            f.truth2 = parse_double(m.substr(sp + 1), "truth2");
            have_truth = true;
        }
    }
    if (!have_truth) throw SchemaError("raw estimates file lacks '#% truth' metadata");

    const int c_rep = t.column("replicate"), c_est = t.column("estimator"),
              c_a = t.column("alpha"), c_b1 = t.column("beta1"), c_s1 = t.column("se1"),
              c_b2 = t.column("beta2"), c_s2 = t.column("se2"), c_st = t.column("status");
    if (c_rep < 0 || c_est < 0 || c_a < 0 || c_b1 < 0 || c_s1 < 0 || c_b2 < 0 || c_s2 < 0 ||
        c_st < 0)
        throw SchemaError("raw estimates file has a wrong header");
    if (t.rows.empty()) throw SchemaError("raw estimates file has no rows");

    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string ctx = "raws row " + std::to_string(i + 2);
        RawEstimate r;
        r.replicate = static_cast<int>(parse_long(row[c_rep], ctx));
        r.estimator = row[c_est];
        r.alpha = parse_double(row[c_a], ctx);
        r.beta1 = parse_double(row[c_b1], ctx);
        r.se1 = parse_double(row[c_s1], ctx);
        r.beta2 = parse_double(row[c_b2], ctx);
        r.se2 = parse_double(row[c_s2], ctx);
        r.status = row[c_st];
        f.raws.push_back(std::move(r));
    }
    return f;
}

} // namespace triphase
