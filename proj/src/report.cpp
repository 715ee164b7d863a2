//===- report.cpp - leak report serialization ------------------------------===//

#include <sstream>

#include "enclave_taint/tracker.hpp"
#include "json.hpp"

namespace etaint {

using ordered_json = nlohmann::ordered_json;

const char* sink_kind(const ValueFlowGraph& vfg, const TaintSink& sink) {
    const VfgNode& n = vfg.nodes[sink.node];
    if (n.kind == VfgKind::ActualParam) return "ocall-in-arg";
    return n.is_memcpy ? "memcpy" : "store";
}

namespace {

std::string node_str(const ValueFlowGraph& vfg, uint32_t id) {
    return "n" + std::to_string(id) + ":" + vfg.nodes[id].label;
}

std::string sink_function(const SirModule& m, const ValueFlowGraph& vfg,
                          const TaintSink& sink) {
    uint32_t f = vfg.nodes[sink.node].func;
    return f != kNoFunc ? m.functions[f].name : "?";
}

} // namespace

BarrierConfig BarrierConfig::from_json_text(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    BarrierConfig cfg;
    for (const auto& b : j.value("barriers", ordered_json::array()))
        cfg.barriers.push_back(b.get<std::string>());
    for (const auto& h : j.value("high_risk", ordered_json::array())) {
        HighRiskSpec spec;
        spec.function = h.at("function").get<std::string>();
        const auto& p = h.at("param");
        if (p.is_string() && p.get<std::string>() == "return")
            spec.param = kReturnIndex;
        else
            spec.param = p.get<int>();
        std::string role = h.at("role").get<std::string>();
        if (role == "key") spec.role = HighRiskRole::Key;
        else if (role == "plaintext") spec.role = HighRiskRole::Plaintext;
        else if (role == "decrypted") spec.role = HighRiskRole::Decrypted;
        else throw std::runtime_error("unknown high-risk role '" + role + "'");
        cfg.high_risk.push_back(std::move(spec));
    }
    return cfg;
}

std::string emit_report_json(const SirModule& m, const ValueFlowGraph& vfg,
                             const LeakReport& report) {
    ordered_json j;
    j["version"] = 1;
    j["findings"] = ordered_json::array();
    for (const LeakFinding& f : report.findings) {
        ordered_json jf;
        jf["pattern"] = to_string(f.pattern);
        jf["risk"] = f.high_risk ? "high" : "normal";
        jf["sink"] = {{"function", sink_function(m, vfg, f.sink)},
                      {"loc", f.sink.loc},
                      {"kind", sink_kind(vfg, f.sink)}};
        jf["source"] = {{"alloc", f.source_alloc}, {"loc", f.source_loc}};
        jf["path"] = ordered_json::array();
        for (uint32_t id : f.path)
            jf["path"].push_back(
                {{"node", node_str(vfg, id)}, {"loc", vfg.nodes[id].loc}});
        jf["notes"] = f.notes;
        j["findings"].push_back(std::move(jf));
    }
    j["summary"] = {{"P1", report.count(LeakPattern::P1)},
                    {"P2", report.count(LeakPattern::P2)},
                    {"P3", report.count(LeakPattern::P3)},
                    {"P4", report.count(LeakPattern::P4)},
                    {"P5", report.count(LeakPattern::P5)},
                    {"high", report.high_count()},
                    {"total", report.findings.size()}};
    j["diagnostics"] = report.diagnostics;
    return j.dump(2) + "\n";
}

std::string emit_report_text(const SirModule& m, const ValueFlowGraph& vfg,
                             const LeakReport& report) {
    std::ostringstream out;
    out << "leak report: " << report.findings.size() << " finding"
        << (report.findings.size() == 1 ? "" : "s") << " (" << report.high_count()
        << " high risk)\n";
    for (const LeakFinding& f : report.findings) {
        out << "[" << (f.high_risk ? "high" : "norm") << "] "
            << to_string(f.pattern) << " " << sink_kind(vfg, f.sink) << " at "
            << f.sink.loc << " in " << sink_function(m, vfg, f.sink) << "\n";
        out << "    source: " << f.source_alloc << " (" << f.source_loc << ")\n";
        out << "    path:   ";
        for (size_t i = 0; i < f.path.size(); ++i) {
            if (i) out << " -> ";
            out << node_str(vfg, f.path[i]);
        }
        out << "\n";
        for (const auto& note : f.notes) out << "    note:   " << note << "\n";
    }
    if (!report.diagnostics.empty()) {
        out << "diagnostics:\n";
        for (const auto& d : report.diagnostics) out << "  " << d << "\n";
    }
    return out.str();
}

} // namespace etaint
