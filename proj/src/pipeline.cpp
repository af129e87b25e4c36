#include "claimed/pipeline.hpp"

#include "claimed/errors.hpp"
#include "claimed/util.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <queue>
#include <regex>
#include <set>
#include <sstream>

namespace claimed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& origin, const std::string& why, int line = -1) {
    std::string where = origin;
    if (line >= 0) where += ":" + std::to_string(line + 1);
    throw Error(ErrorKind::parse_error, where + ": " + why);
}

std::string scalar_of(const YAML::Node& node, const std::string& origin, const std::string& what) {
    if (!node.IsScalar()) parse_fail(origin, what + " must be a scalar", node.Mark().line);
    return node.Scalar();
}

const std::regex& ref_pattern() {
    static const std::regex re(R"(\$\{steps\.([A-Za-z0-9_-]+)\.params\.([A-Za-z0-9_]+)\})");
    return re;
}

// Transitive dependency closure per step index, following depends_on edges.
std::vector<std::set<std::size_t>> transitive_deps(const PipelineSpec& spec) {
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) index_of[spec.steps[i].id] = i;

    std::vector<std::set<std::size_t>> closure(spec.steps.size());
    // planned_order is a linear extension, so each step's dependencies are
    // fully resolved before the step itself comes up.
    for (std::size_t i : planned_order(spec)) {
        for (const auto& dep : spec.steps[i].depends_on) {
            std::size_t d = index_of.at(dep);
            closure[i].insert(d);
            closure[i].insert(closure[d].begin(), closure[d].end());
        }
    }
    return closure;
}

void validate(const PipelineSpec& spec, const std::string& origin) {
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        auto [it, fresh] = index_of.emplace(spec.steps[i].id, i);
        (void)it;
        if (!fresh) parse_fail(origin, "duplicate step id '" + spec.steps[i].id + "'");
    }

    for (const auto& step : spec.steps) {
        for (const auto& dep : step.depends_on) {
            if (!index_of.count(dep)) {
                throw Error(ErrorKind::unknown_step_ref,
                            origin + ": step '" + step.id + "' depends on unknown step '" + dep +
                                "'",
                            dep);
            }
        }
        if (step.stream_to) {
            if (!index_of.count(*step.stream_to)) {
                throw Error(ErrorKind::unknown_step_ref,
                            origin + ": step '" + step.id + "' streams to unknown step '" +
                                *step.stream_to + "'",
                            *step.stream_to);
            }
            if (*step.stream_to == step.id) {
                parse_fail(origin, "step '" + step.id + "' cannot stream to itself");
            }
        }
    }

    // One incoming stream edge per consumer, and no chains (a consumer that
    // is itself a producer has no defined launch order).
    std::map<std::string, std::string> stream_consumer_of;
    for (const auto& step : spec.steps) {
        if (!step.stream_to) continue;
        auto [it, fresh] = stream_consumer_of.emplace(*step.stream_to, step.id);
        if (!fresh) {
            parse_fail(origin, "steps '" + it->second + "' and '" + step.id +
                                   "' both stream to '" + *step.stream_to + "'");
        }
    }
    for (const auto& step : spec.steps) {
        if (step.stream_to && stream_consumer_of.count(step.id)) {
            parse_fail(origin, "step '" + step.id +
                                   "' both receives and produces a stream; chains are not supported");
        }
    }

    // Cycle check: DFS over depends_on edges, reporting the closing path.
    enum class Mark { white, grey, black };
    std::vector<Mark> mark(spec.steps.size(), Mark::white);
    std::vector<std::size_t> trail;

    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        mark[i] = Mark::grey;
        trail.push_back(i);
        for (const auto& dep : spec.steps[i].depends_on) {
            std::size_t d = index_of.at(dep);
            if (mark[d] == Mark::grey) {
                std::ostringstream cycle;
                auto start = std::find(trail.begin(), trail.end(), d);
                for (auto it = start; it != trail.end(); ++it) {
                    cycle << spec.steps[*it].id << " -> ";
                }
                cycle << spec.steps[d].id;
                throw Error(ErrorKind::cycle_detected,
                            origin + ": dependency cycle: " + cycle.str());
            }
            if (mark[d] == Mark::white) visit(d);
        }
        trail.pop_back();
        mark[i] = Mark::black;
    };
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        if (mark[i] == Mark::white) visit(i);
    }

    // ${steps.<id>.params.<name>} may only look at steps that are finished
    // by construction, i.e. transitive dependencies.
    auto closure = transitive_deps(spec);
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        for (const auto& [key, value] : spec.steps[i].params) {
            (void)key;
            auto begin = std::sregex_iterator(value.begin(), value.end(), ref_pattern());
            for (auto it = begin; it != std::sregex_iterator(); ++it) {
                const std::string ref_id = (*it)[1].str();
                const std::string ref_param = (*it)[2].str();
                auto found = index_of.find(ref_id);
                if (found == index_of.end()) {
                    throw Error(ErrorKind::unknown_step_ref,
                                origin + ": step '" + spec.steps[i].id +
                                    "' references unknown step '" + ref_id + "'",
                                ref_id);
                }
                if (!closure[i].count(found->second)) {
                    throw Error(ErrorKind::unknown_step_ref,
                                origin + ": step '" + spec.steps[i].id + "' references '" +
                                    ref_id + "', which is not among its dependencies",
                                ref_id);
                }
                const auto& ref_params = spec.steps[found->second].params;
                bool has = std::any_of(ref_params.begin(), ref_params.end(),
                                       [&](const auto& kv) { return kv.first == ref_param; });
                if (!has) {
                    throw Error(ErrorKind::unknown_step_ref,
                                origin + ": step '" + ref_id + "' has no parameter '" +
                                    ref_param + "'",
                                ref_param);
                }
            }
        }
    }
}

json run_result_to_json(const RunResult& r) {
    json j;
    j["exit_code"] = r.exit_code;
    j["stdout"] = r.stdout_log;
    j["stderr"] = r.stderr_log;
    j["duration_seconds"] = r.duration_seconds;
    return j;
}

json record_to_json(const RunRecord& record) {
    json steps = json::array();
    for (const auto& step : record.pipeline.steps) {
        json s;
        s["id"] = step.id;
        s["operator"] = step.operator_spec;
        json params = json::array();
        for (const auto& [k, v] : step.params) params.push_back({{"name", k}, {"value", v}});
        s["params"] = params;
        s["depends_on"] = step.depends_on;
        if (step.stream_to) s["stream_to"] = *step.stream_to;
        steps.push_back(s);
    }

    json results = json::object();
    for (const auto& [id, res] : record.step_results) {
        json r;
        r["status"] = to_string(res.status);
        if (res.run) r["run"] = run_result_to_json(*res.run);
        if (!res.error.empty()) r["error"] = res.error;
        results[id] = r;
    }

    json j;
    j["run_id"] = record.run_id;
    j["pipeline"] = {{"name", record.pipeline.name}, {"steps", steps}};
    j["step_results"] = results;
    j["data_dir"] = record.data_dir_host.string();
    j["started_at"] = record.started_at;
    j["finished_at"] = record.finished_at;
    return j;
}

} // namespace

const PipelineStep* PipelineSpec::step(const std::string& id) const {
    for (const auto& s : steps) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

PipelineSpec load_pipeline(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io_error, "cannot read pipeline file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_pipeline_text(buffer.str(), path.string());
}

PipelineSpec parse_pipeline_text(const std::string& text, const std::string& origin) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& ex) {
        parse_fail(origin, ex.msg, ex.mark.line);
    }
    if (!root.IsMap()) parse_fail(origin, "top level must be a mapping");

    PipelineSpec spec;
    for (const auto& kv : root) {
        const std::string key = kv.first.Scalar();
        if (key == "name") {
            spec.name = scalar_of(kv.second, origin, "'name'");
        } else if (key == "steps") {
            if (!kv.second.IsSequence()) {
                parse_fail(origin, "'steps' must be a list", kv.second.Mark().line);
            }
        } else {
            parse_fail(origin, "unknown pipeline key '" + key + "'", kv.first.Mark().line);
        }
    }
    if (!root["steps"]) parse_fail(origin, "missing 'steps' list");

    for (const auto& node : root["steps"]) {
        if (!node.IsMap()) parse_fail(origin, "each step must be a mapping", node.Mark().line);
        PipelineStep step;
        bool saw_operator = false;
        for (const auto& kv : node) {
            const std::string key = kv.first.Scalar();
            if (key == "id") {
                step.id = scalar_of(kv.second, origin, "step 'id'");
            } else if (key == "operator") {
                step.operator_spec = scalar_of(kv.second, origin, "step 'operator'");
                saw_operator = true;
            } else if (key == "params") {
                if (!kv.second.IsMap()) {
                    parse_fail(origin, "step 'params' must be a mapping", kv.second.Mark().line);
                }
                for (const auto& p : kv.second) {
                    step.params.emplace_back(p.first.Scalar(),
                                             scalar_of(p.second, origin, "param value"));
                }
            } else if (key == "depends_on") {
                if (!kv.second.IsSequence()) {
                    parse_fail(origin, "step 'depends_on' must be a list", kv.second.Mark().line);
                }
                for (const auto& d : kv.second) {
                    step.depends_on.push_back(scalar_of(d, origin, "dependency id"));
                }
            } else if (key == "stream_to") {
                step.stream_to = scalar_of(kv.second, origin, "'stream_to'");
            } else {
                parse_fail(origin, "unknown step key '" + key + "'", kv.first.Mark().line);
            }
        }
        if (step.id.empty()) parse_fail(origin, "step without an 'id'", node.Mark().line);
        if (!saw_operator) {
            parse_fail(origin, "step '" + step.id + "' has no 'operator'", node.Mark().line);
        }
        spec.steps.push_back(std::move(step));
    }

    validate(spec, origin);
    return spec;
}

std::vector<std::size_t> planned_order(const PipelineSpec& spec) {
    const std::size_t n = spec.steps.size();
    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < n; ++i) index_of[spec.steps[i].id] = i;

    std::vector<std::vector<std::size_t>> dependents(n);
    std::vector<std::size_t> pending(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& dep : spec.steps[i].depends_on) {
            dependents[index_of.at(dep)].push_back(i);
            ++pending[i];
        }
    }

    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<std::size_t>> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (pending[i] == 0) ready.push(i);
    }

    std::vector<std::size_t> order;
    order.reserve(n);
    while (!ready.empty()) {
        std::size_t i = ready.top();
        ready.pop();
        order.push_back(i);
        for (std::size_t follower : dependents[i]) {
            if (--pending[follower] == 0) ready.push(follower);
        }
    }
    if (order.size() != n) {
        throw Error(ErrorKind::cycle_detected, "dependency graph contains a cycle");
    }
    return order;
}

const char* to_string(StepStatus status) {
    switch (status) {
        case StepStatus::pending: return "pending";
        case StepStatus::running: return "running";
        case StepStatus::succeeded: return "succeeded";
        case StepStatus::failed: return "failed";
        case StepStatus::skipped: return "skipped";
    }
    return "pending";
}

bool RunRecord::all_succeeded() const {
    for (const auto& [id, res] : step_results) {
        (void)id;
        if (res.status != StepStatus::succeeded) return false;
    }
    return true;
}

std::string substitute_refs(
    const std::string& value,
    const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& completed) {
    std::string out;
    auto begin = std::sregex_iterator(value.begin(), value.end(), ref_pattern());
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        out += value.substr(last, static_cast<std::size_t>(m.position(0)) - last);
        const std::string ref_id = m[1].str();
        const std::string ref_param = m[2].str();
        auto step_it = completed.find(ref_id);
        if (step_it == completed.end()) {
            throw Error(ErrorKind::unknown_step_ref,
                        "reference to step '" + ref_id + "' before it completed", ref_id);
        }
        const auto& params = step_it->second;
        auto param_it = std::find_if(params.begin(), params.end(),
                                     [&](const auto& kv) { return kv.first == ref_param; });
        if (param_it == params.end()) {
            throw Error(ErrorKind::unknown_step_ref,
                        "step '" + ref_id + "' has no parameter '" + ref_param + "'", ref_param);
        }
        out += param_it->second;
        last = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    out += value.substr(last);
    return out;
}

PipelineExecutor::PipelineExecutor(Catalog& catalog, Runner& runner, const ToolConfig& cfg,
                                   RuntimeBackend backend)
    : catalog_(catalog), runner_(runner), cfg_(cfg), backend_(backend) {}

RunRecord PipelineExecutor::execute(const PipelineSpec& spec) {
    RunRecord record;
    record.run_id = new_run_id();
    record.pipeline = spec;
    record.started_at = now_utc_iso();
    record.data_dir_host = Runner::provision_data_dir(cfg_, record.run_id);
    for (const auto& step : spec.steps) {
        record.step_results[step.id].status = StepStatus::pending;
    }

    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) index_of[spec.steps[i].id] = i;
    auto closure = transitive_deps(spec);

    // Streaming pairs collapse into one scheduling unit launched together.
    std::map<std::size_t, std::size_t> consumer_of;  // producer -> consumer
    std::set<std::size_t> pair_consumers;
    for (std::size_t i = 0; i < spec.steps.size(); ++i) {
        if (spec.steps[i].stream_to) {
            std::size_t c = index_of.at(*spec.steps[i].stream_to);
            consumer_of[i] = c;
            pair_consumers.insert(c);
        }
    }

    std::map<std::string, std::vector<std::pair<std::string, std::string>>> completed;
    std::set<std::size_t> failed_steps;

    auto transitively_failed = [&](std::size_t i) {
        return std::any_of(closure[i].begin(), closure[i].end(),
                           [&](std::size_t d) { return failed_steps.count(d) > 0; });
    };

    auto make_request = [&](const PipelineStep& step, StepResult& result,
                            StreamRole role) -> std::optional<RunRequest> {
        RunRequest req;
        try {
            req.entry = catalog_.resolve(step.operator_spec, cfg_.image_prefix);
            for (const auto& [k, v] : step.params) {
                req.params.emplace_back(k, substitute_refs(v, completed));
            }
        } catch (const Error& ex) {
            result.status = StepStatus::failed;
            result.error = ex.what();
            return std::nullopt;
        }
        req.data_dir_host = record.data_dir_host;
        req.backend = backend_;
        req.stream_role = role;
        return req;
    };

    auto launch = [&](const PipelineStep& step, const RunRequest& req) {
        if (step_override) return step_override(step, req);
        return runner_.run_operator(req);
    };

    auto finish_step = [&](const PipelineStep& step, StepResult& result, RunResult run) {
        bool ok = run.exit_code == 0;
        result.run = std::move(run);
        result.status = ok ? StepStatus::succeeded : StepStatus::failed;
        if (ok) {
            completed[step.id] = {};
            for (const auto& [k, v] : step.params) {
                completed[step.id].emplace_back(k, substitute_refs(v, completed));
            }
        } else {
            failed_steps.insert(index_of.at(step.id));
        }
    };

    for (std::size_t i : planned_order(spec)) {
        if (pair_consumers.count(i)) continue;  // launched with its producer

        const PipelineStep& step = spec.steps[i];
        StepResult& result = record.step_results[step.id];
        if (result.status != StepStatus::pending) continue;

        auto pair = consumer_of.find(i);
        if (pair == consumer_of.end()) {
            if (transitively_failed(i)) {
                result.status = StepStatus::skipped;
                continue;
            }
            auto req = make_request(step, result, StreamRole::none);
            if (!req) {
                failed_steps.insert(i);
                continue;
            }
            result.status = StepStatus::running;
            try {
                finish_step(step, result, launch(step, *req));
            } catch (const Error& ex) {
                result.status = StepStatus::failed;
                result.error = ex.what();
                failed_steps.insert(i);
            }
            continue;
        }

        // Producer/consumer pair.
        std::size_t c = pair->second;
        const PipelineStep& consumer_step = spec.steps[c];
        StepResult& consumer_result = record.step_results[consumer_step.id];
        if (transitively_failed(i) || transitively_failed(c)) {
            result.status = StepStatus::skipped;
            consumer_result.status = StepStatus::skipped;
            continue;
        }
        auto producer_req = make_request(step, result, StreamRole::producer);
        if (!producer_req) {
            failed_steps.insert(i);
            consumer_result.status = StepStatus::skipped;
            continue;
        }
        auto consumer_req = make_request(consumer_step, consumer_result, StreamRole::consumer);
        if (!consumer_req) {
            failed_steps.insert(c);
            result.status = StepStatus::skipped;
            continue;
        }
        result.status = StepStatus::running;
        consumer_result.status = StepStatus::running;
        try {
            if (step_override) {
                finish_step(step, result, step_override(step, *producer_req));
                finish_step(consumer_step, consumer_result, step_override(consumer_step, *consumer_req));
            } else {
                auto [producer_run, consumer_run] =
                    runner_.bridge_stream(*producer_req, *consumer_req);
                finish_step(step, result, std::move(producer_run));
                finish_step(consumer_step, consumer_result, std::move(consumer_run));
            }
        } catch (const Error& ex) {
            result.status = StepStatus::failed;
            result.error = ex.what();
            consumer_result.status = StepStatus::failed;
            consumer_result.error = ex.what();
            failed_steps.insert(i);
            failed_steps.insert(c);
        }
    }

    record.finished_at = now_utc_iso();
    save_run_record(record, cfg_);
    return record;
}

void save_run_record(const RunRecord& record, const ToolConfig& cfg) {
    fs::path dir = cfg.runs_dir() / record.run_id;
    fs::create_directories(dir);
    std::ofstream out(dir / "record.json", std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorKind::io_error, "cannot write run record under " + dir.string());
    }
    out << record_to_json(record).dump(2) << "\n";
}

} // namespace claimed
