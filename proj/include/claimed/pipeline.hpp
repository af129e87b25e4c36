#ifndef CLAIMED_PIPELINE_HPP
#define CLAIMED_PIPELINE_HPP

#include "claimed/catalog.hpp"
#include "claimed/runner.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace claimed {

struct PipelineStep {
    std::string id;
    std::string operator_spec;  // name[:version]
    std::vector<std::pair<std::string, std::string>> params;
    std::vector<std::string> depends_on;
    std::optional<std::string> stream_to;
};

struct PipelineSpec {
    std::string name;
    std::vector<PipelineStep> steps;

    const PipelineStep* step(const std::string& id) const;
};

// Parses and validates the document: unique ids, known references, acyclic
// graph, and ${steps.<id>.params.<name>} references that follow the
// dependency order.
PipelineSpec load_pipeline(const std::filesystem::path& path);
PipelineSpec parse_pipeline_text(const std::string& text, const std::string& origin);

// Topological order of step indices; ties break on document order.
std::vector<std::size_t> planned_order(const PipelineSpec& spec);

enum class StepStatus { pending, running, succeeded, failed, skipped };

const char* to_string(StepStatus status);

struct StepResult {
    StepStatus status = StepStatus::pending;
    std::optional<RunResult> run;
    std::string error;  // resolution or launch failure, when no run happened
};

struct RunRecord {
    std::string run_id;
    PipelineSpec pipeline;
    std::map<std::string, StepResult> step_results;
    std::filesystem::path data_dir_host;
    std::string started_at;
    std::string finished_at;

    bool all_succeeded() const;
};

class PipelineExecutor {
public:
    PipelineExecutor(Catalog& catalog, Runner& runner, const ToolConfig& cfg,
                     RuntimeBackend backend);

    // Runs every step whose transitive dependencies succeeded, marks the
    // rest skipped, persists record.json under the run directory and always
    // returns the record (failures ride in the per-step results).
    RunRecord execute(const PipelineSpec& spec);

    // Test seam: replaces the actual operator launch, keeping resolution,
    // substitution and status bookkeeping real.
    std::function<RunResult(const PipelineStep&, const RunRequest&)> step_override;

private:
    Catalog& catalog_;
    Runner& runner_;
    const ToolConfig& cfg_;
    RuntimeBackend backend_;
};

void save_run_record(const RunRecord& record, const ToolConfig& cfg);

// Textual ${steps.<id>.params.<name>} substitution from completed steps'
// effective parameter values.
std::string substitute_refs(const std::string& value,
                            const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& completed);

} // namespace claimed

#endif
